//! Declarative run configuration. A TOML file supplies defaults and
//! command-line flags override it.

use std::fs;
use std::path::{Path, PathBuf};

use privic_core::estimation::IbuConfig;
use privic_core::mechanisms::BaConfig;
use privic_core::{BoundingBox, Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub betas: Option<Vec<f64>>,
    pub cycles: Option<usize>,
    pub n: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub ba: IterSection,
    #[serde(default)]
    pub ibu: IterSection,
    #[serde(default)]
    pub elastic: ElasticSection,
    #[serde(default)]
    pub markov: MarkovSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    /// `[lat_min, lat_max, lon_min, lon_max]`.
    pub bbox: Option<[f64; 4]>,
    /// `"RxC"`, rows by columns.
    pub grid: Option<String>,
    pub synthetic: Option<String>,
    pub mode: Option<DatasetMode>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    /// Draw `n` check-ins with replacement every cycle.
    #[default]
    Resample,
    /// Use every check-in every cycle.
    Fixed,
}

/// Iteration control: `iters` fixes the count, otherwise `max_iters` and
/// `tol` drive a tolerance stop.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterSection {
    pub iters: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

impl IterSection {
    pub fn is_empty(&self) -> bool {
        self.iters.is_none() && self.max_iters.is_none() && self.tol.is_none()
    }

    pub fn ba(&self) -> BaConfig {
        match self.iters {
            Some(i) => BaConfig::fixed(0.0, i),
            None => {
                let d = BaConfig::new(0.0);
                BaConfig {
                    max_iters: self.max_iters.unwrap_or(d.max_iters),
                    tol: self.tol.unwrap_or(d.tol),
                    ..d
                }
            }
        }
    }

    pub fn ibu(&self) -> IbuConfig {
        match self.iters {
            Some(i) => IbuConfig::fixed(i),
            None => {
                let d = IbuConfig::new();
                IbuConfig {
                    max_iters: self.max_iters.unwrap_or(d.max_iters),
                    tol: self.tol.unwrap_or(d.tol),
                    ..d
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticSection {
    pub vulnerable: Option<usize>,
    pub strong: Option<usize>,
    pub radius: Option<usize>,
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub spacing_km: Option<f64>,
    pub truth: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub excursions: Option<usize>,
    pub occupancy_steps: Option<usize>,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `"12x16"` as (rows, cols).
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid '{s}' is not of the form RxC"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    if rows == 0 || cols == 0 {
        return Err(Error::Config("grid dimensions must be positive".into()));
    }
    Ok((rows, cols))
}

/// `"lat0,lat1,lon0,lon1"`.
pub fn parse_bbox(s: &str) -> Result<[f64; 4]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad bounding box '{s}'")))?;
    v.try_into()
        .map_err(|_| Error::Config(format!("bounding box '{s}' needs four numbers")))
}

pub fn bbox_from(v: [f64; 4]) -> Result<BoundingBox> {
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_bbox_strings() {
        assert_eq!(parse_grid("12x16").unwrap(), (12, 16));
        assert!(parse_grid("12").is_err());
        assert!(parse_grid("0x3").is_err());
        assert_eq!(parse_bbox("1,2,3,4").unwrap(), [1.0, 2.0, 3.0, 4.0]);
        assert!(parse_bbox("1,2,3").is_err());
    }

    #[test]
    fn file_schema() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seeds = [1, 2]
            betas = [0.5, 1.0]
            cycles = 15
            [dataset]
            synthetic = "paris"
            grid = "12x16"
            mode = "fixed"
            [ba]
            iters = 8
            [ibu]
            tol = 1e-8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.mode, Some(DatasetMode::Fixed));
        assert_eq!(cfg.ba.ba().max_iters, 8);
        assert_eq!(cfg.ibu.ibu().tol, 1e-8);
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }
}
