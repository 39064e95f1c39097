//! Synthetic priors for runs without a check-in dump.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{build_grid, BoundingBox, GridSpace};
use crate::prob::Pmf;

/// An isotropic Gaussian bump; the centre is in km east/north of the
/// bounding box's south-west corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub x_km: f64,
    pub y_km: f64,
    pub sigma_km: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PriorSpec {
    Uniform,
    /// Three bumps laid out like the check-in density of central Paris:
    /// a dense core with a north-western and a south-eastern lobe.
    ParisLike,
    /// Mixture of bumps plus a floor, as a fraction of the largest cell
    /// value, that keeps every cell populated.
    Bumps {
        bumps: Vec<Bump>,
        floor: f64,
    },
}

const PARIS_FLOOR: f64 = 0.0005;

// Tight enough that the EMD from the uniform pmf is close to that of the
// 10,260 Paris check-ins (about 2 km).
fn paris_bumps() -> Vec<Bump> {
    vec![
        Bump {
            x_km: 3.9,
            y_km: 2.9,
            sigma_km: 0.3,
            weight: 0.6,
        },
        Bump {
            x_km: 3.2,
            y_km: 3.4,
            sigma_km: 0.3,
            weight: 0.25,
        },
        Bump {
            x_km: 4.7,
            y_km: 2.4,
            sigma_km: 0.3,
            weight: 0.15,
        },
    ]
}

impl PriorSpec {
    /// Evaluates the prior on the centroids of `grid`.
    pub fn on_grid(&self, grid: &GridSpace) -> Result<Pmf> {
        let (bumps, floor) = match self {
            PriorSpec::Uniform => return crate::prob::uniform_pmf(grid.cell_count()),
            PriorSpec::ParisLike => (paris_bumps(), PARIS_FLOOR),
            PriorSpec::Bumps { bumps, floor } => (bumps.clone(), *floor),
        };
        if bumps.is_empty() || bumps.iter().any(|b| b.sigma_km <= 0.0 || b.weight < 0.0) {
            return Err(Error::Config("bumps need positive width and nonnegative weight".into()));
        }
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::Config(format!("floor must lie in [0, 1), got {floor}")));
        }
        let (w, h) = (grid.bbox.width_km(), grid.bbox.height_km());
        let mut values: Vec<f64> = grid
            .centroids()
            .iter()
            .map(|&(cx, cy)| {
                let (x, y) = (cx + 0.5 * w, cy + 0.5 * h);
                bumps
                    .iter()
                    .map(|b| {
                        let r2 = (x - b.x_km).powi(2) + (y - b.y_km).powi(2);
                        b.weight * (-r2 / (2.0 * b.sigma_km * b.sigma_km)).exp()
                    })
                    .sum()
            })
            .collect();
        let peak = values.iter().copied().fold(0.0, f64::max);
        values.iter_mut().for_each(|v| *v += floor * peak);
        Pmf::from_weights(values)
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// `uniform`, `paris`, or `bumps:x,y,sigma,weight;...[@floor]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform" => return Ok(PriorSpec::Uniform),
            "paris" | "paris-like" => return Ok(PriorSpec::ParisLike),
            _ => {}
        }
        let Some(body) = s.strip_prefix("bumps:") else {
            return Err(Error::Config(format!("unknown synthetic prior '{s}'")));
        };
        let (list, floor) = match body.split_once('@') {
            Some((l, f)) => (
                l,
                f.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad floor '{f}'")))?,
            ),
            None => (body, 0.0),
        };
        let bumps = list
            .split(';')
            .filter(|b| !b.trim().is_empty())
            .map(|b| {
                let v: Vec<f64> = b
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad bump '{b}'")))?;
                match v[..] {
                    [x_km, y_km, sigma_km, weight] => Ok(Bump {
                        x_km,
                        y_km,
                        sigma_km,
                        weight,
                    }),
                    _ => Err(Error::Config(format!("bump '{b}' needs 4 numbers"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PriorSpec::Bumps { bumps, floor })
    }
}

/// The 12 x 16 grid of half-kilometre cells over central Paris together
/// with the Paris-like synthetic prior on it.
pub fn paris_synthetic() -> (GridSpace, Pmf) {
    let grid = build_grid(BoundingBox::paris(), 12, 16).expect("static grid");
    let prior = PriorSpec::ParisLike.on_grid(&grid).expect("static prior");
    (grid, prior)
}
