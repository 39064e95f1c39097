use std::path::PathBuf;

use log::{info, warn};
use privic_core::estimation::{empirical_pmf, IbuConfig};
use privic_core::experiments::{
    compare_mechanisms, elastic_demo, markov_study, privic_study, CompareConfig, MarkovConfig, ELASTIC_EPSILONS,
};
use privic_core::geo::ingest_checkins;
use privic_core::mechanisms::{ba_run, elastic_residual, laplace_channel, verify_geo_ind, BaConfig};
use privic_core::metrics::{avg_distortion, emd, mutual_information};
use privic_core::privic::{PrivicConfig, TruthSampler};
use privic_core::prob::{uniform_channel, uniform_pmf};
use privic_core::report::{ensure_dir, write_csv, write_json, MetricRow};
use privic_core::synthetic::PriorSpec;
use privic_core::{build_grid, BoundingBox, Error, GridSpace, Pmf, Result};
use serde::Serialize;

use crate::config::{self, DatasetMode, FileConfig, IterSection};
use crate::{Command, Common};

const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DEFAULT_CYCLES: usize = 15;
const DEFAULT_N: usize = 10_000;
const DEFAULT_RADIUS: usize = 2;

/// Flags merged over the configuration file.
struct Spec {
    file: FileConfig,
    common: Common,
}

impl Spec {
    fn new(common: Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => config::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Spec { file, common })
    }

    fn seeds(&self) -> Result<Vec<u64>> {
        let s = if !self.common.seeds.is_empty() {
            self.common.seeds.clone()
        } else {
            self.file.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec())
        };
        if s.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(s)
    }

    fn betas(&self, default: &[f64]) -> Result<Vec<f64>> {
        let b = if !self.common.betas.is_empty() {
            self.common.betas.clone()
        } else {
            self.file.betas.clone().unwrap_or_else(|| default.to_vec())
        };
        if b.is_empty() || b.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss values must be finite and nonnegative".into()));
        }
        Ok(b)
    }

    fn out(&self) -> PathBuf {
        self.common
            .out
            .clone()
            .or_else(|| self.file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn cycles(&self) -> usize {
        self.common.cycles.or(self.file.cycles).unwrap_or(DEFAULT_CYCLES)
    }

    fn n(&self) -> usize {
        self.common.n.or(self.file.n).unwrap_or(DEFAULT_N)
    }

    fn ba(&self, default_iters: Option<usize>) -> BaConfig {
        match self.common.ba_iters {
            Some(i) => BaConfig::fixed(0.0, i),
            None if self.file.ba.is_empty() => {
                default_iters.map_or_else(|| BaConfig::new(0.0), |i| BaConfig::fixed(0.0, i))
            }
            None => self.file.ba.ba(),
        }
    }

    fn ibu(&self, default_iters: Option<usize>) -> IbuConfig {
        match self.common.ibu_iters {
            Some(i) => IbuConfig::fixed(i),
            None if self.file.ibu.is_empty() => default_iters.map_or_else(IbuConfig::new, IbuConfig::fixed),
            None => IterSection::ibu(&self.file.ibu),
        }
    }

    fn bbox(&self) -> Result<BoundingBox> {
        match (&self.common.bbox, self.file.dataset.bbox) {
            (Some(s), _) => config::bbox_from(config::parse_bbox(s)?),
            (None, Some(v)) => config::bbox_from(v),
            (None, None) => Ok(BoundingBox::paris()),
        }
    }

    fn grid(&self) -> Result<GridSpace> {
        let (rows, cols) = match self.common.grid.as_ref().or(self.file.dataset.grid.as_ref()) {
            Some(s) => config::parse_grid(s)?,
            None => (12, 16),
        };
        build_grid(self.bbox()?, rows, cols)
    }

    fn data_path(&self) -> Option<PathBuf> {
        self.common.data.clone().or_else(|| self.file.dataset.path.clone())
    }

    fn mode(&self) -> DatasetMode {
        if self.common.fixed_dataset {
            DatasetMode::Fixed
        } else {
            self.file.dataset.mode.unwrap_or_default()
        }
    }

    /// The check-in dump when it is readable, the synthetic prior otherwise.
    fn dataset(&self) -> Result<Dataset> {
        let grid = self.grid()?;
        if let Some(path) = self.data_path() {
            if path.exists() {
                let ingest = ingest_checkins(&path, &grid.bbox)?;
                if ingest.records.is_empty() {
                    return Err(Error::Domain(format!(
                        "no check-ins of {} fall in the box",
                        path.display()
                    )));
                }
                let samples = ingest.to_samples(&grid)?;
                info!("{} check-ins on the grid", samples.len());
                let sampler = match self.mode() {
                    DatasetMode::Resample => TruthSampler::Resample(samples),
                    DatasetMode::Fixed => TruthSampler::Fixed(samples),
                };
                return Ok(Dataset {
                    grid,
                    sampler,
                    label: path.display().to_string(),
                });
            }
            warn!("dataset {} not found; using the synthetic prior", path.display());
        }
        let spec_str = self
            .common
            .synthetic
            .clone()
            .or_else(|| self.file.dataset.synthetic.clone())
            .unwrap_or_else(|| "paris".into());
        let prior = spec_str.parse::<PriorSpec>()?.on_grid(&grid)?;
        Ok(Dataset {
            grid,
            sampler: TruthSampler::Distribution(prior),
            label: format!("synthetic:{spec_str}"),
        })
    }
}

struct Dataset {
    grid: GridSpace,
    sampler: TruthSampler,
    label: String,
}

impl Dataset {
    fn truth(&self) -> Result<Pmf> {
        self.sampler.truth(self.grid.cell_count())
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(c) => ingest(Spec::new(c)?),
        Command::Compare(c) => compare(Spec::new(c)?),
        Command::Elastic {
            common,
            vulnerable,
            strong,
            radius,
            epsilons,
        } => elastic(Spec::new(common)?, vulnerable, strong, radius, epsilons),
        Command::Privic(c) => privic(Spec::new(c)?),
        Command::Markov { common, m, k, trials } => markov(Spec::new(common)?, m, k, trials),
        Command::Metrics(c) => metrics(Spec::new(c)?),
    }
}

fn prepare_out(spec: &Spec) -> Result<PathBuf> {
    let out = spec.out();
    ensure_dir(&out)?;
    Ok(out)
}

#[derive(Serialize)]
struct CellCount {
    cell: usize,
    row: usize,
    col: usize,
    lat: f64,
    lon: f64,
    count: usize,
    prob: f64,
}

fn cell_table(grid: &GridSpace, p: &Pmf, counts: Option<&[usize]>) -> Vec<CellCount> {
    (0..grid.cell_count())
        .map(|i| {
            let (row, col) = grid.row_col(i);
            let (lat, lon) = grid.centroid_latlon(i);
            CellCount {
                cell: i,
                row,
                col,
                lat,
                lon,
                count: counts.map_or(0, |c| c[i]),
                prob: p[i],
            }
        })
        .collect()
}

fn ingest(spec: Spec) -> Result<()> {
    let path = spec
        .data_path()
        .ok_or_else(|| Error::Config("ingest needs --data or dataset.path".into()))?;
    if !path.exists() {
        return Err(Error::Domain(format!("dataset {} not found", path.display())));
    }
    let grid = spec.grid()?;
    let result = ingest_checkins(&path, &grid.bbox)?;
    let samples = result.to_samples(&grid)?;
    let out = prepare_out(&spec)?;
    let mut counts = vec![0usize; grid.cell_count()];
    for &i in &samples.indices {
        counts[i] += 1;
    }
    #[derive(Serialize)]
    struct Summary {
        dataset: String,
        ingest: privic_core::geo::IngestSummary,
        grid: privic_core::geo::GridSummary,
        emd_uniform_km: Option<f64>,
    }
    let emp = (!samples.is_empty())
        .then(|| empirical_pmf(&samples, grid.cell_count()))
        .transpose()?;
    let emd_uniform_km = emp
        .as_ref()
        .map(|p| emd(&uniform_pmf(grid.cell_count())?, p, grid.dist()).map(|r| r.0))
        .transpose()?;
    write_json(
        &out.join("ingest_summary.json"),
        &Summary {
            dataset: path.display().to_string(),
            ingest: result.summary(),
            grid: grid.summary(),
            emd_uniform_km,
        },
    )?;
    if let Some(p) = emp {
        write_csv(&out.join("cell_counts.csv"), &cell_table(&grid, &p, Some(&counts)))?;
    }
    println!("{} records on the grid", samples.len());
    Ok(())
}

const COMPARE_BETAS: [f64; 10] = [0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0];

fn compare(spec: Spec) -> Result<()> {
    let data = spec.dataset()?;
    let cfg = CompareConfig {
        betas: spec.betas(&COMPARE_BETAS)?,
        seeds: spec.seeds()?,
        n: spec.n(),
        ba: spec.ba(None),
        ibu: spec.ibu(None),
    };
    let result = compare_mechanisms(&data.sampler, data.grid.dist(), &cfg)?;
    let out = prepare_out(&spec)?;
    write_csv(&out.join("compare.csv"), &result.rows)?;
    write_csv(&out.join("channels.csv"), &result.channels)?;
    println!("{} rows from {}", result.rows.len(), data.label);
    Ok(())
}

fn elastic(
    spec: Spec,
    vulnerable: Option<usize>,
    strong: Option<usize>,
    radius: Option<usize>,
    epsilons: Vec<f64>,
) -> Result<()> {
    let data = spec.dataset()?;
    let grid = &data.grid;
    let prior = data.truth()?;
    let sec = &spec.file.elastic;
    let default_vulnerable = grid.index(grid.rows.saturating_sub(3), grid.cols.saturating_sub(3));
    let vulnerable = vulnerable.or(sec.vulnerable).unwrap_or(default_vulnerable);
    let strong = strong.or(sec.strong).unwrap_or_else(|| prior.argmax());
    let radius = radius.or(sec.radius).unwrap_or(DEFAULT_RADIUS);
    let epsilons = if epsilons.is_empty() {
        sec.epsilons.clone().unwrap_or_else(|| ELASTIC_EPSILONS.to_vec())
    } else {
        epsilons
    };
    let demo = elastic_demo(grid, &prior, vulnerable, strong, radius, &epsilons, &spec.ba(None))?;
    let out = prepare_out(&spec)?;
    write_csv(&out.join("elastic_heatmap.csv"), &demo.heatmap)?;
    write_csv(&out.join("elastic_summary.csv"), &demo.summary)?;
    write_csv(&out.join("elastic_prior.csv"), &cell_table(grid, &demo.prior, None))?;
    println!("vulnerable cell {vulnerable}, strong cell {strong}");
    Ok(())
}

fn privic(spec: Spec) -> Result<()> {
    let data = spec.dataset()?;
    let betas = spec.betas(&[0.5, 1.0])?;
    let template = PrivicConfig {
        ba: spec.ba(Some(8)),
        ibu: spec.ibu(Some(10)),
        ..PrivicConfig::new(0.0, spec.cycles(), spec.n(), 0)
    };
    let runs = privic_study(&data.sampler, data.grid.dist(), &template, &betas, &spec.seeds()?)?;
    let out = prepare_out(&spec)?;
    let mut all = Vec::new();
    for run in &runs {
        let stem = format!("privic_beta{}_seed{}", run.beta, run.seed);
        write_json(&out.join(format!("{stem}.json")), &run.trace)?;
        let table = run.table();
        write_csv(&out.join(format!("{stem}.csv")), &table)?;
        all.extend(table);
    }
    write_csv(&out.join("privic_table.csv"), &all)?;
    println!("{} traces from {}", runs.len(), data.label);
    Ok(())
}

fn markov(spec: Spec, m: Option<usize>, k: Option<usize>, trials: Option<usize>) -> Result<()> {
    let sec = &spec.file.markov;
    let mut cfg = MarkovConfig::desk_default();
    cfg.m = m.or(sec.m).unwrap_or(cfg.m);
    cfg.k = k.or(sec.k).unwrap_or(cfg.k);
    cfg.trials = trials.or(sec.trials).unwrap_or(cfg.trials);
    cfg.spacing_km = sec.spacing_km.unwrap_or(cfg.spacing_km);
    cfg.excursions = sec.excursions.unwrap_or(cfg.excursions);
    cfg.occupancy_steps = sec.occupancy_steps.unwrap_or(cfg.occupancy_steps);
    cfg.truth = sec.truth.clone().map(Pmf::new).transpose()?;
    let beta = spec.betas(&[cfg.privic.beta])?[0];
    cfg.privic = PrivicConfig {
        beta,
        n_per_cycle: spec.common.n.or(spec.file.n).unwrap_or(cfg.privic.n_per_cycle),
        ba: BaConfig {
            beta,
            ..spec.ba(Some(8))
        },
        ibu: spec.ibu(Some(10)),
        ..cfg.privic
    };
    cfg.seed = spec.seeds()?[0];
    let report = markov_study(&cfg)?;
    let out = prepare_out(&spec)?;
    write_json(&out.join("markov.json"), &report)?;
    #[derive(Serialize)]
    struct Row {
        state: usize,
        psi: f64,
        inv_expected_tau: f64,
        sigma: f64,
    }
    let rows: Vec<Row> = report
        .hitting
        .iter()
        .map(|h| Row {
            state: h.state,
            psi: h.psi,
            inv_expected_tau: h.inv_expected_tau,
            sigma: h.sigma,
        })
        .collect();
    write_csv(&out.join("hitting_times.csv"), &rows)?;
    match report.stationarity.psi() {
        Some(_) => println!(
            "{} states, min transition probability {}",
            report.mesh.len(),
            report.min_phi
        ),
        None => println!("{} states, stationary law not unique", report.mesh.len()),
    }
    Ok(())
}

fn metric(metric: &str, value: f64, units: &str, beta: Option<f64>, dataset: &str) -> MetricRow {
    MetricRow {
        metric: metric.into(),
        value,
        units: units.into(),
        beta,
        cycle: None,
        dataset: dataset.into(),
        seed: None,
    }
}

fn metrics(spec: Spec) -> Result<()> {
    let data = spec.dataset()?;
    let dist = data.grid.dist();
    let m = data.grid.cell_count();
    let truth = data.truth()?;
    let prior = if truth.is_full_support() {
        truth.clone()
    } else {
        truth.smoothed(privic_core::experiments::PRIOR_SMOOTHING)?
    };
    let label = data.label.as_str();
    let mut rows = vec![metric(
        "emd_uniform_to_truth",
        emd(&uniform_pmf(m)?, &truth, dist)?.0,
        "km",
        None,
        label,
    )];
    for beta in spec.betas(&[0.1, 0.5, 1.0, 2.0, 5.0])? {
        let ba = ba_run(&prior, &uniform_channel(m)?, &BaConfig { beta, ..spec.ba(None) }, dist)?;
        let resid = elastic_residual(&ba.channel, &prior, beta, dist)?;
        rows.push(metric(
            "ba_avg_distortion",
            ba.achieved_avg_distortion,
            "km",
            Some(beta),
            label,
        ));
        rows.push(metric(
            "ba_mutual_information",
            ba.achieved_mi,
            "nats",
            Some(beta),
            label,
        ));
        rows.push(metric(
            "ba_epsilon_audit",
            ba.epsilon_audit(dist)?,
            "1/km",
            Some(beta),
            label,
        ));
        rows.push(metric(
            "ba_elastic_residual",
            resid.residual,
            "probability",
            Some(beta),
            label,
        ));
        rows.push(metric(
            "ba_iterations",
            ba.iterations_used as f64,
            "count",
            Some(beta),
            label,
        ));
        let lap = laplace_channel(2.0 * beta, dist)?;
        rows.push(metric(
            "laplace_avg_distortion",
            avg_distortion(&prior, &lap, dist)?,
            "km",
            Some(beta),
            label,
        ));
        rows.push(metric(
            "laplace_mutual_information",
            mutual_information(&prior, &lap)?,
            "nats",
            Some(beta),
            label,
        ));
        if let Some(eps) = verify_geo_ind(&lap, dist)?.epsilon() {
            rows.push(metric("laplace_epsilon_audit", eps, "1/km", Some(beta), label));
        }
        rows.push(metric(
            "laplace_elastic_residual",
            elastic_residual(&lap, &prior, 2.0 * beta, dist)?.residual,
            "probability",
            Some(beta),
            label,
        ));
    }
    let out = prepare_out(&spec)?;
    write_csv(&out.join("metrics.csv"), &rows)?;
    println!("{} metrics from {}", rows.len(), label);
    Ok(())
}
