//! Study drivers shared by the command-line tool and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{empirical_pmf, ibu_run, IbuConfig};
use crate::geo::{plant_island, DistanceMatrix, GridSpace};
use crate::markov::{
    enumerate_simplex, estimate_transition, hitting_time_check, simulate_occupancy, stationary_distribution,
    stationary_from, HittingRow, SimplexMesh, Stationarity, TransitionEstimate,
};
use crate::mechanisms::{ba_run, laplace_channel, verify_geo_ind, BaConfig};
use crate::metrics::{avg_distortion, emd, mutual_information, tv_distance};
use crate::privic::{privic_run, PrivicConfig, PrivicTrace, TableRow, TruthSampler};
use crate::prob::{derive_seed, obfuscate, uniform_channel, uniform_pmf, Channel, Pmf};

/// Weight of the uniform component mixed into priors with empty cells
/// before they are handed to BA.
pub const PRIOR_SMOOTHING: f64 = 1e-6;

fn ba_prior(p: &Pmf) -> Result<Pmf> {
    if p.is_full_support() {
        Ok(p.clone())
    } else {
        p.smoothed(PRIOR_SMOOTHING)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Ba,
    Laplace,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Ba => "ba",
            Mechanism::Laplace => "laplace",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n: usize,
    /// Iteration limits for BA; the loss parameter is taken from `betas`.
    pub ba: BaConfig,
    pub ibu: IbuConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub mechanism: Mechanism,
    pub beta: f64,
    /// Laplace level; twice the loss parameter.
    pub epsilon: f64,
    pub seed: u64,
    pub emd_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub mechanism: Mechanism,
    pub beta: f64,
    pub epsilon: f64,
    pub epsilon_audit: Option<f64>,
    pub avg_distortion_km: f64,
    pub mi_nats: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub channels: Vec<ChannelRow>,
}

impl Comparison {
    pub fn median_emd(&self, mechanism: Mechanism, beta: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.mechanism == mechanism && r.beta == beta)
            .map(|r| r.emd_km)
            .collect();
        median(&mut v)
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// BA against the truth prior versus Laplace at the matched level `2 beta`:
/// each seed draws one set of true locations, obfuscates it with both
/// channels, estimates with IBU from uniform and scores the estimate by EMD
/// to the empirical distribution of the true locations.
pub fn compare_mechanisms(sampler: &TruthSampler, dist: &DistanceMatrix, cfg: &CompareConfig) -> Result<Comparison> {
    if cfg.seeds.is_empty() || cfg.n == 0 {
        return Err(Error::Config("need at least one seed and one sample".into()));
    }
    cfg.ibu.validate()?;
    let m = dist.size();
    let prior = ba_prior(&sampler.truth(m)?)?;
    let theta0 = uniform_pmf(m)?;
    let init = uniform_channel(m)?;
    let mut rows = Vec::new();
    let mut channels = Vec::new();
    for &beta in &cfg.betas {
        let epsilon = 2.0 * beta;
        let ba = ba_run(&prior, &init, &BaConfig { beta, ..cfg.ba }, dist)?;
        let lap = laplace_channel(epsilon, dist)?;
        channels.push(ChannelRow {
            mechanism: Mechanism::Ba,
            beta,
            epsilon,
            epsilon_audit: Some(ba.epsilon_audit(dist)?),
            avg_distortion_km: ba.achieved_avg_distortion,
            mi_nats: ba.achieved_mi,
        });
        channels.push(ChannelRow {
            mechanism: Mechanism::Laplace,
            beta,
            epsilon,
            epsilon_audit: verify_geo_ind(&lap, dist)?.epsilon(),
            avg_distortion_km: avg_distortion(&prior, &lap, dist)?,
            mi_nats: mutual_information(&prior, &lap)?,
        });
        let mechs: [(Mechanism, &Channel); 2] = [(Mechanism::Ba, &ba.channel), (Mechanism::Laplace, &lap)];
        for &seed in &cfg.seeds {
            let truth_samples = sampler.draw(cfg.n, derive_seed(seed, 0));
            let truth = empirical_pmf(&truth_samples, m)?;
            for (k, (mechanism, channel)) in mechs.iter().enumerate() {
                let noisy = obfuscate(&truth_samples, channel, derive_seed(seed, 1 + k as u64))?;
                let q = empirical_pmf(&noisy, m)?;
                let est = ibu_run(&theta0, channel, &q, &cfg.ibu)?.estimate;
                rows.push(CompareRow {
                    mechanism: *mechanism,
                    beta,
                    epsilon,
                    seed,
                    emd_km: emd(&est, &truth, dist)?.0,
                });
            }
        }
        log::info!("compared mechanisms at beta {beta}");
    }
    Ok(Comparison { rows, channels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    /// `A` for the isolated cell, `B` for the dense one.
    pub point: char,
    pub source_cell: usize,
    pub cell: usize,
    pub row: usize,
    pub col: usize,
    pub lat: f64,
    pub lon: f64,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticSummary {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub point: char,
    pub source_cell: usize,
    pub argmax_cell: usize,
    pub self_prob: f64,
    pub row_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticDemo {
    pub prior: Pmf,
    pub heatmap: Vec<HeatmapCell>,
    pub summary: Vec<ElasticSummary>,
}

pub const ELASTIC_EPSILONS: [f64; 4] = [0.4, 1.2, 1.6, 2.0];

/// Empties the neighbourhood of `vulnerable` into it, then for each level
/// `epsilon` records the obfuscation rows of `vulnerable` and `strong` under
/// BA (loss `epsilon / 2`) and Laplace (`epsilon`).
pub fn elastic_demo(
    grid: &GridSpace,
    prior: &Pmf,
    vulnerable: usize,
    strong: usize,
    radius_cells: usize,
    epsilons: &[f64],
    ba: &BaConfig,
) -> Result<ElasticDemo> {
    let m = grid.cell_count();
    if strong >= m {
        return Err(Error::domain(format!("cell {strong} out of range")));
    }
    let island = plant_island(prior, grid, vulnerable, radius_cells)?;
    let ba_input = ba_prior(&island)?;
    let dist = grid.dist();
    let init = uniform_channel(m)?;
    let mut heatmap = Vec::new();
    let mut summary = Vec::new();
    for &epsilon in epsilons {
        let beta = epsilon / 2.0;
        let ba_ch = ba_run(&ba_input, &init, &BaConfig { beta, ..*ba }, dist)?.channel;
        let lap = laplace_channel(epsilon, dist)?;
        for (mechanism, ch) in [(Mechanism::Ba, &ba_ch), (Mechanism::Laplace, &lap)] {
            for (point, source) in [('A', vulnerable), ('B', strong)] {
                let row = ch.row(source);
                for (cell, &prob) in row.iter().enumerate() {
                    let (r, c) = grid.row_col(cell);
                    let (lat, lon) = grid.centroid_latlon(cell);
                    heatmap.push(HeatmapCell {
                        mechanism,
                        epsilon,
                        point,
                        source_cell: source,
                        cell,
                        row: r,
                        col: c,
                        lat,
                        lon,
                        prob,
                    });
                }
                summary.push(ElasticSummary {
                    mechanism,
                    epsilon,
                    point,
                    source_cell: source,
                    argmax_cell: Pmf::new(row.to_vec())?.argmax(),
                    self_prob: row[source],
                    row_sum: row.iter().sum(),
                });
            }
        }
    }
    Ok(ElasticDemo {
        prior: island,
        heatmap,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivicRun {
    pub beta: f64,
    pub seed: u64,
    /// 1-based position of `seed` in the seed list.
    pub round: usize,
    pub trace: PrivicTrace,
}

impl PrivicRun {
    pub fn table(&self) -> Vec<TableRow> {
        self.trace.table_rows(self.round)
    }
}

/// One PRIVIC run per (beta, seed) from the uniform estimate.
pub fn privic_study(
    sampler: &TruthSampler,
    dist: &DistanceMatrix,
    template: &PrivicConfig,
    betas: &[f64],
    seeds: &[u64],
) -> Result<Vec<PrivicRun>> {
    let m = dist.size();
    let truth = sampler.truth(m)?;
    let theta0 = uniform_pmf(m)?;
    let mut runs = Vec::new();
    for &beta in betas {
        for (i, &seed) in seeds.iter().enumerate() {
            let cfg = PrivicConfig {
                beta,
                seed,
                ba: BaConfig { beta, ..template.ba },
                ..template.clone()
            };
            let trace = privic_run(&theta0, sampler, &cfg, dist, Some(&truth))?;
            log::info!("PRIVIC beta {beta} seed {seed} done");
            runs.push(PrivicRun {
                beta,
                seed,
                round: i + 1,
                trace,
            });
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    pub m: usize,
    pub k: usize,
    /// Spacing of the cells, which sit on a line, km.
    pub spacing_km: f64,
    pub truth: Option<Pmf>,
    pub privic: PrivicConfig,
    pub trials: usize,
    pub excursions: usize,
    pub occupancy_steps: usize,
    pub seed: u64,
}

impl MarkovConfig {
    /// Two cells 1 km apart, mesh step 1/4, one PRIVIC cycle of 8 BA and 10
    /// IBU iterations with 50 samples at loss 1.
    pub fn desk_default() -> Self {
        MarkovConfig {
            m: 2,
            k: 4,
            spacing_km: 1.0,
            truth: None,
            privic: PrivicConfig::new(1.0, 1, 50, 0).with_fixed_iterations(8, 10),
            trials: 2000,
            excursions: crate::markov::DEFAULT_EXCURSIONS,
            occupancy_steps: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub mesh: SimplexMesh,
    pub truth: Pmf,
    pub phi: TransitionEstimate,
    pub min_phi: f64,
    pub stationarity: Stationarity,
    /// `|psi phi - psi|_1`.
    pub invariance_gap: Option<f64>,
    /// L1 gap between the stationary vectors reached from the uniform start
    /// and from a point mass on the first state.
    pub two_start_gap: Option<f64>,
    pub occupancy_tv: Option<f64>,
    pub hitting: Vec<HittingRow>,
    /// Every statement here is Monte-Carlo evidence about the exact chain.
    pub note: String,
}

/// Mesh enumeration, transition estimation, stationary law and the
/// occupancy and return-time checks.
pub fn markov_study(cfg: &MarkovConfig) -> Result<MarkovReport> {
    let mesh = enumerate_simplex(cfg.m, cfg.k)?;
    let dist = DistanceMatrix::line(cfg.m, cfg.spacing_km);
    let truth = match &cfg.truth {
        Some(t) => t.clone(),
        None => uniform_pmf(cfg.m)?,
    };
    let phi = estimate_transition(&mesh, &cfg.privic, &truth, &dist, cfg.trials, cfg.seed)?;
    let stationarity = stationary_distribution(&phi)?;
    let mut report = MarkovReport {
        min_phi: phi.min_entry(),
        mesh,
        truth,
        phi,
        stationarity,
        invariance_gap: None,
        two_start_gap: None,
        occupancy_tv: None,
        hitting: Vec::new(),
        note:
            "transition probabilities are Monte-Carlo frequencies; positivity and stationarity are statistical evidence"
                .into(),
    };
    let Some(psi) = report.stationarity.psi().cloned() else {
        return Ok(report);
    };
    let moved = report.phi.apply(psi.as_slice());
    report.invariance_gap = Some(moved.iter().zip(psi.as_slice()).map(|(a, b)| (a - b).abs()).sum());
    let mut corner = vec![0.0; report.phi.states()];
    corner[0] = 1.0;
    if let Some(other) = stationary_from(&report.phi, &corner)?.psi() {
        report.two_start_gap = Some(other.l1(&psi));
    }
    let occ = simulate_occupancy(&report.phi, 0, cfg.occupancy_steps, derive_seed(cfg.seed, u64::MAX))?;
    report.occupancy_tv = Some(tv_distance(&occ, &psi)?);
    if report.phi.is_positive() {
        report.hitting = hitting_time_check(&report.phi, &psi, cfg.excursions, derive_seed(cfg.seed, u64::MAX - 1))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{build_grid, BoundingBox};
    use crate::synthetic::PriorSpec;

    fn small_grid() -> (GridSpace, Pmf) {
        let grid = build_grid(BoundingBox::paris(), 4, 5).unwrap();
        let prior = PriorSpec::ParisLike.on_grid(&grid).unwrap();
        (grid, prior)
    }

    #[test]
    fn compare_row_count_and_columns() {
        let (grid, prior) = small_grid();
        let cfg = CompareConfig {
            betas: vec![0.5, 5.0],
            seeds: vec![1, 2, 3],
            n: 500,
            ba: BaConfig::new(0.0),
            ibu: IbuConfig::new(),
        };
        let out = compare_mechanisms(&TruthSampler::Distribution(prior), grid.dist(), &cfg).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 3);
        assert_eq!(out.channels.len(), 4);
        for c in out.channels.iter().filter(|c| c.mechanism == Mechanism::Ba) {
            assert!(c.epsilon_audit.unwrap() <= 2.0 * c.beta + 1e-9);
        }
        assert!(out.median_emd(Mechanism::Ba, 5.0).is_some());
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 10.0]), Some(2.5));
    }

    #[test]
    fn elastic_rows() {
        let (grid, prior) = small_grid();
        let a = grid.index(3, 4);
        let b = prior.argmax();
        let demo = elastic_demo(&grid, &prior, a, b, 1, &[0.4, 2.0], &BaConfig::new(0.0)).unwrap();
        assert_eq!(demo.heatmap.len(), 2 * 2 * 2 * 20);
        for s in &demo.summary {
            assert!((s.row_sum - 1.0).abs() < 1e-12);
            if s.mechanism == Mechanism::Laplace {
                assert_eq!(s.argmax_cell, s.source_cell);
            }
        }
        let ba_a = demo
            .summary
            .iter()
            .find(|s| s.mechanism == Mechanism::Ba && s.point == 'A' && s.epsilon == 0.4)
            .unwrap();
        assert_ne!(ba_a.argmax_cell, a);
    }

    #[test]
    fn privic_study_shapes() {
        let (grid, prior) = small_grid();
        let template = PrivicConfig::new(1.0, 3, 200, 0).with_fixed_iterations(5, 5);
        let runs = privic_study(
            &TruthSampler::Distribution(prior.clone()),
            grid.dist(),
            &template,
            &[0.5, 1.0],
            &[7, 8],
        )
        .unwrap();
        assert_eq!(runs.len(), 4);
        let t = runs[1].table();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].round, 2);
        let first = emd(&uniform_pmf(20).unwrap(), &prior, grid.dist()).unwrap().0;
        assert_eq!(t[0].emd_km, first);
    }

    #[test]
    fn markov_zero_beta_is_non_unique() {
        let mut cfg = MarkovConfig::desk_default();
        cfg.privic = PrivicConfig::new(0.0, 1, 50, 0);
        cfg.trials = 50;
        let r = markov_study(&cfg).unwrap();
        assert_eq!(r.mesh.len(), 3);
        assert!(matches!(r.stationarity, Stationarity::NonUnique { closed_classes: 3 }));
        assert!(r.hitting.is_empty());
    }
}
