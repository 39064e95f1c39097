//! The incremental collection loop. Each cycle builds a BA channel from the
//! current estimate (always starting BA from the uniform channel), draws
//! fresh true locations, obfuscates them with that channel, and re-estimates
//! the distribution with IBU started from the current estimate.
//!
//! Seeds: cycle `t` of a run with seed `s` uses `derive_seed(s, t)`; inside
//! a cycle, stream 0 draws the true locations and stream 1 the obfuscation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{empirical_pmf, ibu_run, IbuConfig};
use crate::geo::DistanceMatrix;
use crate::mechanisms::{ba_run, BaConfig, BaResult};
use crate::metrics::emd;
use crate::prob::{derive_seed, obfuscate, rng_from_seed, sample, uniform_channel, Pmf, SampleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivicConfig {
    pub beta: f64,
    pub cycles: usize,
    pub n_per_cycle: usize,
    pub ba: BaConfig,
    pub ibu: IbuConfig,
    pub seed: u64,
}

impl PrivicConfig {
    /// Tolerance-driven BA and IBU with their default limits.
    pub fn new(beta: f64, cycles: usize, n_per_cycle: usize, seed: u64) -> Self {
        PrivicConfig {
            beta,
            cycles,
            n_per_cycle,
            ba: BaConfig::new(beta),
            ibu: IbuConfig::new(),
            seed,
        }
    }

    /// Fixed iteration counts per cycle for BA and IBU.
    pub fn with_fixed_iterations(mut self, ba_iters: usize, ibu_iters: usize) -> Self {
        self.ba = BaConfig::fixed(self.beta, ba_iters);
        self.ibu = IbuConfig::fixed(ibu_iters);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 || self.n_per_cycle == 0 {
            return Err(Error::Config("cycles and samples per cycle must be >= 1".into()));
        }
        if self.ba.beta != self.beta {
            return Err(Error::Config(format!(
                "BA loss parameter {} disagrees with run loss parameter {}",
                self.ba.beta, self.beta
            )));
        }
        self.ba.validate()?;
        self.ibu.validate()
    }
}

/// Where a cycle's true locations come from.
#[derive(Clone, Debug)]
pub enum TruthSampler {
    /// Fresh i.i.d. draws from a known distribution.
    Distribution(Pmf),
    /// Draws with replacement from a fixed dataset.
    Resample(SampleSet),
    /// The whole dataset every cycle; only the obfuscation is redrawn.
    Fixed(SampleSet),
}

impl TruthSampler {
    pub fn draw(&self, n: usize, seed: u64) -> SampleSet {
        match self {
            TruthSampler::Distribution(p) => sample(p, n, seed),
            TruthSampler::Resample(data) => {
                use rand::Rng;
                let mut rng = rng_from_seed(seed);
                let indices = (0..n).map(|_| data.indices[rng.gen_range(0..data.len())]).collect();
                SampleSet {
                    indices,
                    seed: Some(seed),
                }
            }
            TruthSampler::Fixed(data) => data.clone(),
        }
    }

    /// The distribution the sampler draws from.
    pub fn truth(&self, m: usize) -> Result<Pmf> {
        match self {
            TruthSampler::Distribution(p) => Ok(p.clone()),
            TruthSampler::Resample(d) | TruthSampler::Fixed(d) => empirical_pmf(d, m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle index.
    pub cycle: usize,
    pub beta: f64,
    /// Tightest geo-indistinguishability level of this cycle's channel.
    pub epsilon_audit: f64,
    pub avg_distortion_km: f64,
    pub mi_nats: f64,
    pub ba_iterations: usize,
    pub ba_converged: bool,
    pub ibu_iterations: usize,
    pub ibu_converged: bool,
    /// EMD from the estimate this cycle starts from (and builds its channel
    /// on) to the truth, km.
    pub input_emd_km: Option<f64>,
    /// EMD from the estimate this cycle produces to the truth, km.
    pub emd_to_truth: Option<f64>,
    pub estimate: Pmf,
    pub cycle_seed: u64,
    pub sample_seed: u64,
    pub obfuscation_seed: u64,
}

/// One row of the per-cycle table: `n` counts estimates, with `n = 1` the
/// starting estimate, so row `n` holds the EMD of the estimate that cycle
/// `n` starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub round: usize,
    pub beta: f64,
    pub emd_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivicTrace {
    pub config: PrivicConfig,
    pub records: Vec<CycleRecord>,
}

impl PrivicTrace {
    pub fn final_estimate(&self) -> &Pmf {
        &self.records.last().expect("trace has at least one cycle").estimate
    }

    pub fn table_rows(&self, round: usize) -> Vec<TableRow> {
        self.records
            .iter()
            .filter_map(|r| {
                r.input_emd_km.map(|emd_km| TableRow {
                    n: r.cycle,
                    round,
                    beta: r.beta,
                    emd_km,
                })
            })
            .collect()
    }
}

/// BA channel built from `theta` as cycle `t`'s mechanism.
pub fn cycle_channel(theta: &Pmf, cfg: &PrivicConfig, dist: &DistanceMatrix) -> Result<BaResult> {
    let init = uniform_channel(theta.len())?;
    ba_run(theta, &init, &cfg.ba, dist)
}

/// The sampling, obfuscation and estimation half of a cycle, for a channel
/// already built from `theta_prev`.
pub fn estimate_with_channel(
    theta_prev: &Pmf,
    channel: &BaResult,
    sampler: &TruthSampler,
    cfg: &PrivicConfig,
    cycle_seed: u64,
) -> Result<(Pmf, usize, bool)> {
    let m = theta_prev.len();
    let truth_samples = sampler.draw(cfg.n_per_cycle, derive_seed(cycle_seed, 0));
    let noisy = obfuscate(&truth_samples, &channel.channel, derive_seed(cycle_seed, 1))?;
    let q = empirical_pmf(&noisy, m)?;
    let ibu = ibu_run(theta_prev, &channel.channel, &q, &cfg.ibu)?;
    if !ibu.estimate.is_full_support() {
        return Err(Error::domain("estimate lost full support"));
    }
    Ok((ibu.estimate, ibu.iterations_used, ibu.converged))
}

/// One cycle started from `theta_prev`. `truth` enables the EMD columns.
pub fn privic_cycle(
    theta_prev: &Pmf,
    sampler: &TruthSampler,
    cfg: &PrivicConfig,
    dist: &DistanceMatrix,
    cycle: usize,
    cycle_seed: u64,
    truth: Option<&Pmf>,
) -> Result<(Pmf, CycleRecord)> {
    Error::check_dim(dist.size(), theta_prev.len())?;
    if !theta_prev.is_full_support() {
        return Err(Error::domain("cycle must start from a full-support estimate"));
    }
    let ba = cycle_channel(theta_prev, cfg, dist)?;
    let (estimate, ibu_iterations, ibu_converged) = estimate_with_channel(theta_prev, &ba, sampler, cfg, cycle_seed)?;
    let emd_of = |p: &Pmf| -> Result<Option<f64>> { truth.map(|t| emd(p, t, dist).map(|(c, _)| c)).transpose() };
    let record = CycleRecord {
        cycle,
        beta: cfg.beta,
        epsilon_audit: ba.epsilon_audit(dist)?,
        avg_distortion_km: ba.achieved_avg_distortion,
        mi_nats: ba.achieved_mi,
        ba_iterations: ba.iterations_used,
        ba_converged: ba.converged,
        ibu_iterations,
        ibu_converged,
        input_emd_km: emd_of(theta_prev)?,
        emd_to_truth: emd_of(&estimate)?,
        estimate: estimate.clone(),
        cycle_seed,
        sample_seed: derive_seed(cycle_seed, 0),
        obfuscation_seed: derive_seed(cycle_seed, 1),
    };
    Ok((estimate, record))
}

/// Chains `cfg.cycles` cycles from `theta0`.
pub fn privic_run(
    theta0: &Pmf,
    sampler: &TruthSampler,
    cfg: &PrivicConfig,
    dist: &DistanceMatrix,
    truth: Option<&Pmf>,
) -> Result<PrivicTrace> {
    cfg.validate()?;
    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(cfg.cycles);
    for t in 1..=cfg.cycles {
        let (next, record) = privic_cycle(&theta, sampler, cfg, dist, t, derive_seed(cfg.seed, t as u64), truth)?;
        log::debug!(
            "cycle {t}: emd in {:?} out {:?}",
            record.input_emd_km,
            record.emd_to_truth
        );
        records.push(record);
        theta = next;
    }
    Ok(PrivicTrace {
        config: cfg.clone(),
        records,
    })
}
