//! Obfuscation channels: the Blahut-Arimoto rate-distortion channel, the
//! grid-restricted exponential (Laplace-kernel) baseline, and audits of
//! their privacy properties.
//!
//! Exponentials are evaluated in the log domain with the row maximum
//! subtracted, so large `beta * d` products never underflow a whole row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::metrics::{avg_distortion, mutual_information};
use crate::prob::{channel_unchecked, push_forward_raw, Channel, Pmf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    /// Loss parameter in 1/km.
    pub beta: f64,
    pub max_iters: usize,
    /// Threshold on the largest row-wise L1 change between iterates.
    pub tol: f64,
}

impl BaConfig {
    pub fn new(beta: f64) -> Self {
        BaConfig {
            beta,
            max_iters: 500,
            tol: 1e-10,
        }
    }

    /// Exactly `iters` steps, regardless of convergence.
    pub fn fixed(beta: f64, iters: usize) -> Self {
        BaConfig {
            beta,
            max_iters: iters,
            tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.max_iters == 0 {
            return Err(Error::Config("BA needs at least one iteration".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config(format!("invalid BA tolerance {}", self.tol)));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::domain(format!(
            "loss parameter must be finite and >= 0, got {beta}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BaResult {
    pub channel: Channel,
    /// Natural log of every channel entry, row-major. Finite even where the
    /// probability-domain entry has underflowed to zero.
    pub log_channel: Vec<f64>,
    pub beta: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Achieved average distortion against the prior, km.
    pub achieved_avg_distortion: f64,
    /// Achieved mutual information against the prior, nats.
    pub achieved_mi: f64,
}

/// Serialized summary of a BA run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaReport {
    pub beta: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub avg_distortion_km: f64,
    pub mi_nats: f64,
    /// Tightest geo-indistinguishability level; `None` when unbounded.
    pub epsilon_audit: Option<f64>,
}

impl BaResult {
    pub fn report(&self, dist: &DistanceMatrix) -> Result<BaReport> {
        Ok(BaReport {
            beta: self.beta,
            iterations_used: self.iterations_used,
            converged: self.converged,
            avg_distortion_km: self.achieved_avg_distortion,
            mi_nats: self.achieved_mi,
            epsilon_audit: Some(self.epsilon_audit(dist)?),
        })
    }

    /// Tightest geo-indistinguishability level, computed from the log-domain
    /// entries so that underflowed columns do not read as zero.
    pub fn epsilon_audit(&self, dist: &DistanceMatrix) -> Result<f64> {
        Error::check_dim(self.channel.size(), dist.size())?;
        Ok(geo_ind_scan(&self.log_channel, dist))
    }
}

/// Fills `out` with `w(y) exp(-beta d(x, y))` normalized over `y`, where
/// `log_w` holds `ln w` (`-inf` for zero weight).
fn kernel_row(log_w: &[f64], beta: f64, d_row: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, (lw, d)) in out.iter_mut().zip(log_w.iter().zip(d_row)) {
        *o = lw - beta * d;
        max = max.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn kernel_channel(log_w: &[f64], beta: f64, dist: &DistanceMatrix) -> Channel {
    let m = dist.size();
    let mut data = vec![0.0; m * m];
    for (x, row) in data.chunks_mut(m).enumerate() {
        kernel_row(log_w, beta, dist.row(x), row);
    }
    channel_unchecked(m, data)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Largest `beta * d` for which the kernel `exp(-beta d)` is tabulated in
/// the probability domain; beyond it every exponential is taken in logs.
const DIRECT_KERNEL_LIMIT: f64 = 700.0;

/// The BA recursion expressed on the log output marginal `ln c`, which is
/// all an iterate depends on. Marginal entries that the rate-distortion
/// optimum drives towards zero stay representable here long after
/// `c(y)` itself would underflow.
struct BaKernel<'a> {
    beta: f64,
    dist: &'a DistanceMatrix,
    /// `exp(-beta d)`, when no product `beta * d` exceeds the direct limit.
    direct: Option<Vec<f64>>,
}

impl<'a> BaKernel<'a> {
    fn new(beta: f64, dist: &'a DistanceMatrix) -> Self {
        let m = dist.size();
        let d_max = (0..m).flat_map(|x| dist.row(x).iter().copied()).fold(0.0, f64::max);
        let direct = (beta * d_max < DIRECT_KERNEL_LIMIT).then(|| {
            (0..m)
                .flat_map(|x| dist.row(x).iter().map(|d| (-beta * d).exp()))
                .collect()
        });
        BaKernel { beta, dist, direct }
    }

    fn m(&self) -> usize {
        self.dist.size()
    }

    /// `ln Z(x) = ln sum_y c(y) exp(-beta d(x, y))`.
    fn log_normalizers(&self, log_c: &[f64]) -> Vec<f64> {
        let m = self.m();
        match &self.direct {
            Some(k) => {
                let shift = log_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scaled: Vec<f64> = log_c.iter().map(|l| (l - shift).exp()).collect();
                k.chunks(m)
                    .map(|row| shift + row.iter().zip(&scaled).map(|(a, b)| a * b).sum::<f64>().ln())
                    .collect()
            }
            None => (0..m)
                .map(|x| {
                    let d = self.dist.row(x);
                    log_sum_exp((0..m).map(|y| log_c[y] - self.beta * d[y]))
                })
                .collect(),
        }
    }

    fn log_entry(&self, log_c: &[f64], log_z: &[f64], x: usize, y: usize) -> f64 {
        log_c[y] - self.beta * self.dist.get(x, y) - log_z[x]
    }

    fn channel(&self, log_c: &[f64], log_z: &[f64]) -> Channel {
        let m = self.m();
        let mut data = vec![0.0; m * m];
        if let Some(k) = &self.direct {
            let shift = log_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let c: Vec<f64> = log_c.iter().map(|l| (l - shift).exp()).collect();
            for (row, k_row) in data.chunks_mut(m).zip(k.chunks(m)) {
                let mut total = 0.0;
                for ((v, cy), kxy) in row.iter_mut().zip(&c).zip(k_row) {
                    *v = cy * kxy;
                    total += *v;
                }
                row.iter_mut().for_each(|v| *v /= total);
            }
            return channel_unchecked(m, data);
        }
        for (x, row) in data.chunks_mut(m).enumerate() {
            for (y, v) in row.iter_mut().enumerate() {
                *v = self.log_entry(log_c, log_z, x, y).exp();
            }
            // exact renormalization keeps rows stochastic to rounding
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        channel_unchecked(m, data)
    }

    /// Log output marginal of the channel defined by (`log_c`, `log_z`).
    fn next_log_marginal(&self, log_prior: &[f64], log_c: &[f64], log_z: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut next: Vec<f64> = match &self.direct {
            Some(k) => {
                // w(x) = prior(x) / Z(x), scaled by its maximum
                let lw: Vec<f64> = (0..m).map(|x| log_prior[x] - log_z[x]).collect();
                let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = lw.iter().map(|l| (l - shift).exp()).collect();
                let mut s = vec![0.0; m];
                for (wx, row) in w.iter().zip(k.chunks(m)) {
                    for (sy, kxy) in s.iter_mut().zip(row) {
                        *sy += wx * kxy;
                    }
                }
                (0..m).map(|y| log_c[y] + shift + s[y].ln()).collect()
            }
            None => (0..m)
                .map(|y| {
                    log_c[y] + log_sum_exp((0..m).map(|x| log_prior[x] - self.beta * self.dist.get(x, y) - log_z[x]))
                })
                .collect(),
        };
        let total = log_sum_exp(next.iter().copied());
        next.iter_mut().for_each(|l| *l -= total);
        next
    }
}

/// One Blahut-Arimoto update: the output marginal `c` of `channel` under
/// `prior`, then `C'[x][y] = c(y) exp(-beta d(x,y)) / sum_z c(z) exp(-beta d(x,z))`.
pub fn ba_step(prior: &Pmf, channel: &Channel, beta: f64, dist: &DistanceMatrix) -> Result<Channel> {
    let m = prior.len();
    Error::check_dim(m, channel.size())?;
    Error::check_dim(m, dist.size())?;
    check_beta(beta)?;
    if !prior.is_full_support() {
        return Err(Error::domain("BA prior must have full support"));
    }
    let log_c: Vec<f64> = push_forward_raw(prior.as_slice(), channel)
        .into_iter()
        .map(f64::ln)
        .collect();
    Ok(kernel_channel(&log_c, beta, dist))
}

/// Iterates the BA update from `init` until the largest row L1 change drops
/// below `cfg.tol` or `cfg.max_iters` steps have run.
pub fn ba_run(prior: &Pmf, init: &Channel, cfg: &BaConfig, dist: &DistanceMatrix) -> Result<BaResult> {
    cfg.validate()?;
    let m = prior.len();
    Error::check_dim(m, init.size())?;
    Error::check_dim(m, dist.size())?;
    if !prior.is_full_support() {
        return Err(Error::domain("BA prior must have full support"));
    }
    let kernel = BaKernel::new(cfg.beta, dist);
    let log_prior: Vec<f64> = prior.as_slice().iter().map(|p| p.ln()).collect();

    let mut log_c: Vec<f64> = push_forward_raw(prior.as_slice(), init)
        .into_iter()
        .map(f64::ln)
        .collect();
    let mut log_z = kernel.log_normalizers(&log_c);
    let mut channel = kernel.channel(&log_c, &log_z);
    let mut change = channel.max_row_l1(init);
    let mut iterations_used = 1;
    while change >= cfg.tol && iterations_used < cfg.max_iters {
        let next_c = kernel.next_log_marginal(&log_prior, &log_c, &log_z);
        let next_z = kernel.log_normalizers(&next_c);
        let next = kernel.channel(&next_c, &next_z);
        change = next.max_row_l1(&channel);
        (log_c, log_z, channel) = (next_c, next_z, next);
        iterations_used += 1;
    }
    let converged = change < cfg.tol;
    if !converged && cfg.tol > 0.0 {
        log::debug!("BA stopped after {iterations_used} steps, last change {change:e}");
    }
    let log_channel = (0..m)
        .flat_map(|x| (0..m).map(move |y| (x, y)))
        .map(|(x, y)| kernel.log_entry(&log_c, &log_z, x, y))
        .collect();
    Ok(BaResult {
        achieved_avg_distortion: avg_distortion(prior, &channel, dist)?,
        achieved_mi: mutual_information(prior, &channel)?,
        channel,
        log_channel,
        beta: cfg.beta,
        iterations_used,
        converged,
    })
}

/// Grid-restricted Laplace baseline: `C[x][y] ∝ exp(-epsilon d(x,y))`.
pub fn laplace_channel(epsilon: f64, dist: &DistanceMatrix) -> Result<Channel> {
    check_beta(epsilon)?;
    if dist.size() == 0 {
        return Err(Error::domain("empty distance table"));
    }
    Ok(kernel_channel(&vec![0.0; dist.size()], epsilon, dist))
}

/// A channel reporting cell `b` whatever the input. Optimal for quality of
/// service when `b` is central, useless for estimation, and not
/// geo-indistinguishable for any finite level.
pub fn rank_one_channel(m: usize, b: usize) -> Result<Channel> {
    if b >= m {
        return Err(Error::domain(format!("cell {b} outside space of size {m}")));
    }
    let mut data = vec![0.0; m * m];
    for x in 0..m {
        data[x * m + b] = 1.0;
    }
    Ok(channel_unchecked(m, data))
}

/// Outcome of a geo-indistinguishability audit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeoIndAudit {
    /// Smallest epsilon with `C[x][y] <= exp(epsilon d(x,x')) C[x'][y]` everywhere.
    Bounded(f64),
    /// A zero entry makes some likelihood ratio infinite.
    Unbounded,
}

impl GeoIndAudit {
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            GeoIndAudit::Bounded(e) => Some(*e),
            GeoIndAudit::Unbounded => None,
        }
    }
}

/// Scans every pair of distinct-location inputs and every output for the
/// largest `ln(C[x][y] / C[x'][y]) / d(x, x')`.
pub fn verify_geo_ind(channel: &Channel, dist: &DistanceMatrix) -> Result<GeoIndAudit> {
    let m = channel.size();
    Error::check_dim(m, dist.size())?;
    if !channel.is_positive() {
        return Ok(GeoIndAudit::Unbounded);
    }
    let logs: Vec<f64> = channel.as_flat().iter().map(|v| v.ln()).collect();
    Ok(GeoIndAudit::Bounded(geo_ind_scan(&logs, dist)))
}

/// Largest `(l[x][y] - l[x'][y]) / d(x, x')` over a row-major log matrix.
fn geo_ind_scan(logs: &[f64], dist: &DistanceMatrix) -> f64 {
    let m = dist.size();
    let mut eps: f64 = 0.0;
    for x in 0..m {
        let lx = &logs[x * m..(x + 1) * m];
        for x2 in 0..m {
            let d = dist.get(x, x2);
            if d <= 0.0 {
                continue;
            }
            let lx2 = &logs[x2 * m..(x2 + 1) * m];
            let worst = lx.iter().zip(lx2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            eps = eps.max(worst / d);
        }
    }
    eps
}

/// How far a channel is from the elastic fixed-point form
/// `C[x][y] = c(y) exp(-beta d(x,y)) / Z(x)` with `c` its own output marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticReport {
    /// Largest absolute entrywise defect.
    pub residual: f64,
    /// Per row, the spread (max - min) of `ln C[x][y] - ln c(y) + beta d(x,y)`
    /// over outputs with `c(y) >= ELASTIC_SPREAD_FLOOR`. Zero exactly when
    /// the row is proportional to both `c(y)` and `exp(-beta d(x,y))`.
    /// Outputs whose marginal is vanishing are left out: there the ratio of
    /// successive BA marginals stays below one while both tend to zero.
    pub row_log_spread: Vec<f64>,
}

impl ElasticReport {
    pub fn max_log_spread(&self) -> f64 {
        self.row_log_spread.iter().copied().fold(0.0, f64::max)
    }
}

pub const ELASTIC_SPREAD_FLOOR: f64 = 1e-6;

pub fn elastic_residual(channel: &Channel, prior: &Pmf, beta: f64, dist: &DistanceMatrix) -> Result<ElasticReport> {
    let m = channel.size();
    Error::check_dim(m, prior.len())?;
    Error::check_dim(m, dist.size())?;
    check_beta(beta)?;
    let c = push_forward_raw(prior.as_slice(), channel);
    let log_c: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    let target = kernel_channel(&log_c, beta, dist);
    let residual = channel
        .as_flat()
        .iter()
        .zip(target.as_flat())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let row_log_spread = (0..m)
        .map(|x| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in 0..m {
                let v = channel.get(x, y);
                if v > 0.0 && c[y] >= ELASTIC_SPREAD_FLOOR {
                    let s = v.ln() - log_c[y] + beta * dist.get(x, y);
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
            if hi >= lo {
                hi - lo
            } else {
                0.0
            }
        })
        .collect();
    Ok(ElasticReport {
        residual,
        row_log_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{uniform_channel, uniform_pmf};
    use approx::assert_abs_diff_eq;

    fn two_points() -> DistanceMatrix {
        DistanceMatrix::line(2, 1.0)
    }

    #[test]
    fn step_with_zero_beta_is_uniform() {
        let prior = Pmf::new(vec![0.1, 0.6, 0.3]).unwrap();
        let d = DistanceMatrix::line(3, 1.0);
        let c = ba_step(&prior, &uniform_channel(3).unwrap(), 0.0, &d).unwrap();
        for v in c.as_flat() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn step_single_cell() {
        let d = DistanceMatrix::line(1, 1.0);
        let c = ba_step(&uniform_pmf(1).unwrap(), &uniform_channel(1).unwrap(), 3.0, &d).unwrap();
        assert_eq!(c.to_rows(), vec![vec![1.0]]);
    }

    #[test]
    fn step_two_points_unit_beta() {
        let c = ba_step(
            &uniform_pmf(2).unwrap(),
            &uniform_channel(2).unwrap(),
            1.0,
            &two_points(),
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(c.get(0, 0), e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(0, 1), 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(1, 1), e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(0, 0), 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn step_rejects_zero_prior_entry() {
        let prior = Pmf::new(vec![1.0, 0.0]).unwrap();
        let err = ba_step(&prior, &uniform_channel(2).unwrap(), 1.0, &two_points());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn run_zero_beta_is_rank_one() {
        let prior = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        let d = DistanceMatrix::line(3, 1.0);
        let r = ba_run(&prior, &uniform_channel(3).unwrap(), &BaConfig::new(0.0), &d).unwrap();
        assert!(r.converged);
        assert!(r.iterations_used <= 2);
        assert!(r.achieved_mi.abs() < 1e-15);
        for x in 1..3 {
            assert_eq!(r.channel.row(x), r.channel.row(0));
        }
    }

    #[test]
    fn run_large_beta_is_identity() {
        let r = ba_run(
            &uniform_pmf(2).unwrap(),
            &uniform_channel(2).unwrap(),
            &BaConfig::new(50.0),
            &two_points(),
        )
        .unwrap();
        assert!(r.channel.max_row_l1(&Channel::identity(2)) < 1e-6);
        assert!(r.achieved_avg_distortion < 1e-6);
    }

    #[test]
    fn run_reaches_fixed_point() {
        let prior = Pmf::new(vec![0.5, 0.1, 0.05, 0.35]).unwrap();
        let d = DistanceMatrix::line(4, 0.7);
        let cfg = BaConfig::new(1.3);
        let r = ba_run(&prior, &uniform_channel(4).unwrap(), &cfg, &d).unwrap();
        assert!(r.converged);
        let again = ba_step(&prior, &r.channel, cfg.beta, &d).unwrap();
        assert!(again.max_row_l1(&r.channel) < cfg.tol);
    }

    #[test]
    fn single_run_step_matches_ba_step() {
        let prior = Pmf::new(vec![0.5, 0.1, 0.05, 0.35]).unwrap();
        let d = DistanceMatrix::line(4, 0.7);
        let init = laplace_channel(0.4, &d).unwrap();
        let one = ba_run(&prior, &init, &BaConfig::fixed(1.3, 1), &d).unwrap();
        let step = ba_step(&prior, &init, 1.3, &d).unwrap();
        assert!(one.channel.max_row_l1(&step) < 1e-14);
        let two = ba_run(&prior, &init, &BaConfig::fixed(1.3, 2), &d).unwrap();
        let step2 = ba_step(&prior, &step, 1.3, &d).unwrap();
        assert!(two.channel.max_row_l1(&step2) < 1e-14);
    }

    #[test]
    fn log_domain_path_matches_direct_kernel() {
        // same geometry at two scales: beta * d crosses the direct-kernel limit
        // only in the second, while beta * d itself is identical
        let prior = Pmf::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let near = DistanceMatrix::line(4, 1.0);
        let far = DistanceMatrix::line(4, 1000.0);
        let a = ba_run(&prior, &uniform_channel(4).unwrap(), &BaConfig::fixed(0.9, 30), &near).unwrap();
        let b = ba_run(&prior, &uniform_channel(4).unwrap(), &BaConfig::fixed(0.0009, 30), &far).unwrap();
        assert!(a.channel.max_row_l1(&b.channel) < 1e-12);
        let big = ba_run(&prior, &uniform_channel(4).unwrap(), &BaConfig::fixed(1.0, 10), &far).unwrap();
        assert!(big.channel.max_row_l1(&Channel::identity(4)) < 1e-12);
    }

    #[test]
    fn fixed_mode_runs_exact_count() {
        let prior = Pmf::new(vec![0.5, 0.1, 0.05, 0.35]).unwrap();
        let d = DistanceMatrix::line(4, 0.7);
        let r = ba_run(&prior, &uniform_channel(4).unwrap(), &BaConfig::fixed(1.0, 8), &d).unwrap();
        assert_eq!(r.iterations_used, 8);
        assert!(!r.converged);
    }

    #[test]
    fn laplace_examples() {
        let d = DistanceMatrix::line(3, 1.0);
        let c = laplace_channel(0.0, &d).unwrap();
        assert_eq!(c, uniform_channel(3).unwrap());
        let one = laplace_channel(2.0, &DistanceMatrix::line(1, 1.0)).unwrap();
        assert_eq!(one.to_rows(), vec![vec![1.0]]);
        let c = laplace_channel(1.0, &two_points()).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(c.get(0, 0), e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(1, 0), 1.0 / (e + 1.0), epsilon = 1e-15);
        assert!(laplace_channel(-1.0, &d).is_err());
    }

    #[test]
    fn audit_uniform_and_rank_one() {
        let d = DistanceMatrix::line(4, 1.0);
        assert_eq!(
            verify_geo_ind(&uniform_channel(4).unwrap(), &d).unwrap(),
            GeoIndAudit::Bounded(0.0)
        );
        let fixture = rank_one_channel(4, 2).unwrap();
        assert_eq!(verify_geo_ind(&fixture, &d).unwrap(), GeoIndAudit::Unbounded);
        assert_eq!(
            verify_geo_ind(&uniform_channel(1).unwrap(), &DistanceMatrix::line(1, 1.0)).unwrap(),
            GeoIndAudit::Bounded(0.0)
        );
    }

    #[test]
    fn audit_two_point_laplace_is_exact() {
        // ratio (e/(e+1)) / (1/(e+1)) = e over distance 1
        let c = laplace_channel(1.0, &two_points()).unwrap();
        let eps = verify_geo_ind(&c, &two_points()).unwrap().epsilon().unwrap();
        assert_abs_diff_eq!(eps, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn elastic_examples() {
        let d = DistanceMatrix::line(1, 1.0);
        let r = elastic_residual(&uniform_channel(1).unwrap(), &uniform_pmf(1).unwrap(), 1.0, &d).unwrap();
        assert_eq!(r.residual, 0.0);

        let prior = Pmf::new(vec![0.3, 0.2, 0.4, 0.1]).unwrap();
        let d = DistanceMatrix::line(4, 0.5);
        for beta in [1.0, 4.0] {
            let cfg = BaConfig {
                max_iters: 20_000,
                ..BaConfig::new(beta)
            };
            let ba = ba_run(&prior, &uniform_channel(4).unwrap(), &cfg, &d).unwrap();
            assert!(ba.converged, "{} iterations", ba.iterations_used);
            let r = elastic_residual(&ba.channel, &prior, beta, &d).unwrap();
            assert!(r.residual < 1e-9);
            if beta > 2.0 {
                // every output keeps positive mass at this beta
                assert!(r.max_log_spread() < 1e-6, "{:?}", r.row_log_spread);
            }
        }
        let lap = laplace_channel(1.0, &d).unwrap();
        let skew = Pmf::new(vec![0.9, 0.05, 0.03, 0.02]).unwrap();
        let r = elastic_residual(&lap, &skew, 1.0, &d).unwrap();
        assert!(r.residual > 0.01);
    }
}
