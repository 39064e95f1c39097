//! Recovering the input distribution from noisy reports: empirical
//! frequencies, the iterative Bayesian update (an EM iteration for the
//! maximum-likelihood prior), a brute-force likelihood maximizer for small
//! spaces, and the side-by-side trace of the BA marginal recursion and IBU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::mechanisms::ba_step;
use crate::prob::{pmf_unchecked, push_forward_raw, uniform_channel, Channel, Pmf, SampleSet};

/// Relative frequency of each cell in `samples`.
pub fn empirical_pmf(samples: &SampleSet, m: usize) -> Result<Pmf> {
    if samples.is_empty() {
        return Err(Error::domain("cannot estimate a distribution from zero samples"));
    }
    samples.validate(m)?;
    let mut counts = vec![0usize; m];
    for &i in &samples.indices {
        counts[i] += 1;
    }
    let n = samples.len() as f64;
    Ok(pmf_unchecked(counts.into_iter().map(|c| c as f64 / n).collect()))
}

/// `sum_y q(y) ln((theta C)[y])`; terms with `q(y) = 0` are skipped.
pub fn log_likelihood(theta: &[f64], channel: &Channel, q: &[f64]) -> f64 {
    let out = push_forward_raw(theta, channel);
    q.iter()
        .zip(&out)
        .filter(|(qy, _)| **qy > 0.0)
        .map(|(qy, o)| qy * o.ln())
        .sum()
}

/// One EM update with a nonnegative `m x m` row-major kernel (not
/// necessarily row-stochastic).
fn ibu_update(theta: &[f64], kernel: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let m = theta.len();
    let mut denom = vec![0.0; m];
    for (tx, row) in theta.iter().zip(kernel.chunks(m)) {
        for (d, k) in denom.iter_mut().zip(row) {
            *d += tx * k;
        }
    }
    let mut ratio = vec![0.0; m];
    for y in 0..m {
        if q[y] > 0.0 {
            if denom[y] <= 0.0 {
                return Err(Error::domain(format!(
                    "report {y} has positive frequency but zero probability under the estimate"
                )));
            }
            ratio[y] = q[y] / denom[y];
        }
    }
    Ok(theta
        .iter()
        .zip(kernel.chunks(m))
        .map(|(tx, row)| {
            if *tx == 0.0 {
                return 0.0;
            }
            let s: f64 = row.iter().zip(&ratio).map(|(k, r)| k * r).sum();
            // keep strictly positive entries positive if the product underflows
            let v = tx * s;
            if v == 0.0 && s > 0.0 {
                f64::MIN_POSITIVE
            } else {
                v
            }
        })
        .collect())
}

/// `theta'(x) = sum_y q(y) theta(x) C[x][y] / sum_z theta(z) C[z][y]`.
pub fn ibu_step(theta: &Pmf, channel: &Channel, q: &Pmf) -> Result<Pmf> {
    let m = channel.size();
    Error::check_dim(m, theta.len())?;
    Error::check_dim(m, q.len())?;
    let next = ibu_update(theta.as_slice(), channel.as_flat(), q.as_slice())?;
    Ok(pmf_unchecked(next))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbuConfig {
    pub max_iters: usize,
    /// Threshold on the L1 change between successive estimates.
    pub tol: f64,
    /// Keep every intermediate estimate in the result.
    pub record_trajectory: bool,
}

impl IbuConfig {
    pub fn new() -> Self {
        IbuConfig {
            max_iters: 10_000,
            tol: 1e-10,
            record_trajectory: false,
        }
    }

    /// Exactly `iters` updates.
    pub fn fixed(iters: usize) -> Self {
        IbuConfig {
            max_iters: iters,
            tol: 0.0,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("IBU needs at least one iteration".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config(format!("invalid IBU tolerance {}", self.tol)));
        }
        Ok(())
    }
}

impl Default for IbuConfig {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug)]
pub struct IbuResult {
    pub estimate: Pmf,
    pub iterations_used: usize,
    pub converged: bool,
    /// Log-likelihood of the reports under `theta_t`, for `t = 0..=iterations_used`.
    pub loglik_trajectory: Vec<f64>,
    pub trajectory: Option<Vec<Pmf>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbuReport {
    pub estimate: Pmf,
    pub iterations_used: usize,
    pub converged: bool,
    pub loglik_trajectory: Vec<f64>,
}

impl IbuResult {
    pub fn report(&self) -> IbuReport {
        IbuReport {
            estimate: self.estimate.clone(),
            iterations_used: self.iterations_used,
            converged: self.converged,
            loglik_trajectory: self.loglik_trajectory.clone(),
        }
    }
}

pub fn ibu_run(theta0: &Pmf, channel: &Channel, q: &Pmf, cfg: &IbuConfig) -> Result<IbuResult> {
    cfg.validate()?;
    let m = channel.size();
    Error::check_dim(m, theta0.len())?;
    Error::check_dim(m, q.len())?;
    if !theta0.is_full_support() {
        return Err(Error::domain("IBU starting estimate must have full support"));
    }
    let mut theta = theta0.as_slice().to_vec();
    let mut loglik = vec![log_likelihood(&theta, channel, q.as_slice())];
    let mut trajectory = cfg.record_trajectory.then(|| vec![theta0.clone()]);
    let mut converged = false;
    let mut iterations_used = 0;
    while iterations_used < cfg.max_iters {
        let next = ibu_update(&theta, channel.as_flat(), q.as_slice())?;
        let change: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).sum();
        theta = next;
        iterations_used += 1;
        loglik.push(log_likelihood(&theta, channel, q.as_slice()));
        if let Some(t) = trajectory.as_mut() {
            t.push(pmf_unchecked(theta.clone()));
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(IbuResult {
        estimate: pmf_unchecked(theta),
        iterations_used,
        converged,
        loglik_trajectory: loglik,
        trajectory,
    })
}

/// Largest space the likelihood oracle accepts.
pub const MLE_ORACLE_MAX_CELLS: usize = 6;
const ORACLE_MAX_GRID_POINTS: u128 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOracle {
    pub estimate: Pmf,
    pub log_likelihood: f64,
    /// Step of the simplex lattice searched before refinement.
    pub grid_resolution: f64,
    /// False when several lattice points share the maximal likelihood, in
    /// which case `estimate` is the lexicographically smallest of them.
    pub unique: bool,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Finest lattice step `1/k` (k <= 1000) with at most two million points
/// on the `m`-cell simplex.
fn oracle_lattice(m: usize) -> usize {
    let mut k = 1000usize;
    while k > 1 && binomial((k + m - 1) as u128, (m - 1) as u128) > ORACLE_MAX_GRID_POINTS {
        k -= 1;
    }
    k
}

/// Calls `f` on every composition of `k` into `m` nonnegative parts, in
/// lexicographic order.
fn for_each_composition(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(pos: usize, left: usize, parts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if pos + 1 == parts.len() {
            parts[pos] = left;
            f(parts);
            return;
        }
        for v in 0..=left {
            parts[pos] = v;
            rec(pos + 1, left - v, parts, f);
        }
    }
    let mut parts = vec![0; m];
    rec(0, k, &mut parts, f);
}

/// Maximizes the report log-likelihood over the simplex by exhaustive
/// lattice search followed by pairwise golden-section refinement. Only for
/// small spaces; independent of the IBU code path.
pub fn mle_oracle(channel: &Channel, q: &Pmf) -> Result<MleOracle> {
    let m = channel.size();
    Error::check_dim(m, q.len())?;
    if m > MLE_ORACLE_MAX_CELLS {
        return Err(Error::Capability(format!(
            "likelihood oracle handles at most {MLE_ORACLE_MAX_CELLS} cells, got {m}"
        )));
    }
    let k = oracle_lattice(m);
    let q = q.as_slice();
    let mut theta = vec![0.0; m];
    let mut eval = |parts: &[usize]| {
        for (t, &p) in theta.iter_mut().zip(parts) {
            *t = p as f64 / k as f64;
        }
        log_likelihood(&theta, channel, q)
    };

    let mut best = f64::NEG_INFINITY;
    for_each_composition(m, k, &mut |parts| best = best.max(eval(parts)));
    // rounding makes a flat likelihood look bumpy, so near-ties count as ties
    let slack = 1e-12 * (1.0 + best.abs());
    let mut ties = 0usize;
    let mut best_parts = vec![0; m];
    for_each_composition(m, k, &mut |parts| {
        if eval(parts) >= best - slack {
            if ties == 0 {
                best_parts.copy_from_slice(parts);
            }
            ties += 1;
        }
    });
    let unique = ties == 1;

    let mut theta: Vec<f64> = best_parts.iter().map(|&p| p as f64 / k as f64).collect();
    if unique {
        refine_pairwise(&mut theta, channel, q);
    }
    let log_likelihood = log_likelihood(&theta, channel, q);
    Ok(MleOracle {
        estimate: pmf_unchecked(theta),
        log_likelihood,
        grid_resolution: 1.0 / k as f64,
        unique,
    })
}

/// Coordinate ascent over mass transfers between pairs of cells. Each step
/// moves mass from the cell with the smallest likelihood gradient (among
/// those holding mass) to the one with the largest, with the amount chosen
/// by golden-section search.
fn refine_pairwise(theta: &mut [f64], channel: &Channel, q: &[f64]) {
    let m = theta.len();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let objective = |t: &[f64]| log_likelihood(t, channel, q);
    for _ in 0..200_000 {
        let out = push_forward_raw(theta, channel);
        let grad: Vec<f64> = (0..m)
            .map(|x| {
                (0..m)
                    .filter(|&y| q[y] > 0.0)
                    .map(|y| q[y] * channel.get(x, y) / out[y])
                    .sum()
            })
            .collect();
        let to = (0..m).max_by(|&a, &b| grad[a].total_cmp(&grad[b])).unwrap();
        let Some(from) = (0..m)
            .filter(|&x| theta[x] > 0.0 && x != to)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
        else {
            return;
        };
        if grad[to] - grad[from] < 1e-14 {
            return;
        }
        let mut trial = theta.to_vec();
        let mut at = |s: f64| {
            trial.copy_from_slice(theta);
            trial[to] += s;
            trial[from] -= s;
            objective(&trial)
        };
        let (mut lo, mut hi) = (0.0, theta[from]);
        let mut a = hi - inv_phi * (hi - lo);
        let mut b = lo + inv_phi * (hi - lo);
        let (mut fa, mut fb) = (at(a), at(b));
        for _ in 0..120 {
            if fa < fb {
                lo = a;
                a = b;
                fa = fb;
                b = lo + inv_phi * (hi - lo);
                fb = at(b);
            } else {
                hi = b;
                b = a;
                fb = fa;
                a = hi - inv_phi * (hi - lo);
                fa = at(a);
            }
        }
        let s = 0.5 * (lo + hi);
        let (f0, fs, fend) = (at(0.0), at(s), at(theta[from]));
        let step = if fend > fs { theta[from] } else { s };
        if fs.max(fend) <= f0 {
            return;
        }
        theta[to] += step;
        theta[from] -= step;
        if theta[from] < 0.0 {
            theta[from] = 0.0;
        }
    }
}

/// The BA output-marginal recursion and the IBU recursion it mirrors,
/// stepped side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityTrace {
    /// `c_t` for `t = 0..=steps`, from the real BA update.
    pub ba_marginals: Vec<Vec<f64>>,
    /// IBU estimates for `t = 0..=steps`.
    pub ibu_estimates: Vec<Vec<f64>>,
    /// L1 distance between the two sequences at each step.
    pub gaps: Vec<f64>,
}

impl DualityTrace {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs (a) BA from the uniform channel, recording the output marginal of
/// every iterate, and (b) IBU whose observed distribution is `prior`, with
/// the roles of input and output swapped and the kernel
/// `kappa * exp(-beta d(x, y))` for one global constant `kappa`, starting
/// from the uniform estimate.
pub fn duality_trace(prior: &Pmf, beta: f64, dist: &DistanceMatrix, steps: usize) -> Result<DualityTrace> {
    let m = prior.len();
    Error::check_dim(m, dist.size())?;
    if !prior.is_full_support() {
        return Err(Error::domain("duality trace needs a full-support prior"));
    }

    let mut kernel = vec![0.0; m * m];
    for (x, row) in kernel.chunks_mut(m).enumerate() {
        for (k, d) in row.iter_mut().zip(dist.row(x)) {
            *k = (-beta * d).exp();
        }
    }
    let kappa = kernel
        .chunks(m)
        .map(|r| r.iter().sum::<f64>())
        .fold(0.0, f64::max)
        .recip();
    kernel.iter_mut().for_each(|k| *k *= kappa);

    let mut channel = uniform_channel(m)?;
    let mut c = push_forward_raw(prior.as_slice(), &channel);
    let mut theta = vec![1.0 / m as f64; m];
    let mut trace = DualityTrace {
        ba_marginals: Vec::with_capacity(steps + 1),
        ibu_estimates: Vec::with_capacity(steps + 1),
        gaps: Vec::with_capacity(steps + 1),
    };
    for t in 0..=steps {
        if t > 0 {
            channel = ba_step(prior, &channel, beta, dist)?;
            c = push_forward_raw(prior.as_slice(), &channel);
            theta = ibu_update(&theta, &kernel, prior.as_slice())?;
        }
        trace.gaps.push(c.iter().zip(&theta).map(|(a, b)| (a - b).abs()).sum());
        trace.ba_marginals.push(c.clone());
        trace.ibu_estimates.push(theta.clone());
    }
    Ok(trace)
}
