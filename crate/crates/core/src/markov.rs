//! PRIVIC as a finite Markov chain on a discretized simplex.
//!
//! Estimates are snapped to the nearest mesh state (L1), transition
//! probabilities are Monte-Carlo frequencies, and the stationary law comes
//! from power iteration. Positivity and stationarity results here are
//! statistical evidence, not proofs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::privic::{cycle_channel, estimate_with_channel, PrivicConfig, TruthSampler};
use crate::prob::{derive_seed, rng_from_seed, CdfSampler, Pmf};

pub const MESH_MAX_CELLS: usize = 4;
pub const MESH_MAX_GRANULARITY: usize = 20;

const PROJECTION_TIE_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexMesh {
    pub m: usize,
    pub k: usize,
    /// Integer numerators; state `i` is `numerators[i] / k`.
    pub numerators: Vec<Vec<usize>>,
    pub states: Vec<Pmf>,
}

impl SimplexMesh {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// All full-support PMFs on `m` cells with coordinates in multiples of `1/k`,
/// in lexicographic order of their numerators.
pub fn enumerate_simplex(m: usize, k: usize) -> Result<SimplexMesh> {
    if m == 0 || k < m {
        return Err(Error::domain(format!("no positive composition of {k} into {m} parts")));
    }
    if m > MESH_MAX_CELLS || k > MESH_MAX_GRANULARITY {
        return Err(Error::Capability(format!(
            "mesh limited to m <= {MESH_MAX_CELLS}, k <= {MESH_MAX_GRANULARITY} (got m={m}, k={k})"
        )));
    }
    let mut numerators = Vec::new();
    let mut current = Vec::with_capacity(m);
    compositions(k, m, &mut current, &mut numerators);
    let states = numerators
        .iter()
        .map(|c| {
            let p: Vec<f64> = c.iter().map(|&a| a as f64 / k as f64).collect();
            Pmf::new(p)
        })
        .collect::<Result<_>>()?;
    Ok(SimplexMesh {
        m,
        k,
        numerators,
        states,
    })
}

fn compositions(rest: usize, parts: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        current.push(rest);
        out.push(current.clone());
        current.pop();
        return;
    }
    for a in 1..=rest - (parts - 1) {
        current.push(a);
        compositions(rest - a, parts - 1, current, out);
        current.pop();
    }
}

/// Index of the mesh state nearest to `pmf` in L1; the earliest state wins
/// ties.
pub fn project_to_mesh(pmf: &Pmf, mesh: &SimplexMesh) -> Result<usize> {
    Error::check_dim(mesh.m, pmf.len())?;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in mesh.states.iter().enumerate() {
        let d = s.l1(pmf);
        if d < best_d - PROJECTION_TIE_TOL {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub phi: Vec<Vec<f64>>,
    pub trials_per_state: usize,
    pub seed: u64,
}

impl TransitionEstimate {
    /// Wraps a known row-stochastic matrix.
    pub fn from_matrix(phi: Vec<Vec<f64>>) -> Result<Self> {
        let k = phi.len();
        for row in &phi {
            Error::check_dim(k, row.len())?;
            if row.iter().any(|&v| v.is_nan() || v < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::domain("transition rows must be probability vectors"));
            }
        }
        if k == 0 {
            return Err(Error::domain("empty transition matrix"));
        }
        Ok(TransitionEstimate {
            phi,
            trials_per_state: 0,
            seed: 0,
        })
    }

    pub fn states(&self) -> usize {
        self.phi.len()
    }

    pub fn min_entry(&self) -> f64 {
        self.phi.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.min_entry() > 0.0
    }

    /// `psi · phi`.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let k = self.states();
        let mut out = vec![0.0; k];
        for (i, row) in self.phi.iter().enumerate() {
            let w = psi[i];
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(row) {
                *o += w * p;
            }
        }
        out
    }
}

/// Monte-Carlo transition matrix of one PRIVIC cycle on `mesh`. The cycle
/// count in `cfg` is ignored.
pub fn estimate_transition(
    mesh: &SimplexMesh,
    cfg: &PrivicConfig,
    truth: &Pmf,
    dist: &DistanceMatrix,
    trials: usize,
    seed: u64,
) -> Result<TransitionEstimate> {
    Error::check_dim(mesh.m, truth.len())?;
    Error::check_dim(mesh.m, dist.size())?;
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let single = PrivicConfig {
        cycles: 1,
        ..cfg.clone()
    };
    single.validate()?;
    let sampler = TruthSampler::Distribution(truth.clone());
    let k = mesh.len();
    let mut phi = vec![vec![0.0; k]; k];
    for (i, theta) in mesh.states.iter().enumerate() {
        let ba = cycle_channel(theta, &single, dist)?;
        let state_seed = derive_seed(seed, i as u64);
        for trial in 0..trials {
            let (est, _, _) =
                estimate_with_channel(theta, &ba, &sampler, &single, derive_seed(state_seed, trial as u64))?;
            phi[i][project_to_mesh(&est, mesh)?] += 1.0;
        }
        for v in &mut phi[i] {
            *v /= trials as f64;
        }
    }
    Ok(TransitionEstimate {
        phi,
        trials_per_state: trials,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stationarity {
    Unique {
        psi: Pmf,
        iterations: usize,
    },
    /// More than one closed communicating class.
    NonUnique {
        closed_classes: usize,
    },
}

impl Stationarity {
    pub fn psi(&self) -> Option<&Pmf> {
        match self {
            Stationarity::Unique { psi, .. } => Some(psi),
            Stationarity::NonUnique { .. } => None,
        }
    }
}

/// Number of closed communicating classes of the support graph of `phi`.
pub fn closed_class_count(phi: &TransitionEstimate) -> usize {
    let k = phi.states();
    let comp = strongly_connected(&phi.phi);
    let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut leaks = vec![false; n_comp];
    for i in 0..k {
        for j in 0..k {
            if phi.phi[i][j] > 0.0 && comp[i] != comp[j] {
                leaks[comp[i]] = true;
            }
        }
    }
    leaks.iter().filter(|&&l| !l).count()
}

// Kosaraju on the dense support graph; returns a component id per vertex.
fn strongly_connected(phi: &[Vec<f64>]) -> Vec<usize> {
    let k = phi.len();
    let mut order = Vec::with_capacity(k);
    let mut seen = vec![false; k];
    for s in 0..k {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![(s, 0usize)];
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(w) = (*next..k).find(|&w| phi[v][w] > 0.0 && !seen[w]) {
                *next = w + 1;
                seen[w] = true;
                stack.push((w, 0));
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    let mut comp = vec![usize::MAX; k];
    let mut c = 0;
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = c;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for u in 0..k {
                if phi[u][v] > 0.0 && comp[u] == usize::MAX {
                    comp[u] = c;
                    stack.push(u);
                }
            }
        }
        c += 1;
    }
    comp
}

/// Stationary law of `phi` by power iteration from the uniform vector.
pub fn stationary_distribution(phi: &TransitionEstimate) -> Result<Stationarity> {
    let k = phi.states();
    stationary_from(phi, &vec![1.0 / k as f64; k])
}

/// Power iteration from `start`. Iterates the lazy chain `(I + phi) / 2`,
/// which has the same stationary law and converges for periodic chains too.
pub fn stationary_from(phi: &TransitionEstimate, start: &[f64]) -> Result<Stationarity> {
    Error::check_dim(phi.states(), start.len())?;
    let closed = closed_class_count(phi);
    if closed != 1 {
        return Ok(Stationarity::NonUnique { closed_classes: closed });
    }
    let total: f64 = start.iter().sum();
    let mut psi: Vec<f64> = start.iter().map(|v| v / total).collect();
    for it in 1..=STATIONARY_MAX_ITERS {
        let moved = phi.apply(&psi);
        let next: Vec<f64> = psi.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect();
        let s: f64 = next.iter().sum();
        let next: Vec<f64> = next.into_iter().map(|v| v / s).collect();
        let step: f64 = next.iter().zip(&psi).map(|(a, b)| (a - b).abs()).sum();
        psi = next;
        if step < STATIONARY_TOL {
            return Ok(Stationarity::Unique {
                psi: Pmf::from_weights(psi)?,
                iterations: it,
            });
        }
    }
    Err(Error::domain("power iteration did not reach tolerance"))
}

fn row_samplers(phi: &TransitionEstimate) -> Vec<CdfSampler> {
    phi.phi.iter().map(|r| CdfSampler::new(r)).collect()
}

/// Visit frequencies of a `steps`-step trajectory started at `start`.
pub fn simulate_occupancy(phi: &TransitionEstimate, start: usize, steps: usize, seed: u64) -> Result<Pmf> {
    if start >= phi.states() || steps == 0 {
        return Err(Error::domain("bad start state or zero steps"));
    }
    let samplers = row_samplers(phi);
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0.0; phi.states()];
    let mut s = start;
    for _ in 0..steps {
        s = samplers[s].draw(&mut rng);
        counts[s] += 1.0;
    }
    Pmf::from_weights(counts)
}

pub const DEFAULT_EXCURSIONS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub state: usize,
    pub psi: f64,
    pub inv_expected_tau: f64,
    /// Monte-Carlo standard error of `inv_expected_tau`.
    pub sigma: f64,
    pub mean_tau: f64,
    pub excursions: usize,
}

impl HittingRow {
    pub fn within_3_sigma(&self) -> bool {
        (self.psi - self.inv_expected_tau).abs() <= 3.0 * self.sigma + 1e-12
    }
}

/// Compares `psi(s)` against `1 / E[return time to s]` estimated from
/// `excursions` simulated returns per state.
pub fn hitting_time_check(
    phi: &TransitionEstimate,
    psi: &Pmf,
    excursions: usize,
    seed: u64,
) -> Result<Vec<HittingRow>> {
    Error::check_dim(phi.states(), psi.len())?;
    if excursions < 2 {
        return Err(Error::Config("need at least two excursions".into()));
    }
    let samplers = row_samplers(phi);
    let mut rows = Vec::with_capacity(phi.states());
    for s in 0..phi.states() {
        let mut rng = rng_from_seed(derive_seed(seed, s as u64));
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..excursions {
            let mut cur = s;
            let mut tau = 0u64;
            loop {
                cur = samplers[cur].draw(&mut rng);
                tau += 1;
                if cur == s {
                    break;
                }
            }
            let t = tau as f64;
            sum += t;
            sum_sq += t * t;
        }
        let n = excursions as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        // delta method for 1 / mean
        let sigma = var.sqrt() / n.sqrt() / (mean * mean);
        rows.push(HittingRow {
            state: s,
            psi: psi[s],
            inv_expected_tau: 1.0 / mean,
            sigma,
            mean_tau: mean,
            excursions,
        });
    }
    Ok(rows)
}
