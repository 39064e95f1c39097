//! Probability vectors, stochastic channels and seeded sampling.
//!
//! All randomness goes through [`ChaCha8Rng`], seeded from a `u64`. ChaCha8 is
//! a fixed, platform-independent stream cipher construction, so a seed
//! reproduces the same draws on every machine. Sub-seeds for independent
//! streams (per cycle, per worker) come from [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a vector (or channel row) to count as summing to one.
pub const PMF_TOL: f64 = 1e-9;

/// A probability vector over the cells of a location space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf(Vec<f64>);

impl Pmf {
    /// Validates `p` as a probability vector without renormalizing it.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::domain("probability vector must be non-empty"));
        }
        if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::domain(format!("invalid probability entry {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Pmf(p))
    }

    /// Builds a pmf proportional to nonnegative `weights`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::domain(format!("invalid weight {bad}")));
        }
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(Error::domain("weights must have positive total mass"));
        }
        Ok(Pmf(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn point_mass(m: usize, at: usize) -> Result<Self> {
        if at >= m {
            return Err(Error::domain(format!("cell {at} outside space of size {m}")));
        }
        let mut p = vec![0.0; m];
        p[at] = 1.0;
        Ok(Pmf(p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_full_support(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// `(1 - w) p + w u` with `u` uniform; full support for any `w > 0`.
    pub fn smoothed(&self, w: f64) -> Result<Pmf> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::domain(format!("mixing weight {w} outside [0, 1]")));
        }
        let u = w / self.0.len() as f64;
        Ok(Pmf(self.0.iter().map(|p| (1.0 - w) * p + u).collect()))
    }

    /// L1 distance to another pmf of the same length.
    pub fn l1(&self, other: &Pmf) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Pmf::new(p)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.0
    }
}

/// A row-stochastic matrix: `get(x, y)` is the probability of reporting `y`
/// when the true cell is `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Channel {
    m: usize,
    data: Vec<f64>,
}

impl Channel {
    /// Validates a row-major `m x m` matrix.
    pub fn from_flat(m: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("channel must have at least one row"));
        }
        Error::check_dim(m * m, data.len())?;
        for (x, row) in data.chunks(m).enumerate() {
            if let Some(bad) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::domain(format!("row {x} has invalid entry {bad}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PMF_TOL {
                return Err(Error::domain(format!("row {x} sums to {total}, not 1")));
            }
        }
        Ok(Channel { m, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let mut data = Vec::with_capacity(m * m);
        for row in rows {
            Error::check_dim(m, row.len())?;
            data.extend(row);
        }
        Channel::from_flat(m, data)
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for x in 0..m {
            data[x * m + x] = 1.0;
        }
        Channel { m, data }
    }

    /// Number of cells (rows = columns).
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.m + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.m..(x + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.m)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// True when every entry is strictly positive.
    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    /// Largest L1 difference between corresponding rows.
    pub fn max_row_l1(&self, other: &Channel) -> f64 {
        self.rows()
            .zip(other.rows())
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Channel {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Channel::from_rows(rows)
    }
}

impl From<Channel> for Vec<Vec<f64>> {
    fn from(c: Channel) -> Self {
        c.to_rows()
    }
}

/// A multiset of cell indices, with the seed that produced it when it was
/// generated rather than ingested.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn from_indices(indices: Vec<usize>) -> Self {
        SampleSet { indices, seed: None }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks every index against a space of size `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= m) {
            Some(i) => Err(Error::domain(format!("sample index {i} outside space of size {m}"))),
            None => Ok(()),
        }
    }
}

pub fn uniform_pmf(m: usize) -> Result<Pmf> {
    if m == 0 {
        return Err(Error::domain("space must have at least one cell"));
    }
    Ok(Pmf(vec![1.0 / m as f64; m]))
}

pub fn uniform_channel(m: usize) -> Result<Channel> {
    if m == 0 {
        return Err(Error::domain("space must have at least one cell"));
    }
    Ok(Channel {
        m,
        data: vec![1.0 / m as f64; m * m],
    })
}

/// Mixes `stream` into `seed` with the SplitMix64 finalizer, giving the seed
/// of an independent sub-stream. Deterministic and platform-independent.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed.wrapping_add(mix(stream.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverse-CDF sampler over a fixed probability vector.
#[derive(Clone, Debug)]
pub struct CdfSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CdfSampler {
    pub fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        let last_positive = p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        CdfSampler { cdf, last_positive }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        // first index whose cumulative mass exceeds u; rounding in the last
        // partial sum can leave u beyond it, hence the clamp
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.last_positive)
    }
}

/// `n` i.i.d. draws from `pmf`.
pub fn sample(pmf: &Pmf, n: usize, seed: u64) -> SampleSet {
    let sampler = CdfSampler::new(pmf.as_slice());
    let mut rng = rng_from_seed(seed);
    let indices = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    SampleSet {
        indices,
        seed: Some(seed),
    }
}

/// Replaces every sample `x` with an independent draw from row `x` of `channel`.
pub fn obfuscate(samples: &SampleSet, channel: &Channel, seed: u64) -> Result<SampleSet> {
    samples.validate(channel.size())?;
    let samplers: Vec<CdfSampler> = channel.rows().map(CdfSampler::new).collect();
    let mut rng = rng_from_seed(seed);
    let indices = samples.indices.iter().map(|&x| samplers[x].draw(&mut rng)).collect();
    Ok(SampleSet {
        indices,
        seed: Some(seed),
    })
}

/// Output distribution of `channel` when its input follows `pmf`.
pub fn push_forward(pmf: &Pmf, channel: &Channel) -> Result<Pmf> {
    Error::check_dim(channel.size(), pmf.len())?;
    let out = push_forward_raw(pmf.as_slice(), channel);
    Ok(Pmf(out))
}

pub(crate) fn push_forward_raw(p: &[f64], channel: &Channel) -> Vec<f64> {
    let m = channel.size();
    let mut out = vec![0.0; m];
    for (px, row) in p.iter().zip(channel.rows()) {
        if *px == 0.0 {
            continue;
        }
        for (o, c) in out.iter_mut().zip(row) {
            *o += px * c;
        }
    }
    out
}

/// Crate-internal constructor for vectors produced by exact-mass algorithms.
pub(crate) fn pmf_unchecked(p: Vec<f64>) -> Pmf {
    debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    Pmf(p)
}

pub(crate) fn channel_unchecked(m: usize, data: Vec<f64>) -> Channel {
    debug_assert_eq!(data.len(), m * m);
    Channel { m, data }
}
