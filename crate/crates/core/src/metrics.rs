//! Privacy and utility functionals over pmfs and channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::prob::{push_forward_raw, Channel, Pmf};
use crate::transport;

/// Mutual information (nats) between the input `prior` and the output of
/// `channel`. Terms with zero joint mass contribute nothing.
pub fn mutual_information(prior: &Pmf, channel: &Channel) -> Result<f64> {
    Error::check_dim(channel.size(), prior.len())?;
    let out = push_forward_raw(prior.as_slice(), channel);
    let mut mi = 0.0;
    for (x, row) in channel.rows().enumerate() {
        let px = prior[x];
        if px == 0.0 {
            continue;
        }
        for (y, &c) in row.iter().enumerate() {
            if c > 0.0 {
                mi += px * c * (c / out[y]).ln();
            }
        }
    }
    // rounding can leave a tiny negative value when the channel is constant
    Ok(mi.max(0.0))
}

/// Expected distance (km) between true and reported cell.
pub fn avg_distortion(prior: &Pmf, channel: &Channel, dist: &DistanceMatrix) -> Result<f64> {
    Error::check_dim(channel.size(), prior.len())?;
    Error::check_dim(channel.size(), dist.size())?;
    let mut total = 0.0;
    for (x, row) in channel.rows().enumerate() {
        let px = prior[x];
        if px == 0.0 {
            continue;
        }
        total += px * row.iter().zip(dist.row(x)).map(|(c, d)| c * d).sum::<f64>();
    }
    Ok(total)
}

pub fn tv_distance(p1: &Pmf, p2: &Pmf) -> Result<f64> {
    Error::check_dim(p1.len(), p2.len())?;
    Ok(0.5 * p1.l1(p2))
}

/// An optimal coupling of two pmfs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub m: usize,
    /// Row-major `m x m` joint mass.
    pub plan: Vec<f64>,
    /// Cost in km.
    pub cost: f64,
}

impl TransportPlan {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.plan[x * self.m + y]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.m).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for row in self.plan.chunks(self.m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

fn normalized_support(p: &Pmf, label: &str) -> (Vec<usize>, Vec<f64>) {
    let total: f64 = p.as_slice().iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        log::warn!("{label} has total mass {total}; renormalizing before transport");
    }
    p.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (i, v / total))
        .unzip()
}

/// Exact earth mover's distance under `dist`, with one optimal plan.
pub fn emd(p1: &Pmf, p2: &Pmf, dist: &DistanceMatrix) -> Result<(f64, TransportPlan)> {
    let m = p1.len();
    Error::check_dim(m, p2.len())?;
    Error::check_dim(m, dist.size())?;
    let (src, supply) = normalized_support(p1, "source pmf");
    let (dst, demand) = normalized_support(p2, "target pmf");
    let mut cost = Vec::with_capacity(src.len() * dst.len());
    for &i in &src {
        cost.extend(dst.iter().map(|&j| dist.get(i, j)));
    }
    let ships = transport::solve(&supply, &demand, &cost)?;
    let mut plan = vec![0.0; m * m];
    let mut total = 0.0;
    for s in ships {
        let (x, y) = (src[s.from], dst[s.to]);
        plan[x * m + y] += s.amount;
        total += s.amount * dist.get(x, y);
    }
    Ok((total, TransportPlan { m, plan, cost: total }))
}

/// Statistical utility of an estimate: its earth mover's distance (km) to
/// the true distribution. Smaller is better.
pub fn statistical_utility(estimate: &Pmf, truth: &Pmf, dist: &DistanceMatrix) -> Result<f64> {
    emd(estimate, truth, dist).map(|(cost, _)| cost)
}
