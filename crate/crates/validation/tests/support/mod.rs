//! Brute-force optimal transport by basic-solution enumeration.

#![allow(dead_code, clippy::needless_range_loop)]

/// Minimum cost of moving `p` onto `q` under `cost` (row-major), found by
/// trying every set of `2m - 1` shipping lanes as an LP basis.
pub fn transport_lp(p: &[f64], q: &[f64], cost: &[f64]) -> f64 {
    let m = p.len();
    assert_eq!(q.len(), m);
    assert_eq!(cost.len(), m * m);
    if m == 1 {
        return 0.0;
    }
    // row sums for every source, column sums for all but the last target;
    // the dropped constraint is implied by total mass
    let rows = 2 * m - 1;
    let mut rhs = Vec::with_capacity(rows);
    rhs.extend_from_slice(p);
    rhs.extend_from_slice(&q[..m - 1]);
    let column = |v: usize| -> Vec<f64> {
        let (i, j) = (v / m, v % m);
        let mut c = vec![0.0; rows];
        c[i] = 1.0;
        if j < m - 1 {
            c[m + j] = 1.0;
        }
        c
    };
    let mut best = f64::INFINITY;
    for_each_subset(m * m, rows, &mut |basis| {
        let mut a: Vec<Vec<f64>> = (0..rows)
            .map(|r| basis.iter().map(|&v| column(v)[r]).collect())
            .collect();
        let mut b = rhs.clone();
        if let Some(x) = solve(&mut a, &mut b) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = basis.iter().zip(&x).map(|(&v, &xv)| cost[v] * xv.max(0.0)).sum();
                best = best.min(c);
            }
        }
    });
    best
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}
