//! Multi-positive NT-Xent over cosine similarities.
//!
//! For an anchor `i` and a positive `j`:
//!
//! ```text
//! l(i,j) = -s(i,j)/tau + log sum_{k != i, k not in P(i)} exp(s(i,k)/tau)
//! ```
//!
//! The denominator leaves the positives out, so the loss can go negative.
//! `include_positive` switches to the usual form that keeps them. The batch
//! loss is the mean over all ordered positive pairs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `dL/dz` for every embedding.
    pub grads: Vec<Vec<f64>>,
    /// Number of ordered positive pairs averaged over.
    pub pairs: usize,
}

/// Positive sets from group labels: same label, different index.
pub fn positives_from_groups(groups: &[usize]) -> Vec<Vec<usize>> {
    groups
        .iter()
        .enumerate()
        .map(|(i, gi)| {
            groups
                .iter()
                .enumerate()
                .filter(|&(j, gj)| j != i && gj == gi)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn check_positive_sets(positives: &[Vec<usize>], n: usize) -> Result<()> {
    if positives.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: positives.len(),
        });
    }
    for (i, p) in positives.iter().enumerate() {
        for &j in p {
            if j >= n || j == i {
                return Err(Error::InvalidArgument(format!(
                    "bad positive {j} for anchor {i}"
                )));
            }
            if !positives[j].contains(&i) {
                return Err(Error::InvalidArgument(format!(
                    "positive sets not symmetric: {j} in P({i}) but {i} not in P({j})"
                )));
            }
        }
    }
    Ok(())
}

/// Loss and analytic gradients. Anchors that have positives but no
/// negatives have an empty denominator and are skipped; a batch where
/// nothing contributes is an error.
pub fn nt_xent(
    z: &[Vec<f64>],
    positives: &[Vec<usize>],
    tau: f64,
    include_positive: bool,
) -> Result<LossOutput> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature {tau} must be positive"
        )));
    }
    let n = z.len();
    check_positive_sets(positives, n)?;
    let dim = z.first().map_or(0, Vec::len);
    let mut unit = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for v in z {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        norms.push(norm);
        unit.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| dot(&unit[i], &unit[k])).collect())
        .collect();

    // dL/ds(i,k) before dividing by the pair count.
    let mut ds = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        if positives[i].is_empty() {
            continue;
        }
        let denom: Vec<usize> = (0..n)
            .filter(|&k| k != i && (include_positive || !positives[i].contains(&k)))
            .collect();
        if denom.is_empty() {
            continue;
        }
        let m = denom
            .iter()
            .map(|&k| sim[i][k] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = denom.iter().map(|&k| (sim[i][k] / tau - m).exp()).collect();
        let zsum: f64 = weights.iter().sum();
        let lse = m + zsum.ln();
        let np = positives[i].len() as f64;
        for &j in &positives[i] {
            total += -sim[i][j] / tau + lse;
            ds[i][j] -= 1.0 / tau;
        }
        for (&k, w) in denom.iter().zip(&weights) {
            ds[i][k] += np * w / zsum / tau;
        }
        pairs += positives[i].len();
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument(
            "batch has no positive pair with a non-empty denominator".into(),
        ));
    }
    let scale = 1.0 / pairs as f64;

    // s(i,k) = u_i . u_k, so it feeds both unit vectors.
    let mut du = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for k in 0..n {
            let g = ds[i][k] * scale;
            if g == 0.0 {
                continue;
            }
            for c in 0..dim {
                du[i][c] += g * unit[k][c];
                du[k][c] += g * unit[i][c];
            }
        }
    }
    // Through normalization: dz = (du - (du . u) u) / |z|.
    let grads = (0..n)
        .map(|i| {
            let proj = dot(&du[i], &unit[i]);
            (0..dim)
                .map(|c| (du[i][c] - proj * unit[i][c]) / norms[i])
                .collect()
        })
        .collect();
    Ok(LossOutput {
        loss: total * scale,
        grads,
        pairs,
    })
}
