//! Optimal 1-D contiguous clustering (natural-breaks style): the partition of
//! sorted values into k classes minimizing the within-class sum of squared
//! deviations, by dynamic programming over prefix sums.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JenksError {
    #[error("empty input")]
    EmptyInput,
    #[error("class count must be between 1 and the number of values")]
    BadClassCount,
}

#[derive(Debug, Clone)]
pub struct JenksResult<T> {
    /// Class index for each input value, in input order.
    pub assignments: Vec<usize>,
    /// Per-class mean, classes ordered by ascending value.
    pub means: Vec<T>,
    /// Per-class member count.
    pub sizes: Vec<usize>,
    /// Total within-class sum of squared deviations.
    pub ssd: T,
}

pub fn jenks_cluster_1d<T: Real>(values: &[T], k: usize) -> Result<JenksResult<T>, JenksError> {
    if values.is_empty() {
        return Err(JenksError::EmptyInput);
    }
    if k == 0 || k > values.len() {
        return Err(JenksError::BadClassCount);
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<T> = order.iter().map(|&i| values[i]).collect();

    // prefix sums for O(1) segment costs
    let mut s1 = vec![T::zero(); n + 1];
    let mut s2 = vec![T::zero(); n + 1];
    for (i, v) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + *v;
        s2[i + 1] = s2[i] + *v * *v;
    }
    let cost = |lo: usize, hi: usize| -> T {
        // inclusive segment [lo, hi]
        let len = T::from_usize(hi - lo + 1).unwrap();
        let sum = s1[hi + 1] - s1[lo];
        s2[hi + 1] - s2[lo] - sum * sum / len
    };

    // dp[c][i]: best cost of splitting sorted[0..=i] into c+1 classes
    let mut dp = vec![vec![T::infinity(); n]; k];
    let mut cut = vec![vec![0usize; n]; k];
    for i in 0..n {
        dp[0][i] = cost(0, i);
    }
    for c in 1..k {
        for i in c..n {
            let mut best = T::infinity();
            let mut arg = c;
            for t in c..=i {
                let cand = dp[c - 1][t - 1] + cost(t, i);
                if cand < best {
                    best = cand;
                    arg = t;
                }
            }
            dp[c][i] = best;
            cut[c][i] = arg;
        }
    }

    // backtrack class boundaries
    let mut bounds = vec![0usize; k + 1];
    bounds[k] = n;
    let mut end = n - 1;
    for c in (1..k).rev() {
        let t = cut[c][end];
        bounds[c] = t;
        end = t - 1;
    }

    let mut means = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    let mut class_of_sorted = vec![0usize; n];
    for c in 0..k {
        let (lo, hi) = (bounds[c], bounds[c + 1]);
        let len = T::from_usize(hi - lo).unwrap();
        means.push((s1[hi] - s1[lo]) / len);
        sizes.push(hi - lo);
        for item in class_of_sorted.iter_mut().take(hi).skip(lo) {
            *item = c;
        }
    }
    let mut assignments = vec![0usize; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = class_of_sorted[pos];
    }
    Ok(JenksResult { assignments, means, sizes, ssd: dp[k - 1][n - 1] })
}
