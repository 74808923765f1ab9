//! Fixed-shape pairwise reductions.
//!
//! Every mean and sum that feeds a loss, a gradient moment, or a reported
//! metric goes through these helpers. Pairwise summation has O(log n)
//! rounding-error growth instead of O(n), and, just as important here,
//! the reduction tree depends only on the slice length, so results are
//! bit-identical across runs and thread counts.

/// Below this length a straight loop is both faster and accurate enough;
/// the split point is still deterministic.
const LEAF: usize = 32;

/// Pairwise sum of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f` mapped over the slice.
pub fn pairwise_sum_by<T>(xs: &[T], f: &impl Fn(&T) -> f64) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for x in xs {
            s += f(x);
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

/// Pairwise mean; 0.0 for an empty slice (a point family with no points
/// contributes nothing to a loss).
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

pub fn pairwise_mean_by<T>(xs: &[T], f: impl Fn(&T) -> f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum_by(xs, &f) / xs.len() as f64
}

/// Pairwise dot product of equal-length slices.
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= LEAF {
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b) {
            s += x * y;
        }
        return s;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Element-wise pairwise sum of equal-length rows, mapped through `f`.
/// The accumulator is written into `out`.
fn rows_sum_map(rows: &[Vec<f64>], f: &impl Fn(f64) -> f64, out: &mut [f64]) {
    if rows.len() <= 4 {
        out.fill(0.0);
        for row in rows {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += f(x);
            }
        }
        return;
    }
    let mid = rows.len() / 2;
    let mut right = vec![0.0; out.len()];
    rows_sum_map(&rows[..mid], f, out);
    rows_sum_map(&rows[mid..], f, &mut right);
    for (o, r) in out.iter_mut().zip(&right) {
        *o += r;
    }
}

/// Element-wise mean of rows.
pub fn rows_mean(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    rows_mean_map(rows, dim, |x| x)
}

/// Element-wise mean of `f` applied to rows (used for mean-of-squares).
pub fn rows_mean_map(rows: &[Vec<f64>], dim: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if rows.is_empty() {
        return out;
    }
    rows_sum_map(rows, &f, &mut out);
    let inv = 1.0 / rows.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}
