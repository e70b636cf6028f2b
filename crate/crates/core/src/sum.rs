//! Fixed-order reductions.
//!
//! Every sum that feeds a report goes through [`pairwise_sum`] so the result
//! does not depend on how many threads produced the terms.

/// Pairwise (cascade) summation in a fixed association order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
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

/// Fixed-order maximum; NaN propagates.
pub fn max_of(xs: &[f64]) -> f64 {
    xs.iter().fold(f64::NEG_INFINITY, |m, &x| {
        if x.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(x)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn max_handles_empty_and_nan() {
        assert_eq!(max_of(&[]), f64::NEG_INFINITY);
        assert!(max_of(&[1.0, f64::NAN]).is_nan());
        assert_eq!(max_of(&[1.0, 3.0, 2.0]), 3.0);
    }
}
