//! Order-fixed summation helpers used by every likelihood reduction.

/// Pairwise (cascade) summation. The split points depend only on the slice
/// length, so a given input order always yields the same bits.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v = [1.0, 2.0, 3.5];
        assert_eq!(pairwise_sum(&v), 6.5);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn compensated_sum_of_repeated_value_divides_back_exactly() {
        let x = 0.123_456_789_012_345_6_f64;
        let mut acc = CompensatedSum::default();
        for _ in 0..500 {
            acc.add(x);
        }
        assert!((acc.value() / 500.0 - x).abs() <= f64::EPSILON * x);
    }

    #[test]
    fn pairwise_is_close_to_exact_for_long_sums() {
        let v: Vec<f64> = (0..100_000).map(|i| -1.0 - (i % 7) as f64 * 0.1).collect();
        let exact: f64 = (0..100_000).map(|i| -10.0 - (i % 7) as f64).sum::<f64>() / 10.0;
        assert!((pairwise_sum(&v) - exact).abs() < 1e-8);
    }
}
