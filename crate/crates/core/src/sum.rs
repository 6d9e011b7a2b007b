/// Pairwise (cascade) summation.
///
/// Error grows as O(log n) instead of O(n) for sequential accumulation, and
/// the result depends only on the slice contents, never on how many threads
/// produced them.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_sequential_on_small_input() {
        let v = [1.0, 2.0, 3.0, 4.5];
        assert_eq!(pairwise_sum(&v), 10.5);
    }

    #[test]
    fn large_input_close_to_exact() {
        let v: Vec<f64> = (0..100_000).map(|i| (i as f64) * 1e-3).collect();
        let exact = 0.5 * 99_999.0 * 100_000.0 * 1e-3;
        let got = pairwise_sum(&v);
        assert!((got - exact).abs() / exact < 1e-12);
    }
}
