//! Order-independent reductions.

use nalgebra::DVector;

/// Pairwise summation over a fixed binary tree, so the result depends only
/// on the order of `values`, never on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Component-wise pairwise mean of equally sized vectors.
pub fn pairwise_mean(rows: &[DVector<f64>]) -> DVector<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len().max(1) as f64;
    DVector::from_iterator(
        d,
        (0..d).map(|k| pairwise_sum(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()) / n),
    )
}

pub fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match_naive_on_exact_values() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
        let rows = vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, 6.0]),
        ];
        assert_eq!(pairwise_mean(&rows), DVector::from_vec(vec![2.0, 4.0]));
    }
}
