//! TOPSIS ranking over the five-column decision matrix.

use super::{Row, SelectionError, WeightVector, CRITERIA};

/// Every intermediate of one TOPSIS run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub matrix: Vec<Row>,
    pub normalized: Vec<Row>,
    pub weighted: Vec<Row>,
    pub ideal_pos: Row,
    pub ideal_neg: Row,
    pub dist_pos: Vec<f64>,
    pub dist_neg: Vec<f64>,
    pub closeness: Vec<f64>,
}

pub fn topsis(matrix: &[Row], w: &WeightVector) -> Result<DecisionOutcome, SelectionError> {
    if matrix.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    if matrix.iter().flatten().any(|x| !x.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    w.validate()?;
    let weights = w.as_row();

    let mut norms = [0.0; CRITERIA];
    for row in matrix {
        for (n, x) in norms.iter_mut().zip(row) {
            *n += x * x;
        }
    }
    let norms = norms.map(f64::sqrt);

    let normalized: Vec<Row> = matrix
        .iter()
        .map(|row| std::array::from_fn(|j| if norms[j] > 0.0 { row[j] / norms[j] } else { 0.0 }))
        .collect();
    let weighted: Vec<Row> = normalized.iter().map(|row| std::array::from_fn(|j| weights[j] * row[j])).collect();

    let mut ideal_pos = [f64::NEG_INFINITY; CRITERIA];
    let mut ideal_neg = [f64::INFINITY; CRITERIA];
    for row in &weighted {
        for j in 0..CRITERIA {
            ideal_pos[j] = ideal_pos[j].max(row[j]);
            ideal_neg[j] = ideal_neg[j].min(row[j]);
        }
    }

    let distance = |row: &Row, ideal: &Row| row.iter().zip(ideal).map(|(z, i)| (z - i).powi(2)).sum::<f64>().sqrt();
    let dist_pos: Vec<f64> = weighted.iter().map(|r| distance(r, &ideal_pos)).collect();
    let dist_neg: Vec<f64> = weighted.iter().map(|r| distance(r, &ideal_neg)).collect();
    let closeness = dist_pos
        .iter()
        .zip(&dist_neg)
        .map(|(&dp, &dn)| if dp + dn > 0.0 { dn / (dp + dn) } else { 0.5 })
        .collect();

    Ok(DecisionOutcome { matrix: matrix.to_vec(), normalized, weighted, ideal_pos, ideal_neg, dist_pos, dist_neg, closeness })
}

/// Relative closeness of each row to the ideal node, in `[0, 1]`.
pub fn topsis_closeness(matrix: &[Row], w: &WeightVector) -> Result<Vec<f64>, SelectionError> {
    topsis(matrix, w).map(|o| o.closeness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive transcription working column by column on a transposed copy,
    /// sharing no code with the implementation above.
    fn naive(m: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
        let n = m.len();
        let cols: Vec<Vec<f64>> = (0..5).map(|j| (0..n).map(|i| m[i][j]).collect()).collect();
        let z: Vec<Vec<f64>> = cols
            .iter()
            .enumerate()
            .map(|(j, col)| {
                let mut s = 0.0;
                for v in col {
                    s += v * v;
                }
                let d = s.sqrt();
                col.iter().map(|v| if d == 0.0 { 0.0 } else { w[j] * (v / d) }).collect()
            })
            .collect();
        let best: Vec<f64> = z.iter().map(|c| c.iter().cloned().fold(f64::MIN, f64::max)).collect();
        let worst: Vec<f64> = z.iter().map(|c| c.iter().cloned().fold(f64::MAX, f64::min)).collect();
        (0..n)
            .map(|i| {
                let mut dp = 0.0;
                let mut dn = 0.0;
                for j in 0..5 {
                    dp += (z[j][i] - best[j]) * (z[j][i] - best[j]);
                    dn += (z[j][i] - worst[j]) * (z[j][i] - worst[j]);
                }
                let (dp, dn) = (dp.sqrt(), dn.sqrt());
                if dp + dn == 0.0 { 0.5 } else { dn / (dp + dn) }
            })
            .collect()
    }

    #[test]
    fn identical_rows_tie_at_half() {
        let m = [[100.0, 0.4, -20.0, -30.0, -40.0]; 2];
        assert_eq!(topsis_closeness(&m, &WeightVector::default()).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn dominating_row_scores_one() {
        let m = [[200.0, 0.9, -10.0, -10.0, -10.0], [100.0, 0.1, -50.0, -60.0, -70.0]];
        let c = topsis_closeness(&m, &WeightVector::default()).unwrap();
        assert_eq!(c, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_column_is_neutral() {
        let m = [[200.0, 0.0, -10.0, -10.0, -10.0], [100.0, 0.0, -50.0, -60.0, -70.0]];
        let o = topsis(&m, &WeightVector::default()).unwrap();
        assert!(o.normalized.iter().all(|r| r[1] == 0.0));
        assert_eq!(o.closeness, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(topsis(&[], &WeightVector::default()), Err(SelectionError::EmptyPool));
        let m = [[f64::NAN, 0.0, 0.0, 0.0, 0.0]];
        assert_eq!(topsis(&m, &WeightVector::default()), Err(SelectionError::NonFinite));
    }

    #[test]
    fn intermediates_follow_the_pipeline() {
        let m = [[3.0, 4.0, -1.0, -1.0, -1.0], [4.0, 3.0, -1.0, -1.0, -1.0]];
        let o = topsis(&m, &WeightVector::default()).unwrap();
        assert!((o.normalized[0][0] - 0.6).abs() < 1e-12);
        assert!((o.weighted[0][0] - 0.6 * 0.20).abs() < 1e-12);
        assert!((o.weighted[0][1] - 0.8 * 0.25).abs() < 1e-12);
        assert_eq!(o.ideal_pos[0], o.weighted[1][0]);
        assert_eq!(o.ideal_neg[0], o.weighted[0][0]);
        for i in 0..2 {
            assert!((o.closeness[i] - o.dist_neg[i] / (o.dist_pos[i] + o.dist_neg[i])).abs() < 1e-15);
        }
        // P carries the larger weight, so row 0 wins.
        assert!(o.closeness[0] > o.closeness[1]);
    }

    fn matrices() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(
            (0.0f64..1e5, -2.0f64..1.0, 0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0)
                .prop_map(|(v, p, l, c, r)| vec![v, p, -l, -c, -r]),
            1..=10,
        )
    }

    proptest! {
        #[test]
        fn matches_naive_oracle(m in matrices()) {
            let rows: Vec<Row> = m.iter().map(|r| [r[0], r[1], r[2], r[3], r[4]]).collect();
            let w = WeightVector::default();
            let got = topsis_closeness(&rows, &w).unwrap();
            let want = naive(&m, &w.as_row());
            for (g, e) in got.iter().zip(&want) {
                prop_assert!((g - e).abs() <= 1e-9);
                prop_assert!((0.0..=1.0).contains(g));
            }
        }

        #[test]
        fn column_scaling_cancels(m in matrices(), col in 0usize..5, k in 1e-3f64..1e3) {
            let rows: Vec<Row> = m.iter().map(|r| [r[0], r[1], r[2], r[3], r[4]]).collect();
            let scaled: Vec<Row> = rows.iter().map(|r| { let mut r = *r; r[col] *= k; r }).collect();
            let w = WeightVector::default();
            let a = topsis_closeness(&rows, &w).unwrap();
            let b = topsis_closeness(&scaled, &w).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y);
            }
        }
    }
}
