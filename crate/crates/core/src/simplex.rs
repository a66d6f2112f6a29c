//! Euclidean projection onto the scaled simplex `{u ≥ 0, Σu = B}`.

/// Returns `argmin ‖u - v‖₂` over `{u ≥ 0, Σu = budget}` using the
/// sort-and-threshold rule. Ties in the sort are broken by index, so the
/// result is deterministic. `budget = 0` yields the zero vector.
pub fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    assert!(budget >= 0.0, "budget must be nonnegative");
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    if budget == 0.0 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        cumsum += v[idx];
        let candidate = (cumsum - budget) / (k + 1) as f64;
        if v[idx] - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_projections() {
        assert_eq!(project_simplex(&[1.0, 1.0], 2.0), vec![1.0, 1.0]);
        assert_eq!(project_simplex(&[3.0, 1.0], 2.0), vec![2.0, 0.0]);
        assert_eq!(project_simplex(&[5.0, 0.0, 0.0], 3.0), vec![3.0, 0.0, 0.0]);
        assert_eq!(project_simplex(&[0.0, 0.0], 4.0), vec![2.0, 2.0]);
        assert_eq!(project_simplex(&[-1.0, 7.0], 0.0), vec![0.0, 0.0]);
        assert_eq!(project_simplex(&[-3.0, -1.0, -2.0], 1.0), vec![0.0, 1.0, 0.0]);
    }

    fn vec_and_budget() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (proptest::collection::vec(-50.0f64..50.0, 1..9), 0.0f64..40.0)
    }

    proptest! {
        #[test]
        fn feasible_and_idempotent((v, b) in vec_and_budget()) {
            let p = project_simplex(&v, b);
            prop_assert!(p.iter().all(|&u| u >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - b).abs() <= 1e-12 * b.max(1.0));
            let q = project_simplex(&p, b);
            for (a, c) in p.iter().zip(&q) {
                prop_assert!((a - c).abs() <= 1e-12 * b.max(1.0));
            }
        }

        #[test]
        fn closer_than_random_feasible_points((v, b) in vec_and_budget(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = project_simplex(&v, b);
            let dist = |u: &[f64]| u.iter().zip(&v).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let best = dist(&p);
            for _ in 0..1000 {
                let raw: Vec<f64> = (0..v.len()).map(|_| -rng.gen::<f64>().ln()).collect();
                let s: f64 = raw.iter().sum();
                let u: Vec<f64> = raw.iter().map(|r| r / s * b).collect();
                prop_assert!(best <= dist(&u) + 1e-12);
            }
        }
    }
}
