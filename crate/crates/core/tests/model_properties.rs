use mjls_core::fixtures;
use mjls_core::linalg::{svd, Matrix};
use mjls_core::model::{build_beta, compose_integrated, stationary_distribution, RegionPartition, DEFAULT_BETA_TOL};
use proptest::prelude::*;

fn stochastic() -> impl Strategy<Value = Matrix> {
    (2usize..=5).prop_flat_map(|n| {
        (prop::collection::vec(0.0..1.0f64, n * n), prop::collection::vec(any::<bool>(), n * n)).prop_map(
            move |(raw, zero)| {
                let mut a = Matrix::zeros(n, n);
                for i in 0..n {
                    // sparse rows and duplicated rows reach the singular cases
                    let mut row: Vec<f64> = (0..n).map(|j| if zero[i * n + j] { 0.0 } else { raw[i * n + j] }).collect();
                    if row.iter().all(|v| *v == 0.0) {
                        row[i] = 1.0;
                    }
                    let s: f64 = row.iter().sum();
                    for j in 0..n {
                        a[(i, j)] = row[j] / s;
                    }
                }
                if zero[0] && n > 2 {
                    let r0 = a.row(0).to_vec();
                    a.as_mut_slice()[n..2 * n].copy_from_slice(&r0);
                }
                a
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn beta_is_a_generalised_inverse(alpha in stochastic()) {
        let beta = build_beta(&alpha, DEFAULT_BETA_TOL).unwrap();
        let aba = &(&alpha * &beta) * &alpha;
        prop_assert!((&aba - &alpha).max_abs() <= 1e-8);
        if svd(&alpha).unwrap().condition_number() < 1e6 {
            let ba = &beta * &alpha;
            prop_assert!((&ba - &Matrix::identity(alpha.rows())).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn regions_cover_the_state_space(
        thresholds in prop::collection::btree_set(0u32..1000, 0..5),
        x in prop::collection::vec(-40.0..40.0f64, 1..4),
    ) {
        let t: Vec<f64> = thresholds.into_iter().map(f64::from).collect();
        let p = RegionPartition::new(t.clone()).unwrap();
        let r = p.region_index(&x);
        prop_assert!(r < p.num_regions());
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        if r > 0 {
            prop_assert!(t[r - 1] <= norm_sq);
        }
        if r < t.len() {
            prop_assert!(norm_sq < t[r]);
        }
    }

    #[test]
    fn stationary_distribution_is_a_left_null_vector(raw in prop::collection::vec(0.1..3.0f64, 9)) {
        let mut g = Matrix::new(3, 3, raw).unwrap();
        for i in 0..3 {
            g[(i, i)] = 0.0;
            let s: f64 = g.row(i).iter().sum();
            g[(i, i)] = -s;
        }
        let pi = stationary_distribution(&g).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        for j in 0..3 {
            let v: f64 = (0..3).map(|i| pi[i] * g[(i, j)]).sum();
            prop_assert!(v.abs() <= 1e-10);
            prop_assert!(pi[j] > 0.0);
        }
    }
}

#[test]
fn integrated_example_cells_match_subsystem_regions() {
    let model = fixtures::example_model();
    let integ = compose_integrated(&model).unwrap();
    let (x1, x2) = fixtures::example_initial_state();
    let (m1, m2) = model.regions_at(&x1, &x2).unwrap();
    let joint: Vec<f64> = x1.iter().chain(&x2).copied().collect();
    assert_eq!(integ.cell_index(&joint).unwrap(), integ.cells.encode(m1, m2));
    // |x1|² = 61 and |x2|² = 98.25 both lie in the outer shells
    assert_eq!((m1, m2), (1, 2));
}
