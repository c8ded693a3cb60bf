use bnmf_community::communities::{adjusted_rand_index, kruskal_wallis, soft_membership};
use bnmf_community::data::{one_mode_projection, LearnerCategoryMatrix};
use bnmf_community::evaluation::{holdout_count, holdout_split};
use bnmf_community::model::FactorModel;
use bnmf_community::synthetic::{sample_planted, PlantedSpec};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn binary_matrix() -> impl Strategy<Value = Array2<u8>> {
    (1usize..12, 1usize..10).prop_flat_map(|(n, d)| {
        proptest::collection::vec(proptest::bool::weighted(0.4), n * d).prop_map(move |cells| {
            let mut m = Array2::from_shape_vec((n, d), cells.into_iter().map(u8::from).collect())
                .unwrap();
            for (i, mut row) in m.rows_mut().into_iter().enumerate() {
                if row.iter().all(|&v| v == 0) {
                    row[i % d] = 1;
                }
            }
            m
        })
    })
}

fn learners(entries: Array2<u8>) -> LearnerCategoryMatrix {
    let (n, d) = entries.dim();
    LearnerCategoryMatrix::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        (0..d).map(|j| format!("c{j}")).collect(),
        entries,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn projection_is_symmetric_and_bounded(entries in binary_matrix()) {
        let x = one_mode_projection(&learners(entries));
        let n = x.n();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(x.get(i, j), x.get(j, i));
                prop_assert!(x.get(i, j) <= x.get(i, i).min(x.get(j, j)));
            }
        }
        prop_assert!(x.check_projection_bounds().is_ok());
    }

    #[test]
    fn projection_is_permutation_equivariant(entries in binary_matrix(), shift in 0usize..12) {
        let n = entries.nrows();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted = Array2::from_shape_fn(entries.dim(), |(i, k)| entries[[perm[i], k]]);
        let x = one_mode_projection(&learners(entries));
        let y = one_mode_projection(&learners(permuted));
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(y.get(i, j), x.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn disjoint_supports_give_diagonal_projection(sizes in proptest::collection::vec(1usize..4, 1..6)) {
        let n = sizes.len();
        let d: usize = sizes.iter().sum();
        let mut entries = Array2::<u8>::zeros((n, d));
        let mut col = 0;
        for (i, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                entries[[i, col]] = 1;
                col += 1;
            }
        }
        let x = one_mode_projection(&learners(entries));
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { sizes[i] as u32 } else { 0 };
                prop_assert_eq!(x.get(i, j), expected);
            }
        }
    }

    #[test]
    fn membership_ignores_row_scale(
        cells in proptest::collection::vec(0.01f64..5.0, 12),
        scale in 0.01f64..100.0,
    ) {
        let w = Array2::from_shape_vec((4, 3), cells).unwrap();
        let mut scaled = w.clone();
        scaled.row_mut(2).mapv_inplace(|v| v * scale);
        let ids: Vec<String> = (0..4).map(|i| format!("u{i}")).collect();
        let h = Array2::ones((3, 4));
        let a = soft_membership(&FactorModel::new(w, h.clone(), Array1::ones(3)).unwrap(), &ids).unwrap();
        let b = soft_membership(&FactorModel::new(scaled, h, Array1::ones(3)).unwrap(), &ids).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.hard_label, q.hard_label);
            for (u, v) in p.distribution.iter().zip(&q.distribution) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kruskal_wallis_is_rank_based(
        g1 in proptest::collection::vec(-50i32..50, 1..8),
        g2 in proptest::collection::vec(-50i32..50, 2..8),
        g3 in proptest::collection::vec(-50i32..50, 1..8),
    ) {
        let raw: Vec<Vec<f64>> = [&g1, &g2, &g3]
            .iter()
            .map(|g| g.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let transformed: Vec<Vec<f64>> = raw
            .iter()
            .map(|g| g.iter().map(|&v| (v / 10.0).exp() * 3.0 + 1.0).collect())
            .collect();
        let a = kruskal_wallis(&raw).unwrap();
        let b = kruskal_wallis(&transformed).unwrap();
        prop_assert!((a.h_statistic - b.h_statistic).abs() < 1e-9);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-9);
        prop_assert!(a.h_statistic >= 0.0 && (0.0..=1.0).contains(&a.p_value));
    }

    #[test]
    fn ari_is_symmetric_and_label_invariant(
        a in proptest::collection::vec(0usize..4, 2..30),
        seed in any::<u64>(),
    ) {
        let b: Vec<usize> = a
            .iter()
            .enumerate()
            .map(|(i, &v)| if (seed >> (i % 64)) & 1 == 1 { (v + 1) % 4 } else { v })
            .collect();
        let relabelled: Vec<usize> = a.iter().map(|&v| 10 - v).collect();
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((ab - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((adjusted_rand_index(&a, &relabelled).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn holdout_hides_fixed_count_per_row(
        n in 3usize..40,
        fraction in 0.05f64..0.5,
        seed in any::<u64>(),
        symmetric in any::<bool>(),
    ) {
        let (_, x) = sample_planted(&PlantedSpec::balanced(n, 1, 2.0, 0.0, seed)).unwrap();
        let per_row = holdout_count(n, fraction);
        prop_assume!(per_row < n);
        let split = match holdout_split(&x, fraction, seed, symmetric) {
            Ok(split) => split,
            // Symmetric masking can empty a row on tiny matrices.
            Err(_) if symmetric => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        for (i, row) in split.train_mask.rows().into_iter().enumerate() {
            let hidden = row.iter().filter(|&&t| !t).count();
            if symmetric {
                prop_assert!(hidden >= per_row);
            } else {
                prop_assert_eq!(hidden, per_row, "row {}", i);
            }
        }
        if symmetric {
            prop_assert_eq!(&split.train_mask, &split.train_mask.t());
        }
        for &(i, j) in &split.test_indices {
            prop_assert!(!split.train_mask[[i, j]]);
        }
        let total_hidden = split.train_mask.iter().filter(|&&t| !t).count();
        prop_assert_eq!(total_hidden, split.test_indices.len());
    }
}
