use ccemb_core::analysis::{nn_overlap_by_name, top_k_neighbours, Cosine};
use ccemb_core::bitpack::{bits_per_code, row_stride};
use ccemb_core::learner::soft_assign;
use ccemb_core::{mean_euclidean_distance, mse, pack_codes, unpack_codes, EmbeddingTable};
use proptest::prelude::*;

fn codes_strategy() -> impl Strategy<Value = (usize, usize, Vec<u32>)> {
    (2usize..=64, 1usize..=40, 1usize..=12).prop_flat_map(|(k, m, v)| {
        (Just(k), Just(m), prop::collection::vec(0..k as u32, v * m))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pack_unpack_roundtrip((k, m, codes) in codes_strategy()) {
        let v = codes.len() / m;
        let packed = pack_codes(&codes, m, k).unwrap();
        prop_assert_eq!(packed.len(), v * row_stride(m, k));
        prop_assert_eq!(row_stride(m, k), (m * bits_per_code(k) as usize + 7) / 8);
        prop_assert_eq!(unpack_codes(&packed, v, m, k).unwrap(), codes);
    }

    #[test]
    fn soft_assign_rows_are_distributions(
        k in 1usize..=16,
        m in 1usize..=6,
        seed in any::<u64>(),
        // Below ~0.5 the losing probabilities underflow relative to 1 and
        // the row rounds to an exact one-hot, which is fine but not open.
        tau in prop::sample::select(vec![0.5, 1.0, 2.0]),
    ) {
        use rand::Rng;
        let mut rng = ccemb_core::seeded_rng(seed);
        let logits: Vec<f64> = (0..m * k).map(|_| rng.random_range(0.01..5.0)).collect();
        let noise: Vec<f64> = (0..m * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = soft_assign(&logits, &noise, k, tau);
        for row in a.chunks(k) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            for &p in row {
                prop_assert!(p > 0.0 && (k == 1 || p < 1.0), "{}", p);
            }
        }
    }

    #[test]
    fn distances_are_symmetric_and_permutation_invariant(
        v in 4usize..12,
        // d = 1 makes every cosine +-1, i.e. all neighbours tie.
        d in 2usize..5,
        seed in any::<u64>(),
        shift in 1usize..4,
    ) {
        use rand::Rng;
        let mut rng = ccemb_core::seeded_rng(seed);
        let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
        let a: Vec<f32> = (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ta = EmbeddingTable::new("a", vocab.clone(), d, a.clone()).unwrap();
        let tb = EmbeddingTable::new("b", vocab.clone(), d, b.clone()).unwrap();
        prop_assert_eq!(mse(&ta, &tb).unwrap(), mse(&tb, &ta).unwrap());
        prop_assert_eq!(mean_euclidean_distance(&ta, &tb).unwrap(), mean_euclidean_distance(&tb, &ta).unwrap());
        let k = 2.min(v - 1);
        for metric in ["cosine", "euclidean"] {
            let ab = nn_overlap_by_name(&ta, &tb, k, metric).unwrap();
            prop_assert_eq!(ab, nn_overlap_by_name(&tb, &ta, k, metric).unwrap());
            prop_assert!((0.0..=k as f64).contains(&ab));
            prop_assert_eq!(nn_overlap_by_name(&ta, &ta, k, metric).unwrap(), k as f64);

            // Rotate rows (and tokens) of both tables together.
            let perm: Vec<usize> = (0..v).map(|i| (i + shift) % v).collect();
            let permute = |data: &[f32]| -> Vec<f32> {
                perm.iter().flat_map(|&i| data[i * d..(i + 1) * d].to_vec()).collect()
            };
            let pv: Vec<String> = perm.iter().map(|&i| vocab[i].clone()).collect();
            let pa = EmbeddingTable::new("pa", pv.clone(), d, permute(&a)).unwrap();
            let pb = EmbeddingTable::new("pb", pv, d, permute(&b)).unwrap();
            let pab = nn_overlap_by_name(&pa, &pb, k, metric).unwrap();
            // Random real-valued rows have no distance ties, so the
            // neighbour sets are permutation invariant.
            prop_assert!((pab - ab).abs() < 1e-12, "{} vs {}", pab, ab);
        }
    }
}

#[test]
fn thousand_seeded_matrices_per_code_width() {
    use rand::Rng;
    for k in [2usize, 4, 16, 64] {
        let mut rng = ccemb_core::seeded_rng(k as u64);
        for _ in 0..1000 {
            let m = rng.random_range(1..=32);
            let v = rng.random_range(1..=20);
            let codes: Vec<u32> = (0..v * m).map(|_| rng.random_range(0..k as u32)).collect();
            let packed = pack_codes(&codes, m, k).unwrap();
            assert_eq!(unpack_codes(&packed, v, m, k).unwrap(), codes);
        }
    }
}

#[test]
fn neighbours_exclude_self() {
    let t = EmbeddingTable::new(
        "t",
        (0..4).map(|i| format!("w{i}")).collect(),
        2,
        vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -1.0, 0.0],
    )
    .unwrap();
    let nn = top_k_neighbours(&t, 2, &Cosine).unwrap();
    for (i, row) in nn.iter().enumerate() {
        assert!(!row.contains(&i));
    }
    assert_eq!(nn[0], vec![1, 2]);
}
