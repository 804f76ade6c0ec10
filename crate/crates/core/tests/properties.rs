//! Property tests for formats, metrics and bit selection.

mod common;

use common::brute_force_metrics;
use proptest::prelude::*;
use rslh::boosting::{cluster_bits, select_bits, BitPool};
use rslh::dataio::*;
use rslh::eval::*;
use rslh::kernelmap::{apply_kernel, KernelMap};
use rslh::matrixkit::Matrix;

fn f32_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-1e6f32..1e6, r * c)
            .prop_map(move |v| Matrix::from_fn(r, c, |i, j| f64::from(v[i * c + j])))
    })
}

fn code_matrix(max_l: usize, max_n: usize) -> impl Strategy<Value = CodeMatrix> {
    (1..=max_l, 1..=max_n).prop_flat_map(|(l, n)| {
        proptest::collection::vec(any::<bool>(), l * n)
            .prop_map(move |bits| CodeMatrix::from_bits(l, n, |k, j| bits[j * l + k]))
    })
}

/// Query codes, database codes, labels and a valid cutoff.
fn retrieval_instance() -> impl Strategy<Value = (CodeMatrix, CodeMatrix, Vec<usize>, Vec<usize>, usize)> {
    (1usize..=12, 1usize..=15, 1usize..=60, 1usize..=4).prop_flat_map(|(l, nq, ndb, c)| {
        (
            proptest::collection::vec(any::<bool>(), l * nq),
            proptest::collection::vec(any::<bool>(), l * ndb),
            proptest::collection::vec(0..c, nq),
            proptest::collection::vec(0..c, ndb),
            1..=ndb,
        )
            .prop_map(move |(qb, db, ql, dl, k)| {
                (
                    CodeMatrix::from_bits(l, nq, |a, j| qb[j * l + a]),
                    CodeMatrix::from_bits(l, ndb, |a, j| db[j * l + a]),
                    ql,
                    dl,
                    k,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_roundtrip(m in f32_matrix(6, 9)) {
        let bytes = write_features_binary(&m).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * m.len());
        prop_assert_eq!(read_features_binary(&bytes).unwrap(), m);
    }

    #[test]
    fn codes_roundtrip(c in code_matrix(70, 12)) {
        let bytes = write_codes(&c).unwrap();
        prop_assert_eq!(bytes.len(), 20 + c.len() * c.code_length().div_ceil(8));
        prop_assert_eq!(read_codes(&bytes).unwrap(), c);
    }

    #[test]
    fn truncated_codes_are_rejected(c in code_matrix(20, 6), cut in 1usize..8) {
        let bytes = write_codes(&c).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(read_codes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn labels_roundtrip(labels in proptest::collection::vec(0usize..1000, 0..50)) {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        prop_assert_eq!(parse_labels(&text).unwrap(), labels);
    }

    #[test]
    fn model_container_roundtrip(
        entries in proptest::collection::btree_map("[a-z.]{1,12}", f32_matrix(4, 4), 0..6),
        flags in any::<u32>(),
    ) {
        let mut f = ModelFile::new(flags);
        for (k, v) in &entries {
            f.put(k, v.map(|x| x * std::f64::consts::PI));
        }
        let bytes = f.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn pack_unpack_identity(c in code_matrix(130, 8)) {
        prop_assert_eq!(PackedCodes::pack(&c).unpack(), c);
    }

    #[test]
    fn packed_distance_matches_positionwise(c in code_matrix(64, 2)) {
        prop_assume!(c.len() == 2);
        let p = PackedCodes::pack(&c);
        let m = c.as_matrix();
        let naive = (0..c.code_length()).filter(|&k| m[(k, 0)] != m[(k, 1)]).count() as u32;
        prop_assert_eq!(hamming_distance(p.code(0), p.code(1)).unwrap(), naive);
    }

    #[test]
    fn ranking_matches_sort(c in code_matrix(16, 40)) {
        let p = PackedCodes::pack(&c);
        let m = c.as_matrix();
        let mut naive: Vec<(usize, usize)> = (0..c.len())
            .map(|j| ((0..c.code_length()).filter(|&k| m[(k, 0)] != m[(k, j)]).count(), j))
            .collect();
        naive.sort();
        let expected: Vec<usize> = naive.into_iter().map(|(_, j)| j).collect();
        prop_assert_eq!(rank_database(p.code(0), &p).unwrap(), expected);
    }

    #[test]
    fn metrics_match_brute_force((q, db, ql, dl, k) in retrieval_instance()) {
        let r = evaluate_codes(&q, &db, &ql, &dl, k).unwrap();
        let oracle = brute_force_metrics(&q, &db, &ql, &dl, k);
        let per = r.per_query.as_ref().unwrap();
        for (got, want) in per.iter().zip(&oracle) {
            prop_assert!((got.ap - want.0).abs() < 1e-12);
            prop_assert!((got.ap_h2 - want.1).abs() < 1e-12);
            prop_assert!((got.prec_k - want.2).abs() < 1e-12);
        }
        let n = per.len() as f64;
        prop_assert!((r.map - per.iter().map(|p| p.ap).sum::<f64>() / n).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&r.map));
        prop_assert!((0.0..=1.0).contains(&r.map_at_h2));
        prop_assert!((0.0..=1.0).contains(&r.precision_at_k));
        let h2 = map_at_radius(&PackedCodes::pack(&q), &PackedCodes::pack(&db), &ql, &dl, 2).unwrap();
        prop_assert!((h2 - r.map_at_h2).abs() < 1e-12);
    }

    #[test]
    fn map_ignores_query_order((q, db, ql, dl, k) in retrieval_instance(), seed in any::<u64>()) {
        let n = q.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let qm = q.as_matrix();
        let pq = CodeMatrix::new(Matrix::from_fn(qm.nrows(), n, |k, j| qm[(k, perm[j])])).unwrap();
        let pl: Vec<usize> = perm.iter().map(|&i| ql[i]).collect();
        let a = evaluate_codes(&q, &db, &ql, &dl, k).unwrap();
        let b = evaluate_codes(&pq, &db, &pl, &dl, k).unwrap();
        prop_assert!((a.map - b.map).abs() < 1e-12);
        prop_assert!((a.map_at_h2 - b.map_at_h2).abs() < 1e-12);
        prop_assert!((a.precision_at_k - b.precision_at_k).abs() < 1e-12);
    }

    #[test]
    fn promoting_a_relevant_item_never_lowers_ap(
        rel in proptest::collection::vec(any::<bool>(), 2..40),
        at in any::<prop::sample::Index>(),
    ) {
        let i = at.index(rel.len() - 1);
        prop_assume!(!rel[i] && rel[i + 1]);
        let mut better = rel.clone();
        better.swap(i, i + 1);
        prop_assert!(average_precision(&better) >= average_precision(&rel));
    }

    #[test]
    fn precision_bounds(rel in proptest::collection::vec(any::<bool>(), 1..40), k in 1usize..40) {
        let k = k.min(rel.len());
        let p = precision_at(&rel, k);
        prop_assert!(p <= 1.0);
        prop_assert_eq!(p == 1.0, rel[..k].iter().all(|&r| r));
    }

    #[test]
    fn kernel_values_in_unit_interval(
        anchors in f32_matrix(3, 5),
        sigma in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let km = KernelMap::new(anchors.map(|v| v * 1e-6), sigma).unwrap();
        let feats = Matrix::from_fn(km.input_dim(), 4, |i, j| ((seed >> (i + j)) & 7) as f64 - 3.5);
        let x = apply_kernel(&km, &feats).unwrap();
        prop_assert_eq!(x.shape(), (km.anchor_count(), 4));
        prop_assert!(x.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn split_keeps_classes_in_database(
        labels in proptest::collection::vec(0usize..5, 2..80),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let mut counts = [0usize; 5];
        for &l in &labels { counts[l] += 1; }
        prop_assume!(counts.iter().all(|&c| c != 1));
        let s = split_indices(&labels, SplitSpec { query_fraction: fraction, seed }).unwrap();
        let mut all: Vec<usize> = s.query.iter().chain(&s.database).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        prop_assert!(!s.query.is_empty() && !s.database.is_empty());
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                prop_assert!(s.database.iter().any(|&j| labels[j] == c));
            }
        }
        prop_assert_eq!(s.clone(), split_indices(&labels, SplitSpec { query_fraction: fraction, seed }).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bit_selection_invariants(
        l in 1usize..5,
        t in 1usize..4,
        n in 8usize..40,
        bits in proptest::collection::vec(any::<bool>(), 4 * 3 * 40),
        seed in any::<u64>(),
    ) {
        let blocks: Vec<CodeMatrix> = (0..t)
            .map(|b| CodeMatrix::from_bits(l, n, |k, j| bits[(b * l + k) * n + j]))
            .collect();
        let pool = BitPool::from_runs(blocks.iter()).unwrap();
        let a = pool.affinity();
        prop_assert_eq!(&a, &a.transpose());
        for i in 0..pool.rows() {
            prop_assert_eq!(a[(i, i)], 1.0);
        }
        prop_assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let assign = cluster_bits(&pool, l, seed).unwrap();
        prop_assert_eq!(assign.len(), t * l);
        prop_assert!(assign.iter().all(|&c| c < l));
        prop_assert_eq!(&assign, &cluster_bits(&pool, l, seed).unwrap());

        let sel = select_bits(&pool, &assign, l).unwrap();
        prop_assert_eq!(sel.selected.len(), l);
        let mut distinct = sel.selected.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), l);
        if !sel.used_fallback {
            let deg = pool.balance_degrees();
            for (c, &row) in sel.selected.iter().enumerate() {
                prop_assert_eq!(assign[row], c);
                for (other, &oc) in assign.iter().enumerate() {
                    if oc == c {
                        prop_assert!(deg[other] > deg[row] || (deg[other] == deg[row] && other >= row));
                    }
                }
            }
        }
    }
}

#[test]
fn packed_distance_exhaustive_up_to_eight_bits() {
    for l in 1..=8usize {
        let all = CodeMatrix::from_bits(l, 1 << l, |k, j| j >> k & 1 == 1);
        let p = PackedCodes::pack(&all);
        for a in 0..1usize << l {
            for b in 0..1usize << l {
                let d = hamming_distance(p.code(a), p.code(b)).unwrap();
                assert_eq!(d, (a ^ b).count_ones());
            }
        }
    }
}
