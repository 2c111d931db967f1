use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;

fn mat(rows: &[&[f64]]) -> Matrix {
    let cols = rows.first().map_or(0, |r| r.len());
    Matrix::from_rows(cols, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn emb(modality: Modality, rows: &[Vec<f64>], prefix: &str) -> ModalityEmbeddings {
    let cols = rows.first().map_or(0, Vec::len);
    let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
    ModalityEmbeddings::new(modality, Matrix::from_rows(cols, rows).unwrap(), ids).unwrap()
}

/// Explicit-loop reference for the attention equations, written without any
/// of the module's helpers.
fn reference(text: &[Vec<f64>], image: &[Vec<f64>], w: &ProjectionWeights) -> Vec<Vec<f64>> {
    let dk = w.d_k;
    let proj = |x: &Vec<f64>, m: &Matrix| -> Vec<f64> {
        (0..dk)
            .map(|j| {
                x.iter().enumerate().map(|(k, xk)| xk * m.get(k, j)).sum::<f64>()
            })
            .collect()
    };
    let keys: Vec<Vec<f64>> = image.iter().map(|x| proj(x, &w.w_k)).collect();
    let vals: Vec<Vec<f64>> = image.iter().map(|x| proj(x, &w.w_v)).collect();
    let mut out = Vec::new();
    for t in text {
        let q = proj(t, &w.w_q);
        let mut scores = vec![0.0; image.len()];
        for j in 0..image.len() {
            let mut s = 0.0;
            for k in 0..dk {
                s += q[k] * keys[j][k];
            }
            scores[j] = s / (dk as f64).sqrt();
        }
        let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
        let mut z = 0.0;
        let mut e = vec![0.0; scores.len()];
        for j in 0..scores.len() {
            e[j] = (scores[j] - mx).exp();
            z += e[j];
        }
        let mut agg = vec![0.0; dk];
        for j in 0..image.len() {
            for k in 0..dk {
                agg[k] += e[j] / z * vals[j][k];
            }
        }
        let mut fused = t.clone();
        fused.extend(agg);
        out.push(fused);
    }
    out
}

#[test]
fn project_identity_and_hand_case() {
    let w = ProjectionWeights::identity(2).unwrap();
    let x = emb(Modality::Text, &[vec![0.3, -4.0]], "t");
    assert_eq!(project_qkv(&x, &w, Role::Query).unwrap(), x.matrix);

    let mut w = ProjectionWeights::seeded_random(2, 2, 0).unwrap();
    w.w_q = mat(&[&[2.0, 0.0], &[0.0, 2.0]]);
    let x = emb(Modality::Text, &[vec![1.0, 0.0]], "t");
    assert_eq!(project_qkv(&x, &w, Role::Query).unwrap().to_rows(), vec![vec![2.0, 0.0]]);
}

#[test]
fn projection_shape_error() {
    let w = ProjectionWeights::identity(3).unwrap();
    let x = emb(Modality::Text, &[vec![1.0, 0.0]], "t");
    match project_qkv(&x, &w, Role::Key) {
        Err(Error::Shape { expected, found, .. }) => assert_eq!((expected, found), (3, 2)),
        other => panic!("{other:?}"),
    }
    assert!(ProjectionWeights::new(3, 2, ProjectionInit::Identity, 0).is_err());
    assert!(ProjectionWeights::seeded_random(3, 0, 0).is_err());
}

#[test]
fn seeded_weights_are_reproducible_and_scaled() {
    let a = ProjectionWeights::seeded_random(16, 8, 11).unwrap();
    let b = ProjectionWeights::seeded_random(16, 8, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.w_q, a.w_k);
    let bound = 1.0 / 4.0;
    assert!(a.w_v.as_slice().iter().all(|v| v.abs() <= bound));
}

#[test]
fn scores_hand_case() {
    let s = attention_scores(&mat(&[&[1.0, 0.0]]), &mat(&[&[1.0, 0.0], &[0.0, 1.0]]), 2).unwrap();
    assert!((s.0.get(0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    assert_eq!(s.0.get(0, 1), 0.0);

    let z = attention_scores(&mat(&[&[0.0]]), &mat(&[&[0.0]]), 1).unwrap();
    assert_eq!(z.0.to_rows(), vec![vec![0.0]]);
    assert!(matches!(attention_scores(&mat(&[&[1.0]]), &mat(&[&[1.0]]), 0), Err(Error::Domain(_))));
    assert!(matches!(attention_scores(&mat(&[&[1.0]]), &mat(&[&[1.0, 2.0]]), 1), Err(Error::Shape { .. })));
}

#[test]
#[allow(clippy::approx_constant)] // 0.70711 is the rounded score of the worked example
fn softmax_hand_cases() {
    let w = softmax_rows(&AttentionScores(mat(&[&[0.70711, 0.0]]))).unwrap();
    assert!((w.0.get(0, 0) - 0.66986).abs() < 1e-4);
    assert!((w.0.get(0, 1) - 0.33014).abs() < 1e-4);
    let w = softmax_rows(&AttentionScores(mat(&[&[1000.0, 0.0]]))).unwrap();
    assert!((w.0.get(0, 0) - 1.0).abs() < 1e-12 && w.0.get(0, 1) < 1e-300);
    let w = softmax_rows(&AttentionScores(mat(&[&[-123.4]]))).unwrap();
    assert_eq!(w.0.get(0, 0), 1.0);
    assert!(softmax_rows(&AttentionScores(mat(&[&[f64::NAN]]))).is_err());
}

#[test]
fn aggregate_hand_cases() {
    let out = aggregate(&AttentionWeights(mat(&[&[1.0]])), &mat(&[&[5.0, 7.0]])).unwrap();
    assert_eq!(out.to_rows(), vec![vec![5.0, 7.0]]);
    let out = aggregate(&AttentionWeights(mat(&[&[0.5, 0.5]])), &mat(&[&[2.0, 0.0], &[0.0, 2.0]])).unwrap();
    assert_eq!(out.to_rows(), vec![vec![1.0, 1.0]]);
    assert!(aggregate(&AttentionWeights(mat(&[&[0.5, 0.5]])), &mat(&[&[2.0]])).is_err());
}

#[test]
fn combine_cases() {
    assert_eq!(combine_features(&[1.0, 2.0], &[3.0], Combine::Concat).unwrap(), vec![1.0, 2.0, 3.0]);
    assert_eq!(combine_features(&[2.0, 4.0], &[0.0, 0.0], Combine::Mean).unwrap(), vec![1.0, 2.0]);
    assert_eq!(combine_features(&[1.0, 2.0], &[], Combine::Concat).unwrap(), vec![1.0, 2.0]);
    assert!(combine_features(&[1.0], &[1.0, 2.0], Combine::Mean).is_err());
}

#[test]
fn single_image_forces_value() {
    let text = emb(Modality::Text, &[vec![0.2, 0.9]], "t");
    let image = emb(Modality::Image, &[vec![-3.0, 0.5]], "i");
    let w = ProjectionWeights::identity(2).unwrap();
    let (records, _) =
        cross_modal_fuse(&text, &image, &w, &FusionConfig::default(), Execution::Sequential).unwrap();
    assert_eq!(records[0].vector, vec![0.2, 0.9, -3.0, 0.5]);
    assert_eq!(records[0].image_ids, vec!["i0"]);
    assert_eq!(records[0].mode, FusionMode::CrossAttention);
}

#[test]
fn empty_image_side_is_text_only() {
    let text = emb(Modality::Text, &[vec![1.0, 0.0], vec![0.0, 1.0]], "t");
    let image = ModalityEmbeddings::empty(Modality::Image, 2);
    let w = ProjectionWeights::identity(2).unwrap();
    let (records, memory) =
        cross_modal_fuse(&text, &image, &w, &FusionConfig::default(), Execution::Sequential).unwrap();
    assert!(memory.is_empty());
    assert!(records.iter().all(|r| r.mode == FusionMode::TextOnly && r.image_ids.is_empty()));
    assert_eq!(records[1].vector, vec![0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn two_by_three_matches_reference() {
    let text = vec![vec![0.3, -0.2, 0.9], vec![-0.5, 0.1, 0.4]];
    let image = vec![vec![0.1, 0.2, 0.3], vec![-0.7, 0.0, 0.2], vec![0.5, 0.5, -0.5]];
    let w = ProjectionWeights::seeded_random(3, 3, 5).unwrap();
    let (records, _) = cross_modal_fuse(
        &emb(Modality::Text, &text, "t"),
        &emb(Modality::Image, &image, "i"),
        &w,
        &FusionConfig::default(),
        Execution::Sequential,
    )
    .unwrap();
    for (r, want) in records.iter().zip(reference(&text, &image, &w)) {
        let diff = r.vector.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "diff {diff}");
    }
}

#[test]
fn symmetric_pass_changes_values_only() {
    let text = emb(Modality::Text, &[vec![1.0, 0.0], vec![0.0, 1.0]], "t");
    let image = emb(Modality::Image, &[vec![0.5, 0.5], vec![1.0, -1.0]], "i");
    let w = ProjectionWeights::seeded_random(2, 2, 3).unwrap();
    let plain = build_memory(&image, &text, &w, &FusionConfig::default()).unwrap();
    let sym_cfg = FusionConfig {
        symmetric: true,
        ..FusionConfig::default()
    };
    let sym = build_memory(&image, &text, &w, &sym_cfg).unwrap();
    assert_eq!(plain.keys, sym.keys);
    assert_ne!(plain.values, sym.values);
}

#[test]
fn attend_matches_batch_bitwise() {
    let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1, 1.0 - i as f64 * 0.2, 0.3]).collect();
    let text = emb(Modality::Text, &rows, "t");
    let image = emb(Modality::Image, &rows[1..4], "i");
    let w = ProjectionWeights::seeded_random(3, 2, 9).unwrap();
    let cfg = FusionConfig::default();
    let (records, memory) = cross_modal_fuse(&text, &image, &w, &cfg, Execution::Parallel).unwrap();
    for (i, r) in records.iter().enumerate() {
        assert_eq!(attend(&rows[i], &memory, &w, &cfg).unwrap().vector, r.vector);
    }
    let (seq, _) = cross_modal_fuse(&text, &image, &w, &cfg, Execution::Sequential).unwrap();
    assert_eq!(seq, records);
}

#[test]
fn naive_concat_cases() {
    let text = emb(Modality::Text, &[vec![1.0, 2.0], vec![3.0, 4.0]], "t");
    let image = emb(Modality::Image, &[vec![9.0, 8.0, 7.0]], "i");
    let pairing = BTreeMap::from([("t0".to_string(), "i0".to_string())]);
    let out = naive_concat_fuse(&text, &image, &pairing).unwrap();
    assert_eq!(out[0].vector, vec![1.0, 2.0, 9.0, 8.0, 7.0]);
    assert_eq!(out[1].vector, vec![3.0, 4.0, 0.0, 0.0, 0.0]);
    assert!(out.iter().all(|r| r.mode == FusionMode::Concat));
    let bad = BTreeMap::from([("t0".to_string(), "nope".to_string())]);
    assert!(matches!(naive_concat_fuse(&text, &image, &bad), Err(Error::Validation { .. })));
}

fn matrix_strategy(max_rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, cols), 1..=max_rows)
}

fn case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, usize, u64)> {
    (1usize..=16).prop_flat_map(|d| {
        (matrix_strategy(8, d), matrix_strategy(8, d), 1usize..=16, any::<u64>())
    })
}

proptest! {
    #[test]
    fn oracle_equivalence((text, image, dk, seed) in case()) {
        let d = text[0].len();
        let w = ProjectionWeights::seeded_random(d, dk, seed).unwrap();
        let (records, _) = cross_modal_fuse(
            &emb(Modality::Text, &text, "t"),
            &emb(Modality::Image, &image, "i"),
            &w,
            &FusionConfig::default(),
            Execution::Sequential,
        ).unwrap();
        for (r, want) in records.iter().zip(reference(&text, &image, &w)) {
            let diff = r.vector.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-9, "diff {}", diff);
        }
    }

    #[test]
    fn rows_are_stochastic(rows in matrix_strategy(8, 8)) {
        let w = softmax_rows(&AttentionScores(Matrix::from_rows(8, &rows).unwrap())).unwrap();
        for r in w.0.iter_rows() {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn softmax_shift_invariant(row in prop::collection::vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
        let a = softmax_rows(&AttentionScores(Matrix::from_rows(row.len(), std::slice::from_ref(&row)).unwrap())).unwrap();
        let shifted: Vec<f64> = row.iter().map(|x| x + c).collect();
        let b = softmax_rows(&AttentionScores(Matrix::from_rows(row.len(), &[shifted]).unwrap())).unwrap();
        for (x, y) in a.0.as_slice().iter().zip(b.0.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn key_value_permutation((text, image, dk, seed) in case(), rot in 0usize..8) {
        let d = text[0].len();
        let w = ProjectionWeights::seeded_random(d, dk, seed).unwrap();
        let cfg = FusionConfig::default();
        let t = emb(Modality::Text, &text, "t");
        let mut permuted = image.clone();
        let k = rot % permuted.len();
        permuted.rotate_left(k);
        let (a, _) = cross_modal_fuse(&t, &emb(Modality::Image, &image, "i"), &w, &cfg, Execution::Sequential).unwrap();
        let (b, _) = cross_modal_fuse(&t, &emb(Modality::Image, &permuted, "i"), &w, &cfg, Execution::Sequential).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.vector.iter().zip(&y.vector) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_key_forcing(q in prop::collection::vec(-5.0f64..5.0, 4), v in prop::collection::vec(-5.0f64..5.0, 3), k in prop::collection::vec(-5.0f64..5.0, 4)) {
        let s = attention_scores(&Matrix::from_rows(4, &[q]).unwrap(), &Matrix::from_rows(4, &[k]).unwrap(), 4).unwrap();
        let w = softmax_rows(&s).unwrap();
        let out = aggregate(&w, &Matrix::from_rows(3, std::slice::from_ref(&v)).unwrap()).unwrap();
        prop_assert_eq!(out.row(0), v.as_slice());
    }

    #[test]
    fn bilinear_scaling(q in prop::collection::vec(-3.0f64..3.0, 3), keys in matrix_strategy(4, 3), c in -4.0f64..4.0) {
        let kq = Matrix::from_rows(3, &keys).unwrap();
        let a = attention_scores(&Matrix::from_rows(3, std::slice::from_ref(&q)).unwrap(), &kq, 3).unwrap();
        let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
        let b = attention_scores(&Matrix::from_rows(3, &[scaled]).unwrap(), &kq, 3).unwrap();
        for (x, y) in a.0.as_slice().iter().zip(b.0.as_slice()) {
            prop_assert!((x * c - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn naive_concat_order_equivariant(rows in matrix_strategy(6, 3), rot in 0usize..6) {
        let text = emb(Modality::Text, &rows, "t");
        let image = emb(Modality::Image, &rows, "i");
        let pairing: BTreeMap<String, String> = (0..rows.len()).step_by(2)
            .map(|i| (format!("t{i}"), format!("i{i}"))).collect();
        let base = naive_concat_fuse(&text, &image, &pairing).unwrap();
        let k = rot % rows.len();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.rotate_left(k);
        let shuffled = ModalityEmbeddings::new(
            Modality::Text,
            Matrix::from_rows(3, &order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap(),
            order.iter().map(|i| format!("t{i}")).collect(),
        ).unwrap();
        let out = naive_concat_fuse(&shuffled, &image, &pairing).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert_eq!(&out[pos], &base[i]);
        }
    }
}
