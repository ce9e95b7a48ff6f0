use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::relation::{candidate_relation, trajectory_relation, Gps};
use crate::trajectory::{pad_truncate, CheckIn};

fn locations(l: usize, rng: &mut ChaCha8Rng) -> Vec<Gps> {
    (0..l)
        .map(|_| Gps::new(40.0 + rng.gen_range(-0.2..0.2), -74.0 + rng.gen_range(-0.2..0.2)))
        .collect()
}

fn window(locs: &[Gps], valid: usize, n: usize, rng: &mut ChaCha8Rng) -> TrajectorySequence {
    let mut t = 1_600_000_000i64;
    let input: Vec<CheckIn> = (0..valid)
        .map(|_| {
            t += rng.gen_range(600..90_000);
            let loc = rng.gen_range(1..=locs.len() as u32);
            CheckIn { user_id: 2, location_id: loc, timestamp: t, gps: locs[loc as usize - 1] }
        })
        .collect();
    let mut seq = pad_truncate(&input, n);
    seq.user_id = 2;
    seq.label_location = 1;
    seq.label_time = t + 7200;
    seq
}

fn config(n: usize, d: usize, mode: IntervalMode) -> ModelConfig {
    ModelConfig { d, n, interval_mode: mode, dropout: 0.0, ..ModelConfig::default() }
}

fn random_params(cfg: &ModelConfig, l: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let bounds = IntervalBounds { t_min: 0.2, t_max: 60.0, s_min: 0.0, s_max: 400.0 };
    let mut p = ModelParams::init(cfg, 3, l, Some(bounds), rng);
    for t in [&mut p.reduce_t, &mut p.reduce_s, &mut p.reduce_nt, &mut p.reduce_ns] {
        for x in t.data_mut() {
            *x = rng.gen_range(-0.05..0.05);
        }
    }
    for t in [&mut p.unit_t, &mut p.unit_s] {
        for x in t.data_mut() {
            *x *= 0.01;
        }
    }
    p
}

fn scores(p: &ModelParams, cfg: &ModelConfig, locs: &[Gps], seq: &TrajectorySequence) -> Vec<f64> {
    let rel = trajectory_relation(seq);
    let cand = candidate_relation(locs, seq, seq.label_time).unwrap();
    forward(p, cfg, seq, &rel, &cand).unwrap()
}

#[test]
fn zero_embeddings_give_zero_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let locs = locations(4, &mut rng);
    let seq = window(&locs, 3, 5, &mut rng);
    let p = ModelParams::zeros(3, 3, 4);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = embed_trajectory(&mut g, &pv, &seq).unwrap();
    assert!(g.value(e).iter().all(|&x| x == 0.0));

    let empty = pad_truncate(&[], 5);
    let e = embed_trajectory(&mut g, &pv, &empty).unwrap();
    assert_eq!(g.shape(e), (5, 3));
    assert!(g.value(e).iter().all(|&x| x == 0.0));
}

#[test]
fn one_hot_embeddings_add_up() {
    let d = 4;
    let mut p = ModelParams::zeros(d, 2, 3);
    p.user_emb.row_mut(2)[0] = 1.0;
    p.loc_emb.row_mut(1)[1] = 2.0;
    p.loc_emb.row_mut(3)[2] = 3.0;
    // epoch 0 is slot 72, epoch 3600 slot 73
    p.time_emb.row_mut(72)[3] = 5.0;
    p.time_emb.row_mut(73)[0] = 7.0;
    let entries = [
        CheckIn { user_id: 2, location_id: 1, timestamp: 0, gps: Gps::default() },
        CheckIn { user_id: 2, location_id: 3, timestamp: 3600, gps: Gps::default() },
    ];
    let seq = pad_truncate(&entries, 3);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = embed_trajectory(&mut g, &pv, &seq).unwrap();
    assert_eq!(g.value(e), &[1.0, 2.0, 0.0, 5.0, 8.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn out_of_range_ids_are_rejected() {
    let p = ModelParams::zeros(2, 1, 2);
    let seq = pad_truncate(&[CheckIn { user_id: 1, location_id: 3, timestamp: 0, gps: Gps::default() }], 2);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    assert!(matches!(
        embed_trajectory(&mut g, &pv, &seq),
        Err(ModelError::IdOutOfRange { kind: "location", id: 3, size: 2 })
    ));
}

#[test]
fn unit_and_interpolation_vectors() {
    let v = interval_vectors(&[2.5], &[0.1, -0.2], &[0.0, 0.0], &[0.0, 0.0], IntervalMode::Unit, (0.0, 1.0));
    assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] + 0.5).abs() < 1e-15);

    let v = interval_vectors(&[5.0], &[0.0], &[1.0], &[0.0], IntervalMode::Interpolation, (0.0, 10.0));
    assert_eq!(v, vec![0.5]);

    // clamped at both ends
    let v = interval_vectors(&[-3.0, 40.0], &[0.0], &[1.0], &[0.0], IntervalMode::Interpolation, (0.0, 10.0));
    assert_eq!(v, vec![1.0, 0.0]);

    // equal bounds select the lower-bound vector
    let v = interval_vectors(&[0.0, 9.0], &[0.0], &[2.0], &[-4.0], IntervalMode::Interpolation, (0.0, 0.0));
    assert_eq!(v, vec![2.0, 2.0]);
}

proptest! {
    #[test]
    fn unit_mode_is_homogeneous(values in prop::collection::vec(0.0f64..500.0, 1..20), unit in prop::collection::vec(-1.0f64..1.0, 1..6)) {
        let doubled: Vec<f64> = values.iter().map(|x| 2.0 * x).collect();
        let zeros = vec![0.0; unit.len()];
        let a = interval_vectors(&values, &unit, &zeros, &zeros, IntervalMode::Unit, (0.0, 1.0));
        let b = interval_vectors(&doubled, &unit, &zeros, &zeros, IntervalMode::Unit, (0.0, 1.0));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn collapsed_bias_matches_explicit_vectors() {
    for (seed, mode) in [(3, IntervalMode::Unit), (4, IntervalMode::Interpolation)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, l) = (6, 5, 7);
        let cfg = config(n, d, mode);
        let locs = locations(l, &mut rng);
        let p = random_params(&cfg, l, &mut rng);
        let seq = window(&locs, 4, n, &mut rng);
        let rel = trajectory_relation(&seq);
        let in_block = |k: usize| k / n < 4 && k % n < 4;
        let mut g = Graph::new();
        let pv = p.register(&mut g);
        let bias = embed_intervals(&mut g, &pv, &cfg, p.bounds, IntervalSource::Trajectory, &rel.delta_t, &rel.delta_s, n, n, &in_block)
            .unwrap()
            .unwrap();
        let b = p.bounds.unwrap();
        let vt = interval_vectors(&rel.delta_t, p.unit_t.data(), p.sup_t.data(), p.inf_t.data(), mode, (b.t_min, b.t_max));
        let vs = interval_vectors(&rel.delta_s, p.unit_s.data(), p.sup_s.data(), p.inf_s.data(), mode, (b.s_min, b.s_max));
        let rt = reduce_vectors(&vt, p.reduce_t.data());
        let rs = reduce_vectors(&vs, p.reduce_s.data());
        for k in 0..n * n {
            let expected = if in_block(k) { rt[k] + rs[k] } else { 0.0 };
            assert!((g.value(bias)[k] - expected).abs() < 1e-12, "{mode:?} entry {k}");
        }
    }
}

#[test]
fn ablated_intervals_give_no_bias() {
    let cfg = ModelConfig { use_tim: false, use_sim: false, ..config(3, 2, IntervalMode::Unit) };
    let p = ModelParams::zeros(2, 1, 2);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let z = vec![1.0; 9];
    let bias = embed_intervals(&mut g, &pv, &cfg, None, IntervalSource::Trajectory, &z, &z, 3, 3, &|_| true).unwrap();
    assert!(bias.is_none());
}

#[test]
fn interpolation_without_bounds_is_an_error() {
    let cfg = config(2, 2, IntervalMode::Interpolation);
    let p = ModelParams::zeros(2, 1, 2);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let z = vec![1.0; 4];
    let r = embed_intervals(&mut g, &pv, &cfg, None, IntervalSource::Trajectory, &z, &z, 2, 2, &|_| true);
    assert_eq!(r.unwrap_err(), ModelError::MissingBounds);
}

fn identity(d: usize) -> Tensor {
    Tensor::from_fn(&[d, d], |k| if k / d == k % d { 1.0 } else { 0.0 })
}

#[test]
fn single_valid_row_in_paper_mode_is_scaled_by_one_over_n() {
    let (n, d) = (4, 2);
    let mut p = ModelParams::zeros(d, 1, 1);
    p.w_value = identity(d);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = g.constant_matrix(n, d, vec![3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let s = self_attention_aggregate(&mut g, &pv, e, None, 1, MaskMode::Paper, 0.0, None);
    assert_eq!(&g.value(s)[..2], &[0.75, -0.25]);
    assert!(g.value(s)[2..].iter().all(|&x| x == 0.0));
}

#[test]
fn zero_projections_average_values_in_presoftmax_mode() {
    let (n, d) = (3, 2);
    let mut p = ModelParams::zeros(d, 1, 1);
    p.w_value = identity(d);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = g.constant_matrix(n, d, vec![1.0, 2.0, 3.0, 4.0, 8.0, -3.0]);
    let s = self_attention_aggregate(&mut g, &pv, e, None, n, MaskMode::Presoftmax, 0.0, None);
    for row in g.value(s).chunks(d) {
        assert!((row[0] - 4.0).abs() < 1e-12 && (row[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn saturated_bias_selects_one_value_row() {
    let (n, d) = (3, 2);
    let mut p = ModelParams::zeros(d, 1, 1);
    p.w_value = identity(d);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = g.constant_matrix(n, d, vec![1.0, 2.0, 3.0, 4.0, 8.0, -3.0]);
    let mut b = vec![0.0; n * n];
    b[2] = 1e6;
    let bias = g.constant_matrix(n, n, b);
    let s = self_attention_aggregate(&mut g, &pv, e, Some(bias), n, MaskMode::Presoftmax, 0.0, None);
    assert!((g.value(s)[0] - 8.0).abs() < 1e-6 && (g.value(s)[1] + 3.0).abs() < 1e-6);
}

#[test]
fn empty_window_aggregates_to_zero() {
    let p = ModelParams::zeros(2, 1, 1);
    let mut g = Graph::new();
    let pv = p.register(&mut g);
    let e = g.constant_matrix(2, 2, vec![1.0; 4]);
    let s = self_attention_aggregate(&mut g, &pv, e, None, 0, MaskMode::Paper, 0.0, None);
    assert!(g.value(s).iter().all(|&x| x == 0.0));
}

#[test]
fn identical_candidates_score_equally() {
    let mut g = Graph::new();
    let cand = g.constant_matrix(4, 2, vec![0.3, -0.1, 0.3, -0.1, 0.3, -0.1, 0.3, -0.1]);
    let s = g.constant_matrix(3, 2, vec![1.0, 2.0, -0.5, 0.7, 0.0, 0.0]);
    let a = attention_match(&mut g, cand, s, None, 2).unwrap();
    let v = g.value(a);
    assert!(v.iter().all(|&x| (x - v[0]).abs() < 1e-15));
    assert!((v[0] - 0.5).abs() < 1e-15);
}

#[test]
fn saturated_matching_logit() {
    let mut g = Graph::new();
    let cand = g.constant_matrix(2, 1, vec![1000.0, -1000.0]);
    let s = g.constant_matrix(2, 1, vec![1.0, 0.0]);
    let a = attention_match(&mut g, cand, s, None, 1).unwrap();
    assert!((g.value(a)[0] - 1.0).abs() < 1e-12 && g.value(a)[1].abs() < 1e-12);
}

#[test]
fn matching_matches_per_column_softmax_oracle() {
    let cand = [[0.4, -1.2], [0.9, 0.3], [-0.6, 0.8]];
    let s = [[1.1, 0.2], [-0.3, 0.7], [9.0, 9.0]];
    let bias = [[0.1, -0.2], [0.0, 0.5], [-0.3, 0.2]];
    let mut g = Graph::new();
    let cv = g.constant_matrix(3, 2, cand.iter().flatten().copied().collect());
    let sv = g.constant_matrix(3, 2, s.iter().flatten().copied().collect());
    let bv = g.constant_matrix(3, 2, bias.iter().flatten().copied().collect());
    let a = attention_match(&mut g, cv, sv, Some(bv), 2).unwrap();
    let mut expected = [0.0; 3];
    for j in 0..2 {
        let logits: Vec<f64> = (0..3)
            .map(|i| (cand[i][0] * s[j][0] + cand[i][1] * s[j][1] + bias[i][j]) / 2f64.sqrt())
            .collect();
        let z: f64 = logits.iter().map(|x| x.exp()).sum();
        for i in 0..3 {
            expected[i] += logits[i].exp() / z;
        }
    }
    for i in 0..3 {
        assert!((g.value(a)[i] - expected[i]).abs() < 1e-12);
    }
    assert!((g.value(a).iter().sum::<f64>() - 2.0).abs() < 1e-12);
}

#[test]
fn matching_needs_a_valid_position() {
    let mut g = Graph::new();
    let cand = g.constant_matrix(2, 1, vec![1.0, 2.0]);
    let s = g.constant_matrix(2, 1, vec![0.0, 0.0]);
    assert_eq!(attention_match(&mut g, cand, s, None, 0).unwrap_err(), ModelError::EmptyTrajectory);
}

#[test]
fn column_shift_leaves_scores_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (l, n, d) = (5, 3, 2);
    let cand: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..l * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shift = [3.0, -40.0, 11.0];
    let shifted: Vec<f64> = bias.iter().enumerate().map(|(k, b)| b + shift[k % n]).collect();
    let run = |bias: Vec<f64>| {
        let mut g = Graph::new();
        let c = g.constant_matrix(l, d, cand.clone());
        let sv = g.constant_matrix(n, d, s.clone());
        let b = g.constant_matrix(l, n, bias);
        let a = attention_match(&mut g, c, sv, Some(b), n).unwrap();
        g.value(a).to_vec()
    };
    for (x, y) in run(bias).iter().zip(run(shifted)) {
        assert!((x - y).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn padding_content_is_inert(seed in any::<u64>(), valid in 1usize..6, interp in any::<bool>(), paper in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, l) = (6, 4, 5);
        let mode = if interp { IntervalMode::Interpolation } else { IntervalMode::Unit };
        let mut cfg = config(n, d, mode);
        cfg.mask_mode = if paper { MaskMode::Paper } else { MaskMode::Presoftmax };
        let locs = locations(l, &mut rng);
        let p = random_params(&cfg, l, &mut rng);
        let seq = window(&locs, valid, n, &mut rng);
        let base = scores(&p, &cfg, &locs, &seq);

        let mut junk = seq.clone();
        for c in &mut junk.entries[valid..] {
            *c = CheckIn {
                user_id: rng.gen_range(1..=3),
                location_id: rng.gen_range(1..=l as u32),
                timestamp: rng.gen_range(0..2_000_000_000),
                gps: locs[rng.gen_range(0..l)],
            };
        }
        let rel = trajectory_relation(&seq);
        let mut noisy_rel = rel.clone();
        for i in 0..n {
            for j in 0..n {
                if i >= valid || j >= valid {
                    noisy_rel.delta_t[i * n + j] = rng.gen_range(0.0..500.0);
                    noisy_rel.delta_s[i * n + j] = rng.gen_range(0.0..500.0);
                }
            }
        }
        let mut cand = candidate_relation(&locs, &seq, seq.label_time).unwrap();
        for i in 0..l {
            for j in valid..n {
                cand.n_t[i * n + j] = rng.gen_range(0.0..500.0);
                cand.n_s[i * n + j] = rng.gen_range(0.0..500.0);
            }
        }
        let perturbed = forward(&p, &cfg, &junk, &noisy_rel, &cand).unwrap();
        for (a, b) in base.iter().zip(&perturbed) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn no_intervals_equals_zeroed_intervals_in_unit_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, d, l) = (5, 3, 6);
    let full = config(n, d, IntervalMode::Unit);
    let none = ModelConfig { use_tim: false, use_sim: false, ..full.clone() };
    let locs = locations(l, &mut rng);
    let p = random_params(&full, l, &mut rng);
    let seq = window(&locs, 4, n, &mut rng);
    let ablated = scores(&p, &none, &locs, &seq);
    let rel = RelationMatrices { n, valid_len: 4, delta_t: vec![0.0; n * n], delta_s: vec![0.0; n * n] };
    let cand = CandidateRelation { candidates: l, n, valid_len: 4, n_t: vec![0.0; l * n], n_s: vec![0.0; l * n] };
    let zeroed = forward(&p, &full, &seq, &rel, &cand).unwrap();
    assert_eq!(ablated, zeroed);
}

#[test]
fn exported_attention_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d, l) = (5, 3, 4);
    let locs = locations(l, &mut rng);
    let seq = window(&locs, 3, n, &mut rng);
    let rel = trajectory_relation(&seq);

    let cfg = ModelConfig { use_tim: false, use_sim: false, ..config(n, d, IntervalMode::Unit) };
    let zero = ModelParams::zeros(d, 3, l);
    let cor = export_attention(&zero, &cfg, &seq, &rel).unwrap();
    for i in 0..n {
        for j in 0..n {
            let expected = if i < 3 && j < 3 { 1.0 / n as f64 } else { 0.0 };
            assert!((cor[i * n + j] - expected).abs() < 1e-15);
        }
    }

    let full = config(n, d, IntervalMode::Interpolation);
    let p = random_params(&full, l, &mut rng);
    let cor = export_attention(&p, &full, &seq, &rel).unwrap();
    for row in cor.chunks(n) {
        assert!(row.iter().sum::<f64>() <= 1.0 + 1e-12);
    }
    let pre = ModelConfig { mask_mode: MaskMode::Presoftmax, ..full };
    let cor = export_attention(&p, &pre, &seq, &rel).unwrap();
    for (i, row) in cor.chunks(n).enumerate() {
        let sum: f64 = row.iter().sum();
        if i < 3 {
            assert!((sum - 1.0).abs() < 1e-9);
        } else {
            assert_eq!(sum, 0.0);
        }
    }
}

#[test]
fn named_arrays_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = config(4, 3, IntervalMode::Interpolation);
    let p = random_params(&cfg, 6, &mut rng);
    let arrays = p.named_arrays();
    let back = ModelParams::from_named_arrays(arrays.iter().map(|(n, t)| (*n, t))).unwrap();
    assert_eq!(back, p);

    let mut missing = arrays.clone();
    missing.retain(|(n, _)| *n != "w_key");
    assert_eq!(
        ModelParams::from_named_arrays(missing.iter().map(|(n, t)| (*n, t))).unwrap_err(),
        ModelError::MissingParam("w_key")
    );
}

#[test]
fn window_length_must_match_config() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let locs = locations(3, &mut rng);
    let seq = window(&locs, 2, 4, &mut rng);
    let cfg = config(5, 2, IntervalMode::Unit);
    let p = ModelParams::zeros(2, 3, 3);
    let rel = trajectory_relation(&seq);
    let cand = candidate_relation(&locs, &seq, 0).unwrap();
    assert_eq!(
        forward(&p, &cfg, &seq, &rel, &cand).unwrap_err(),
        ModelError::WindowLength { expected: 5, got: 4 }
    );
}
