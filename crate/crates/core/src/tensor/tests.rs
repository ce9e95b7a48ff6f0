use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

type Build = fn(&mut Graph, &[Var], &mut ChaCha8Rng) -> Var;

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(&[r, c], |_| rng.gen_range(lo..hi))
}

/// Weighted sum of the op output so every output entry gets a distinct weight.
fn scalar_loss(g: &mut Graph, out: Var, weights: &[f64]) -> Var {
    let (r, c) = g.shape(out);
    let w = g.constant_matrix(r, c, weights[..r * c].to_vec());
    let prod = g.mul(out, w);
    g.sum(prod)
}

fn evaluate(build: Build, inputs: &[Tensor], weights: &[f64], seed: u64) -> (f64, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = build(&mut g, &vars, &mut rng);
    let loss = scalar_loss(&mut g, out, weights);
    g.backward(loss).unwrap();
    let grads = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).len()]))
        .collect();
    (g.scalar(loss), grads)
}

fn finite_difference_check(name: &str, build: Build, inputs: Vec<Tensor>, seed: u64) {
    let mut wrng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let weights: Vec<f64> = (0..4096).map(|_| wrng.gen_range(-1.0..1.0)).collect();
    let (_, analytic) = evaluate(build, &inputs, &weights, seed);
    let h = 1e-5;
    for (ti, t) in inputs.iter().enumerate() {
        for k in 0..t.len() {
            let mut plus = inputs.clone();
            plus[ti].data_mut()[k] += h;
            let mut minus = inputs.clone();
            minus[ti].data_mut()[k] -= h;
            let numeric = (evaluate(build, &plus, &weights, seed).0 - evaluate(build, &minus, &weights, seed).0) / (2.0 * h);
            let a = analytic[ti][k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            assert!(err < 1e-3, "{name}: input {ti} entry {k}: analytic {a} vs numeric {numeric} (seed {seed})");
        }
    }
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5))
}

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let k = rng.gen_range(1..5);
        let a = random_tensor(&mut rng, r, c, -2.0, 2.0);
        let b = random_tensor(&mut rng, r, c, -2.0, 2.0);
        let pos = random_tensor(&mut rng, r, c, 0.5, 3.0);
        let row = random_tensor(&mut rng, 1, c, -1.0, 1.0);
        let s = random_tensor(&mut rng, 1, 1, -1.5, 1.5);
        let m2 = random_tensor(&mut rng, c, k, -1.0, 1.0);

        finite_difference_check("add", |g, v, _| g.add(v[0], v[1]), vec![a.clone(), b.clone()], seed);
        finite_difference_check("sub", |g, v, _| g.sub(v[0], v[1]), vec![a.clone(), b.clone()], seed);
        finite_difference_check("mul", |g, v, _| g.mul(v[0], v[1]), vec![a.clone(), b.clone()], seed);
        finite_difference_check("mul_self", |g, v, _| g.mul(v[0], v[0]), vec![a.clone()], seed);
        finite_difference_check("scale", |g, v, _| g.scale(v[0], -0.7), vec![a.clone()], seed);
        finite_difference_check("add_scalar", |g, v, _| g.add_scalar(v[0], 2.5), vec![a.clone()], seed);
        finite_difference_check("scale_by", |g, v, _| g.scale_by(v[0], v[1]), vec![a.clone(), s.clone()], seed);
        finite_difference_check("add_row", |g, v, _| g.add_row(v[0], v[1]), vec![a.clone(), row.clone()], seed);
        finite_difference_check("matmul", |g, v, _| g.matmul(v[0], v[1]), vec![a.clone(), m2.clone()], seed);
        finite_difference_check("transpose", |g, v, _| g.transpose(v[0]), vec![a.clone()], seed);
        finite_difference_check("exp", |g, v, _| g.exp(v[0]), vec![a.clone()], seed);
        finite_difference_check("log", |g, v, _| g.log(v[0]), vec![pos.clone()], seed);
        finite_difference_check("sigmoid", |g, v, _| g.sigmoid(v[0]), vec![a.clone()], seed);
        finite_difference_check("log_sigmoid", |g, v, _| g.log_sigmoid(v[0]), vec![a.clone()], seed);
        finite_difference_check("softmax0", |g, v, _| g.softmax(v[0], 0), vec![a.clone()], seed);
        finite_difference_check("softmax1", |g, v, _| g.softmax(v[0], 1), vec![a.clone()], seed);
        finite_difference_check("sum_axis0", |g, v, _| g.sum_axis(v[0], 0), vec![a.clone()], seed);
        finite_difference_check("sum_axis1", |g, v, _| g.sum_axis(v[0], 1), vec![a.clone()], seed);
        finite_difference_check("sum", |g, v, _| g.sum(v[0]), vec![a.clone()], seed);
        finite_difference_check(
            "masked_fill_softmax",
            |g, v, _| {
                let (r, c) = g.shape(v[0]);
                let keep = (0..r * c).map(|i| i % c <= i / c % c).collect();
                let m = g.masked_fill(v[0], keep, f64::NEG_INFINITY);
                g.softmax(m, 1)
            },
            vec![a.clone()],
            seed,
        );
        finite_difference_check(
            "dropout",
            |g, v, rng| g.dropout(v[0], 0.3, rng, true),
            vec![a.clone()],
            seed,
        );
        finite_difference_check(
            "gather_rows",
            |g, v, _| {
                let r = g.shape(v[0]).0;
                let idx: Vec<usize> = (0..5).map(|i| (i * 7 + 1) % r).collect();
                g.gather_rows(v[0], &idx)
            },
            vec![a.clone()],
            seed,
        );
        finite_difference_check(
            "slice_rows",
            |g, v, _| {
                let r = g.shape(v[0]).0;
                g.slice_rows(v[0], r / 2, r)
            },
            vec![a.clone()],
            seed,
        );
        finite_difference_check("pad_rows", |g, v, _| { let r = g.shape(v[0]).0; g.pad_rows(v[0], r + 2) }, vec![a.clone()], seed);
    }
}

#[test]
fn softmax_uniform_and_properties() {
    let mut g = Graph::new();
    let x = g.constant_matrix(1, 3, vec![0.0; 3]);
    let y = g.softmax(x, 1);
    for &p in g.value(y) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (r, c) = dims(&mut rng);
        let t = random_tensor(&mut rng, r, c, -30.0, 30.0);
        let shift = rng.gen_range(-100.0..100.0);
        for axis in 0..2 {
            let mut g = Graph::new();
            let x = g.constant(&t);
            let y = g.softmax(x, axis);
            let xs = g.add_scalar(x, shift);
            let ys = g.softmax(xs, axis);
            let sums = g.sum_axis(y, axis);
            for &s in g.value(sums) {
                assert!((s - 1.0).abs() < 1e-9);
            }
            for (a, b) in g.value(y).iter().zip(g.value(ys)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn softmax_all_masked_row_is_zero() {
    let mut g = Graph::new();
    let x = g.constant_matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
    let m = g.masked_fill(x, vec![true, true, false, false], f64::NEG_INFINITY);
    let y = g.softmax(m, 1);
    assert_eq!(&g.value(y)[2..], &[0.0, 0.0]);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let eye = g.constant_matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let a_data = vec![1.5, -2.0, 0.25, 4.0, 5.0, -6.0];
    let a = g.constant_matrix(3, 2, a_data.clone());
    let p = g.matmul(eye, a);
    assert_eq!(g.value(p), &a_data[..]);
}

#[test]
fn sigmoid_gradient_at_zero() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![0.0; 4]));
    let y = g.sigmoid(x);
    let l = g.sum(y);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.25; 4]);
}

#[test]
fn square_and_fan_out_gradients() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    let sq = g.mul(x, x);
    let l = g.sum(sq);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);

    let mut g = Graph::new();
    let y = g.param(&Tensor::vector(vec![3.0, -1.0]));
    let twice = g.add(y, y);
    let l = g.sum(twice);
    g.backward(l).unwrap();
    assert_eq!(g.grad(y).unwrap(), &[2.0, 2.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    assert_eq!(g.backward(x), Err(TensorError::NonScalarLoss { rows: 1, cols: 2 }));
}

#[test]
fn constants_get_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(&Tensor::vector(vec![1.0, 2.0]));
    let p = g.param(&Tensor::vector(vec![0.5, 0.5]));
    let prod = g.mul(c, p);
    let l = g.sum(prod);
    g.backward(l).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(p).unwrap(), &[1.0, 2.0]);
}

#[test]
fn dropout_eval_is_identity() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0, 3.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = g.dropout(x, 0.5, &mut rng, false);
    assert_eq!(x, y);
}

#[test]
fn log_sigmoid_is_stable() {
    assert_eq!(log_sigmoid(800.0), 0.0);
    assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
    assert!((log_sigmoid(0.0) + core::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
#[should_panic(expected = "matmul: shape mismatch (2, 3) vs (2, 3)")]
fn shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant_matrix(2, 3, vec![0.0; 6]);
    let b = g.constant_matrix(2, 3, vec![0.0; 6]);
    g.matmul(a, b);
}
