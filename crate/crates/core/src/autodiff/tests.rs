use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::Error;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Relative error between reverse-mode gradients and central differences
/// (step `h`) of the scalar produced by `build`, over every parameter.
pub(crate) fn fd_relative_error(store: &ParamStore, h: f64, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |s: &ParamStore| {
        let mut g = Graph::with_params(s);
        let vars: Vec<Var> = (0..s.len()).map(|i| g.param(ParamId(i))).collect();
        let out = build(&mut g, &vars);
        (g.value(out).item().unwrap(), g.backward(out).unwrap().into_param_grads(s))
    };
    let (_, analytic) = eval(store);
    let mut probe = store.clone();
    let (mut diff, mut norm) = (0.0, 0.0);
    for p in 0..store.len() {
        for k in 0..store.get(ParamId(p)).len() {
            let orig = store.get(ParamId(p)).data()[k];
            probe.get_mut(ParamId(p)).data_mut()[k] = orig + h;
            let up = eval(&probe).0;
            probe.get_mut(ParamId(p)).data_mut()[k] = orig - h;
            let down = eval(&probe).0;
            probe.get_mut(ParamId(p)).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p].data()[k];
            diff += (a - numeric) * (a - numeric);
            norm += numeric * numeric;
        }
    }
    libm::sqrt(diff) / libm::sqrt(norm).max(1e-8)
}

#[test]
fn affine_identity_and_hand_product() {
    let mut g = Graph::new();
    let x = g.input(t(&[2], &[1.0, 2.0]));
    let w = g.input(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.input(t(&[2], &[0.0, 0.0]));
    let y = g.affine(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0]);

    let x = g.input(t(&[2], &[1.0, 0.0]));
    let w = g.input(t(&[2, 2], &[2.0, 3.0, 5.0, 7.0]));
    let b = g.input(t(&[2], &[1.0, 1.0]));
    let y = g.affine(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0]);
}

#[test]
fn affine_rejects_mismatched_inner_dimension() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1, 3]));
    let w = g.input(Tensor::zeros(&[2, 2]));
    let b = g.input(Tensor::zeros(&[2]));
    assert!(matches!(g.affine(x, w, b), Err(Error::Shape { .. })));
}

#[test]
fn activations() {
    let mut g = Graph::new();
    let x = g.input(t(&[2], &[-1.0, 2.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 2.0]);
    let z = g.input(t(&[1], &[0.0]));
    let th = g.tanh(z);
    assert_eq!(g.value(th).data(), &[0.0]);
}

proptest! {
    #[test]
    fn tanh_stays_in_open_interval(xs in prop::collection::vec(-15.0f64..15.0, 1..32)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(xs));
        let y = g.tanh(x);
        prop_assert!(g.value(y).data().iter().all(|v| *v > -1.0 && *v < 1.0));
    }
}

#[test]
fn concat_values_gradients_and_errors() {
    let mut store = ParamStore::new();
    let a = store.add("a", t(&[2], &[1.0, 2.0]));
    let b = store.add("b", t(&[1], &[3.0]));
    let mut g = Graph::with_params(&store);
    let (va, vb) = (g.param(a), g.param(b));
    let c = g.concat(va, vb, 0).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);
    let s = g.sum(c);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.param(a).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(grads.param(b).unwrap().data(), &[1.0]);

    let p = g.input(Tensor::zeros(&[2, 3]));
    let q = g.input(Tensor::zeros(&[3, 3]));
    assert!(g.concat(p, q, 1).is_err());
    // but fine along axis 0
    let pq = g.concat(p, q, 0).unwrap();
    assert_eq!(g.shape(pq), &[5, 3]);
}

#[test]
fn concat_on_inner_axis_interleaves_rows() {
    let mut g = Graph::new();
    let a = g.input(t(&[2, 1], &[1.0, 2.0]));
    let b = g.input(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let c = g.concat(a, b, 1).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
}

#[test]
fn sum_gradient_is_ones_and_unused_param_is_zero() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::full(&[3, 2], 0.7));
    let unused = store.add("unused", Tensor::full(&[4], 1.0));
    let mut g = Graph::with_params(&store);
    let vw = g.param(w);
    let s = g.sum(vw);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.param(w).unwrap(), &Tensor::full(&[3, 2], 1.0));
    assert!(grads.param(unused).is_none());
    let all = grads.into_param_grads(&store);
    assert_eq!(all[unused.0], Tensor::zeros(&[4]));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[3]));
    assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn squared_norm_of_product_matches_finite_differences() {
    // loss = ||x W||², both trainable
    let mut store = ParamStore::new();
    store.add("x", t(&[2, 3], &[0.3, -1.2, 0.5, 0.8, 0.1, -0.4]));
    store.add("w", t(&[3, 2], &[1.1, -0.2, 0.4, 0.9, -0.7, 0.25]));
    let err = fd_relative_error(&store, 1e-5, |g, v| {
        let zero = g.input(Tensor::zeros(&[2]));
        let y = g.affine(v[0], v[1], zero).unwrap();
        let sq = g.square(y);
        g.sum(sq)
    });
    assert!(err < 1e-4, "relative error {err}");
}

fn arb_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // keep clear of the relu / clamp kinks at zero and ±1.5
    prop::collection::vec(prop_oneof![-1.4f64..-0.05, 0.05f64..1.4], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_op_matches_finite_differences(
        op in 0usize..12,
        a in arb_values(6),
        b in arb_values(6),
        w in arb_values(9),
        bias in arb_values(3),
        weights in arb_values(9),
    ) {
        let mut store = ParamStore::new();
        store.add("a", t(&[2, 3], &a));
        store.add("b", t(&[2, 3], &b));
        store.add("w", t(&[3, 3], &w));
        store.add("bias", t(&[3], &bias));
        let weights = weights.clone();
        let err = fd_relative_error(&store, 1e-5, move |g, v| {
            let y = match op {
                0 => g.affine(v[0], v[2], v[3]).unwrap(),
                1 => g.tanh(v[0]),
                2 => g.relu(v[0]),
                3 => g.concat(v[0], v[1], 0).unwrap(),
                4 => g.concat(v[0], v[1], 1).unwrap(),
                5 => g.add(v[0], v[1]).unwrap(),
                6 => g.sub(v[0], v[1]).unwrap(),
                7 => g.mul(v[0], v[1]).unwrap(),
                8 => { let s = g.scale(v[0], -2.5); g.shift(s, 0.75) }
                9 => g.exp(v[0]),
                10 => g.square(v[1]),
                _ => g.clamp(v[0], -1.5, 1.5),
            };
            // weighted sum so each output entry carries a distinct cotangent
            let n = g.value(y).len();
            let shape = g.shape(y).to_vec();
            let c = g.input(Tensor::new(shape, weights.iter().cycle().take(n).copied().collect()).unwrap());
            let p = g.mul(y, c).unwrap();
            g.sum(p)
        });
        prop_assert!(err < 1e-4, "op {} relative error {}", op, err);
    }

    #[test]
    fn composed_graph_matches_finite_differences(
        x in arb_values(8),
        w1 in arb_values(12),
        w2 in arb_values(6),
    ) {
        let mut store = ParamStore::new();
        store.add("x", t(&[2, 4], &x));
        store.add("w1", t(&[4, 3], &w1));
        store.add("b1", Tensor::full(&[3], 0.1));
        store.add("w2", t(&[6, 1], &w2));
        store.add("b2", Tensor::full(&[1], -0.2));
        let err = fd_relative_error(&store, 1e-5, |g, v| {
            let h = g.affine(v[0], v[1], v[2]).unwrap();
            let h = g.tanh(h);
            let e = g.exp(h);
            let skip = g.concat(h, e, 1).unwrap();
            let y = g.affine(skip, v[3], v[4]).unwrap();
            let sq = g.square(y);
            g.mean(sq)
        });
        prop_assert!(err < 1e-4, "relative error {}", err);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let run = || {
        let mut store = ParamStore::new();
        let w = store.add("w", t(&[3, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let mut g = Graph::with_params(&store);
        let x = g.input(t(&[1, 3], &[1.0, -1.0, 2.0]));
        let b = g.input(Tensor::zeros(&[2]));
        let vw = g.param(w);
        let y = g.affine(x, vw, b).unwrap();
        let y = g.tanh(y);
        let s = g.sum(y);
        (g.value(s).clone(), g.backward(s).unwrap().into_param_grads(&store))
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut store = ParamStore::new();
    store.add("w", t(&[2], &[0.5, -0.5]));
    let before = store.clone();
    let mut opt = Adam::new(&store, 1e-3);
    opt.step(&mut store, &[Tensor::zeros(&[2])]).unwrap();
    assert_eq!(store, before);
}

#[test]
fn adam_first_step_moves_by_learning_rate_against_the_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("w", t(&[3], &[0.0, 1.0, -1.0]));
    let lr = 0.01;
    let mut opt = Adam::new(&store, lr);
    opt.step(&mut store, &[t(&[3], &[2.0, -0.3, 1e-3])]).unwrap();
    let moved: Vec<f64> = store.get(id).data().iter().zip([0.0, 1.0, -1.0]).map(|(a, b)| a - b).collect();
    assert!((moved[0] + lr).abs() < 1e-8);
    assert!((moved[1] - lr).abs() < 1e-8);
    assert!((moved[2] + lr).abs() < 1e-7);
}

#[test]
fn adam_is_deterministic_and_checks_shapes() {
    let run = || {
        let mut store = ParamStore::new();
        store.add("w", t(&[2], &[0.3, 0.4]));
        let mut opt = Adam::new(&store, 1e-2);
        for k in 0..5 {
            let g = t(&[2], &[k as f64 - 2.0, 0.5]);
            opt.step(&mut store, &[g]).unwrap();
        }
        store
    };
    assert_eq!(run(), run());
    let mut store = ParamStore::new();
    store.add("w", Tensor::zeros(&[2]));
    let mut opt = Adam::new(&store, 1e-2);
    assert!(opt.step(&mut store, &[Tensor::zeros(&[3])]).is_err());
    assert_eq!(vec![0.0; 2], store.tensors()[0].data());
}
