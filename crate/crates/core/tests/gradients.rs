//! Analytic gradients and tangents against central finite differences.

mod common;

use common::{check_gradients, random_tensor, rel_err, rng};
use ukan_core::layers::{BoundedGrid, KanLayer, Layer, LayerConfig, UkanConfig, UkanLayer};
use ukan_core::tasks::{pinn_loss, PinnProblem};
use ukan_core::{kan_forward, naive_kan_forward, ukan_forward, Model, ModelKind, Tape, Tensor};

const OP_TOL: f64 = 1e-5;
const STEP: f64 = 1e-5;

fn all(s: &mut Vec<Tensor>) -> Vec<&mut Tensor> {
    s.iter_mut().collect()
}

#[test]
fn matmul_gradient() {
    let mut r = rng(1);
    let state = vec![random_tensor(vec![3, 4], -1.0, 1.0, &mut r), random_tensor(vec![4, 2], -1.0, 1.0, &mut r)];
    let err = check_gradients(&state, all, |s, t| {
        let y = t.matmul(&s[0], &s[1]).unwrap();
        t.sum(&y)
    }, STEP);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn silu_gradient_at_half() {
    let state = vec![Tensor::new(vec![1], vec![0.5]).unwrap()];
    let err = check_gradients(&state, all, |s, t| {
        let y = t.silu(&s[0]).unwrap();
        t.sum(&y)
    }, STEP);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn gather_gradient() {
    let mut r = rng(2);
    let state = vec![random_tensor(vec![5, 3], -1.0, 1.0, &mut r), random_tensor(vec![4, 3], -1.0, 1.0, &mut r)];
    let err = check_gradients(&state, all, |s, t| {
        let g = t.gather_rows(&s[0], &[4, 1, 1, 0]).unwrap();
        let p = t.mul(&g, &s[1]).unwrap();
        let q = t.square(&p).unwrap();
        t.sum(&q)
    }, STEP);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn elementwise_and_structural_gradients() {
    let mut r = rng(3);
    let state = vec![
        random_tensor(vec![4, 3], -1.0, 1.0, &mut r),
        random_tensor(vec![4, 2], -1.0, 1.0, &mut r),
        random_tensor(vec![5], -1.0, 1.0, &mut r),
        random_tensor(vec![], -1.0, 1.0, &mut r),
        random_tensor(vec![4, 5], -1.0, 1.0, &mut r),
    ];
    let err = check_gradients(&state, all, |s, t| {
        let c = t.concat_last(&s[0], &s[1]).unwrap();
        let c = t.add_bias(&c, &s[2]).unwrap();
        let c = t.mul(&c, &s[3]).unwrap();
        let c = t.sigmoid(&c).unwrap();
        let c = t.sub(&c, &s[4]).unwrap();
        let c = t.scale(&c, 1.7);
        let r = t.reshape(&c, vec![20]).unwrap();
        let sq = t.square(&r).unwrap();
        t.mean(&sq).unwrap()
    }, STEP);
    assert!(err < OP_TOL, "{err}");
}

#[test]
fn loss_gradients() {
    let mut r = rng(4);
    let state = vec![random_tensor(vec![3, 2], -1.0, 1.0, &mut r), random_tensor(vec![2, 4], -1.0, 1.0, &mut r)];
    let target = random_tensor(vec![3, 4], -1.0, 1.0, &mut r);
    let err = check_gradients(&state, all, |s, t| {
        let y = t.matmul(&s[0], &s[1]).unwrap();
        t.mse(&y, &target).unwrap()
    }, STEP);
    assert!(err < OP_TOL, "{err}");
    let err = check_gradients(&state, all, |s, t| {
        let y = t.matmul(&s[0], &s[1]).unwrap();
        t.softmax_cross_entropy(&y, &[3, 0, 1]).unwrap()
    }, STEP);
    assert!(err < OP_TOL, "{err}");
}

fn kan_layer(k: usize, base: bool, seed: u64) -> KanLayer {
    let grid = BoundedGrid::new(-1.5, 1.0, 6).unwrap();
    let mut l = KanLayer::init(3, 2, k, grid, base, &mut rng(seed)).unwrap();
    let mut r = rng(seed + 100);
    l.set_coefficients(|_, _, _| rand::Rng::random_range(&mut r, -1.0..1.0));
    l.set_scale(random_tensor(vec![3, 2], 0.5, 1.5, &mut r)).unwrap();
    l
}

fn inputs(seed: u64) -> Tensor {
    // Includes a clamped entry (2.0).
    let mut x = random_tensor(vec![5, 3], -1.4, 0.9, &mut rng(seed));
    x.values_mut()[4] = 2.0;
    x
}

#[test]
fn kan_layer_gradients() {
    for (k, base) in [(3, false), (2, true), (4, true)] {
        let state = (kan_layer(k, base, 7), inputs(8));
        let target = random_tensor(vec![5, 2], -1.0, 1.0, &mut rng(9));
        let err = check_gradients(
            &state,
            |s| {
                let mut p: Vec<&mut Tensor> = s.0.parameters_mut().into_iter().map(|(_, t)| t).collect();
                p.push(&mut s.1);
                p
            },
            |s, t| {
                let y = kan_forward(&s.0, t, &s.1).unwrap();
                t.mse(&y, &target).unwrap()
            },
            STEP,
        );
        assert!(err < OP_TOL, "k={k}: {err}");
    }
}

#[test]
fn naive_layer_gradients() {
    let state = (kan_layer(3, false, 10), inputs(11));
    let target = random_tensor(vec![5, 2], -1.0, 1.0, &mut rng(12));
    let err = check_gradients(
        &state,
        |s| {
            let mut p: Vec<&mut Tensor> = s.0.parameters_mut().into_iter().map(|(_, t)| t).collect();
            p.push(&mut s.1);
            p
        },
        |s, t| {
            let y = naive_kan_forward(&s.0, t, &s.1).unwrap();
            t.mse(&y, &target).unwrap()
        },
        STEP,
    );
    assert!(err < OP_TOL, "{err}");
}

fn ukan_layer(d_in: usize, d_out: usize, seed: u64) -> UkanLayer {
    let cfg = UkanConfig {
        degree: 3,
        delta_g: 0.35,
        d_pe: 4,
        d_femb: 3,
        d_hidden: Some(8),
    };
    let mut l = UkanLayer::init(d_in, d_out, &cfg, &mut rng(seed)).unwrap();
    // Larger CG weights and non-trivial biases and scales so every path matters.
    let mut r = rng(seed + 1);
    for (_, p) in l.parameters_mut() {
        for v in p.values_mut() {
            *v = rand::Rng::random_range(&mut r, -1.0..1.0);
        }
    }
    l
}

#[test]
fn ukan_end_to_end_gradients() {
    let state = (ukan_layer(2, 3, 20), random_tensor(vec![6, 2], -2.0, 2.0, &mut rng(21)));
    let target = random_tensor(vec![6, 3], -1.0, 1.0, &mut rng(22));

    let mut tracked = state.0.clone();
    let mut tape = Tape::new();
    for (_, p) in tracked.parameters_mut() {
        tape.watch(p);
    }
    let y = ukan_forward(&tracked, &mut tape, &state.1).unwrap();
    let loss = tape.mse(&y, &target).unwrap();
    let grads = tape.backward(&loss).unwrap();
    for (name, p) in tracked.parameters() {
        let g = grads.get(p).unwrap_or_else(|| panic!("no gradient for {name}"));
        assert!(g.values().iter().any(|&v| v != 0.0), "{name} gradient is zero");
    }

    let err = check_gradients(
        &state,
        |s| {
            let mut p: Vec<&mut Tensor> = s.0.parameters_mut().into_iter().map(|(_, t)| t).collect();
            p.push(&mut s.1);
            p
        },
        |s, t| {
            let y = ukan_forward(&s.0, t, &s.1).unwrap();
            t.mse(&y, &target).unwrap()
        },
        STEP,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn cg_gradient_wrt_hidden_weights() {
    let layer = ukan_layer(2, 3, 30);
    let probe = random_tensor(vec![3, 4], -1.0, 1.0, &mut rng(31));
    let err = check_gradients(
        &layer,
        |l| l.parameter_mut("cg_hidden_w").into_iter().collect(),
        |l, t| {
            let c = l.cg_coefficients(t, 1, -3).unwrap();
            let p = t.mul(&c, &probe).unwrap();
            t.sum(&p)
        },
        STEP,
    );
    assert!(err < 1e-5, "{err}");
}

#[test]
fn ukan_tangent_matches_central_difference() {
    let layer = ukan_layer(1, 1, 40);
    let t = Tensor::new(vec![7, 1], vec![-3.3, -1.01, -0.2, 0.0, 0.41, 1.7, 9.95]).unwrap();
    let mut tape = Tape::new();
    let seeded = tape.seed_tangent(&t, &Tensor::full(vec![7, 1], 1.0)).unwrap();
    let y = ukan_forward(&layer, &mut tape, &seeded).unwrap();
    let analytic = y.tangent().unwrap().values().to_vec();
    let shifted = |d: f64| {
        let mut x = t.clone();
        x.values_mut().iter_mut().for_each(|v| *v += d);
        ukan_forward(&layer, &mut Tape::new(), &x).unwrap().values().to_vec()
    };
    let (plus, minus) = (shifted(1e-5), shifted(-1e-5));
    let numeric: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / 2e-5).collect();
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-8) < 1e-5, "{a} vs {n}");
    }
}

fn mlp(seed: u64) -> Model {
    Model::init(ModelKind::Mlp, &[1, 4, 1], &LayerConfig::Linear, &mut rng(seed)).unwrap()
}

/// Mean of `df/dt` over a few points, with `df/dt` taken either from the
/// tangent channel or by central differences of the forward pass.
fn mean_slope(model: &Model, tape: &mut Tape, fd_step: Option<f64>) -> Tensor {
    let t = Tensor::new(vec![4, 1], vec![-1.2, -0.3, 0.4, 1.1]).unwrap();
    match fd_step {
        None => {
            let seeded = tape.seed_tangent(&t, &Tensor::full(vec![4, 1], 1.0)).unwrap();
            let y = model.forward(tape, &seeded).unwrap();
            let dy = y.tangent().unwrap().clone();
            tape.mean(&dy).unwrap()
        }
        Some(h) => {
            let shift = |d: f64| {
                let mut x = t.clone();
                x.values_mut().iter_mut().for_each(|v| *v += d);
                model.predict(&x, 1).unwrap()
            };
            let (p, m) = (shift(h), shift(-h));
            let slope: Vec<f64> = p.values().iter().zip(m.values()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            Tensor::scalar(slope.iter().sum::<f64>() / slope.len() as f64)
        }
    }
}

#[test]
fn second_order_through_sigmoid_network() {
    let model = mlp(50);
    let mut tracked = model.clone();
    let mut tape = Tape::new();
    tracked.watch(&mut tape);
    let loss = mean_slope(&tracked, &mut tape, None);
    let grads = tape.backward(&loss).unwrap();
    let analytic: Vec<f64> = tracked.gradients(&grads).unwrap().iter().flat_map(|g| g.values().to_vec()).collect();

    let h = 1e-4;
    let mut numeric = Vec::new();
    let n_params = model.parameters().len();
    for pi in 0..n_params {
        for i in 0..model.parameters()[pi].len() {
            let eval = |d: f64| {
                let mut m = model.clone();
                m.parameters_mut()[pi].values_mut()[i] += d;
                mean_slope(&m, &mut Tape::new(), Some(h)).item().unwrap()
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    let err = rel_err(&analytic, &numeric, 1e-8);
    assert!(err < 1e-3, "{err}");
}

/// PINN loss with `df/dt` by central differences instead of tangents.
fn pinn_loss_fd(model: &Model, problem: &PinnProblem, t: &Tensor, h: f64) -> f64 {
    let shift = |d: f64| {
        let mut x = t.clone();
        x.values_mut().iter_mut().for_each(|v| *v += d);
        model.predict(&x, 1).unwrap()
    };
    let f = shift(0.0);
    let (p, m) = (shift(h), shift(-h));
    let n = t.len();
    let mut interior = 0.0;
    for i in 0..n {
        let df = (p.values()[i] - m.values()[i]) / (2.0 * h);
        let fi = f.values()[i];
        interior += (df - problem.rate * fi * (1.0 - fi)).powi(2);
    }
    let f0 = model.predict(&Tensor::new(vec![1, 1], vec![problem.t0]).unwrap(), 1).unwrap().values()[0];
    interior / n as f64 + (f0 - problem.f0).powi(2)
}

fn pinn_gradient_check(model: Model) {
    let problem = PinnProblem::default();
    let t = Tensor::new(vec![5, 1], vec![-4.1, -1.3, 0.2, 1.9, 3.7]).unwrap();
    let mut tracked = model.clone();
    let mut tape = Tape::new();
    tracked.watch(&mut tape);
    let loss = pinn_loss(|tape, x| tracked.forward(tape, x), &mut tape, &problem, &t).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let analytic: Vec<f64> = tracked.gradients(&grads).unwrap().iter().flat_map(|g| g.values().to_vec()).collect();

    let h = 1e-4;
    let mut numeric = Vec::new();
    for pi in 0..model.parameters().len() {
        for i in 0..model.parameters()[pi].len() {
            let eval = |d: f64| {
                let mut m = model.clone();
                m.parameters_mut()[pi].values_mut()[i] += d;
                pinn_loss_fd(&m, &problem, &t, h)
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    let err = rel_err(&analytic, &numeric, 1e-8);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn pinn_gradient_kan() {
    let layer = LayerConfig::Kan {
        degree: 3,
        grid: BoundedGrid::new(-5.0, 5.0, 7).unwrap(),
        base_branch: true,
    };
    let mut model = Model::init(ModelKind::Kan, &[1, 3, 1], &layer, &mut rng(60)).unwrap();
    let mut r = rng(61);
    for p in model.parameters_mut() {
        p.values_mut().iter_mut().for_each(|v| *v = rand::Rng::random_range(&mut r, -1.0..1.0));
    }
    pinn_gradient_check(model);
}

#[test]
fn pinn_gradient_ukan() {
    let layer = LayerConfig::Ukan(UkanConfig {
        degree: 3,
        delta_g: 1.3,
        d_pe: 4,
        d_femb: 2,
        d_hidden: Some(6),
    });
    let mut model = Model::init(ModelKind::Ukan, &[1, 2, 1], &layer, &mut rng(70)).unwrap();
    let mut r = rng(71);
    for p in model.parameters_mut() {
        p.values_mut().iter_mut().for_each(|v| *v = rand::Rng::random_range(&mut r, -1.0..1.0));
    }
    pinn_gradient_check(model);
}

#[test]
fn mlp_gradients() {
    let model = Model::init(ModelKind::Mlp, &[2, 5, 3], &LayerConfig::Linear, &mut rng(80)).unwrap();
    let x = random_tensor(vec![4, 2], -1.0, 1.0, &mut rng(81));
    let err = check_gradients(
        &model,
        |m| m.parameters_mut(),
        |m, t| {
            let y = m.forward(t, &x).unwrap();
            t.softmax_cross_entropy(&y, &[0, 2, 1, 1]).unwrap()
        },
        STEP,
    );
    assert!(err < OP_TOL, "{err}");
}
