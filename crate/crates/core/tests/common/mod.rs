#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ukan_core::{Tape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Analytic gradients of `loss` w.r.t. every tensor in `params(state)`
/// against central differences with step `h`. Returns the worst relative
/// error over all parameter tensors.
pub fn check_gradients<S: Clone>(
    state: &S,
    params: impl Fn(&mut S) -> Vec<&mut Tensor>,
    loss: impl Fn(&S, &mut Tape) -> Tensor,
    h: f64,
) -> f64 {
    let mut tracked = state.clone();
    let mut tape = Tape::new();
    for p in params(&mut tracked) {
        tape.watch(p);
    }
    let out = loss(&tracked, &mut tape);
    let grads = tape.backward(&out).unwrap();
    let analytic: Vec<Vec<f64>> = params(&mut tracked)
        .into_iter()
        .map(|p| grads.get(p).expect("gradient for every leaf").values().to_vec())
        .collect();

    let eval = |s: &S| loss(s, &mut Tape::new()).item().unwrap();
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = state.clone();
            params(&mut plus)[pi].values_mut()[i] += h;
            let mut minus = state.clone();
            params(&mut minus)[pi].values_mut()[i] -= h;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let err = rel_err(grad, &numeric, 1e-8);
        worst = worst.max(err);
    }
    worst
}
