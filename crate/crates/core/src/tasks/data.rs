use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Split, TaskError, Targets};
use crate::tensor::Tensor;

/// Bessel function of the first kind, order 0, from
/// `J0(x) = (1/π) ∫₀^π cos(x sin θ) dθ` by composite Simpson.
pub fn bessel_j0(x: f64) -> Result<f64, TaskError> {
    if !x.is_finite() {
        return Err(TaskError::Domain(format!("J0 of non-finite {x}")));
    }
    let mut panels = 64 + 8 * x.abs().ceil() as usize;
    panels += panels % 2;
    let h = PI / panels as f64;
    let f = |i: usize| (x * (i as f64 * h).sin()).cos();
    let mut sum = f(0) + f(panels);
    for i in 1..panels {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    Ok(sum * h / 3.0 / PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionTask {
    /// `exp(J0(20x) + y²)`
    I,
    /// `exp(sin(πx) + y²)`
    II,
    /// `exp((1/15) Σ_{i=0}^{15} sin((4i/15 + 1)π x_i))`
    III,
}

impl RegressionTask {
    pub fn dim(self) -> usize {
        match self {
            RegressionTask::I | RegressionTask::II => 2,
            RegressionTask::III => 16,
        }
    }

    pub fn target(self, x: &[f64]) -> f64 {
        match self {
            RegressionTask::I => {
                let j0 = bessel_j0(20.0 * x[0]).expect("finite input");
                (j0 + x[1] * x[1]).exp()
            }
            RegressionTask::II => ((PI * x[0]).sin() + x[1] * x[1]).exp(),
            RegressionTask::III => {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, &xi)| ((4.0 * i as f64 / 15.0 + 1.0) * PI * xi).sin())
                    .sum();
                (s / 15.0).exp()
            }
        }
    }
}

/// `n` points uniform on `[-1, 1]^d` with exact targets.
pub fn gen_regression(task: RegressionTask, n: usize, seed: u64, split: Split) -> Result<Dataset, TaskError> {
    if n == 0 {
        return Err(TaskError::Config("dataset size must be at least 1".into()));
    }
    let d = task.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let targets: Vec<f64> = inputs.chunks_exact(d).map(|x| task.target(x)).collect();
    Dataset::new(
        Tensor::new(vec![n, d], inputs)?,
        Targets::Values(Tensor::new(vec![n, 1], targets)?),
        split,
    )
}

/// Noise-free point of moon `class` at angle `phi`.
pub fn moon_point(class: usize, phi: f64) -> (f64, f64) {
    if class == 0 {
        (phi.cos(), phi.sin())
    } else {
        (1.0 - phi.cos(), 0.5 - phi.sin())
    }
}

/// Two interleaving half circles with Gaussian jitter. The first `n/2` rows
/// are class 0 at `(cos φ, sin φ)`, the rest class 1 at
/// `(1 − cos φ, 0.5 − sin φ)`, with `φ ~ U[0, π]`.
pub fn gen_moons(n: usize, noise_sd: f64, seed: u64, split: Split) -> Result<Dataset, TaskError> {
    if n == 0 || n % 2 != 0 {
        return Err(TaskError::Config(format!("moons needs a positive even size, got {n}")));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| TaskError::Config(format!("noise sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(i >= n / 2);
        let phi = rng.random_range(0.0..=PI);
        let (x, y) = moon_point(class, phi);
        inputs.push(x + noise.sample(&mut rng));
        inputs.push(y + noise.sample(&mut rng));
        labels.push(class);
    }
    Dataset::new(Tensor::new(vec![n, 2], inputs)?, Targets::Classes(labels), split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_values() {
        assert!((bessel_j0(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(bessel_j0(2.404825557695773).unwrap().abs() < 1e-9);
        assert!((bessel_j0(1.0).unwrap() - 0.7651976866).abs() < 1e-9);
        assert!(bessel_j0(f64::NAN).is_err());
        for x in [0.3, 5.0, 17.5, 40.0] {
            let (a, b) = (bessel_j0(x).unwrap(), bessel_j0(-x).unwrap());
            assert_eq!(a, b);
            assert!(a.abs() <= 1.0);
        }
    }

    #[test]
    fn regression_targets() {
        assert_eq!(RegressionTask::II.target(&[0.0, 0.0]), 1.0);
        assert!((RegressionTask::I.target(&[0.0, 0.0]) - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(RegressionTask::III.target(&[0.0; 16]), 1.0);
    }

    #[test]
    fn regression_sampling() {
        let a = gen_regression(RegressionTask::III, 50, 9, Split::Train).unwrap();
        let b = gen_regression(RegressionTask::III, 50, 9, Split::Train).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.d_in(), 16);
        assert!(a.inputs.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn moon_parametrization() {
        assert_eq!(moon_point(0, 0.0), (1.0, 0.0));
        let (x, y) = moon_point(1, PI / 2.0);
        assert!((x - 1.0).abs() < 1e-15 && (y + 0.5).abs() < 1e-15);
    }

    #[test]
    fn moons_layout() {
        let ds = gen_moons(1000, 0.1, 3, Split::Train).unwrap();
        let Targets::Classes(labels) = &ds.targets else { panic!() };
        assert_eq!(labels.iter().filter(|&&c| c == 0).count(), 500);
        assert_eq!(labels.iter().filter(|&&c| c == 1).count(), 500);
        assert!(gen_moons(7, 0.1, 3, Split::Train).is_err());

        let clean = gen_moons(200, 0.0, 4, Split::Train).unwrap();
        for (i, p) in clean.inputs.values().chunks_exact(2).enumerate() {
            let (cx, cy) = if i < 100 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if i < 100 {
                assert!(p[1] >= 0.0);
            } else {
                assert!(p[1] <= 0.5);
            }
        }
    }
}
