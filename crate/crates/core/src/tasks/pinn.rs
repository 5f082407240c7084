//! Logistic growth `df/dt = R f (1 − f)` with `f(t0) = f0`, solved by
//! minimising the squared residual at collocation points.

use super::TaskError;
use crate::layers::LayerError;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnProblem {
    pub rate: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t0: f64,
    pub f0: f64,
    pub n_collocation: usize,
}

impl Default for PinnProblem {
    fn default() -> Self {
        PinnProblem {
            rate: 1.0,
            t_lo: -5.0,
            t_hi: 5.0,
            t0: 0.0,
            f0: 0.5,
            n_collocation: 100,
        }
    }
}

impl PinnProblem {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.t_lo < self.t_hi) {
            return Err(TaskError::Config(format!("empty domain [{}, {}]", self.t_lo, self.t_hi)));
        }
        if self.n_collocation == 0 {
            return Err(TaskError::Config("need at least one collocation point".into()));
        }
        Ok(())
    }

    /// Closed-form solution `f0 e^{R(t−t0)} / (1 − f0 + f0 e^{R(t−t0)})`.
    pub fn solution(&self, t: f64) -> f64 {
        logistic_solution(self.rate, self.t0, self.f0, t)
    }

    /// `n` evenly spaced points covering `[t_lo, t_hi]` inclusive, as `[n, 1]`.
    pub fn grid(&self, n: usize) -> Tensor {
        let step = if n > 1 { (self.t_hi - self.t_lo) / (n - 1) as f64 } else { 0.0 };
        let data = (0..n).map(|i| self.t_lo + step * i as f64).collect();
        Tensor::new(vec![n, 1], data).expect("column vector")
    }
}

pub fn logistic_solution(rate: f64, t0: f64, f0: f64, t: f64) -> f64 {
    let e = (rate * (t - t0)).exp();
    if e.is_infinite() {
        return 1.0;
    }
    f0 * e / (1.0 - f0 + f0 * e)
}

/// `mean_i (ḟ(t_i) − R f(t_i)(1 − f(t_i)))² + (f(t0) − f0)²`, where `ḟ` comes
/// from the tangent channel seeded at the collocation inputs.
pub fn pinn_loss<F>(
    model: F,
    tape: &mut Tape,
    problem: &PinnProblem,
    collocation: &Tensor,
) -> Result<Tensor, TaskError>
where
    F: Fn(&mut Tape, &Tensor) -> Result<Tensor, LayerError>,
{
    problem.validate()?;
    if collocation.rank() != 2 || collocation.shape()[1] != 1 || collocation.is_empty() {
        return Err(TaskError::Contract(format!(
            "collocation points must be [n, 1], got {:?}",
            collocation.shape()
        )));
    }
    let n = collocation.shape()[0];
    let t = tape.seed_tangent(collocation, &Tensor::full(vec![n, 1], 1.0))?;
    let f = model(tape, &t)?;
    if f.shape() != [n, 1] {
        return Err(TaskError::Contract(format!("model output {:?}, expected [{n}, 1]", f.shape())));
    }
    let df = f.tangent().cloned().unwrap_or_else(|| Tensor::zeros(vec![n, 1]));
    let f = f.without_tangent();

    let f_sq = tape.square(&f)?;
    let growth = tape.sub(&f, &f_sq)?;
    let growth = tape.scale(&growth, problem.rate);
    let residual = tape.sub(&df, &growth)?;
    let residual_sq = tape.square(&residual)?;
    let interior = tape.mean(&residual_sq)?;

    let f_at_t0 = model(tape, &Tensor::new(vec![1, 1], vec![problem.t0])?)?;
    if f_at_t0.len() != 1 {
        return Err(TaskError::Contract(format!("model output {:?} at t0", f_at_t0.shape())));
    }
    let miss = tape.sub(&f_at_t0, &Tensor::scalar(problem.f0))?;
    let miss_sq = tape.square(&miss)?;
    let boundary = tape.sum(&miss_sq);
    Ok(tape.add(&interior, &boundary)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model() {
        let problem = PinnProblem::default();
        let t = problem.grid(11);
        let mut tape = Tape::new();
        let loss = pinn_loss(
            |_, x| Ok(Tensor::full(x.shape().to_vec(), 0.5)),
            &mut tape,
            &problem,
            &t,
        )
        .unwrap();
        assert!((loss.item().unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn analytic_solution_has_zero_loss() {
        let problem = PinnProblem::default();
        let t = problem.grid(101);
        let mut tape = Tape::new();
        let loss = pinn_loss(|tape, x| Ok(tape.sigmoid(x)?), &mut tape, &problem, &t).unwrap();
        assert!(loss.item().unwrap() < 1e-12);
        assert!((problem.solution(0.0) - 0.5).abs() < 1e-15);
        assert!((problem.solution(2.0) - 1.0 / (1.0 + (-2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn rejects_vector_output() {
        let problem = PinnProblem::default();
        let t = problem.grid(5);
        let err = pinn_loss(
            |_, x| Ok(Tensor::zeros(vec![x.shape()[0], 2])),
            &mut Tape::new(),
            &problem,
            &t,
        );
        assert!(matches!(err, Err(TaskError::Contract(_))));
    }
}
