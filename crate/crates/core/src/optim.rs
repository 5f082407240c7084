//! Plain SGD, Adam with coupled L2 decay, and an exponential learning-rate
//! schedule.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("optimizer contract violated: {0}")]
    Contract(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

fn check_pairs(params: &[&mut Tensor], grads: &[&Tensor]) -> Result<(), OptimError> {
    if params.len() != grads.len() {
        return Err(OptimError::Contract(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(OptimError::Contract(format!(
                "parameter {i}: shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

/// `p ← p − lr·g` for every parameter.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) -> Result<(), OptimError> {
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.values_mut().iter_mut().zip(g.values()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient
/// before the moment updates (`g ← g + wd·p`).
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
) -> Result<(), OptimError> {
    check_pairs(params, grads)?;
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(OptimError::Contract(format!(
            "state tracks {} tensors, got {} parameters",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if state.m[i].shape() != p.shape() || state.v[i].shape() != p.shape() {
            return Err(OptimError::Contract(format!("state shape mismatch for parameter {i}")));
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - config.beta1.powf(t);
    let c2 = 1.0 - config.beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (m, v) = (m.values_mut(), v.values_mut());
        for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
            let g = gv + config.weight_decay * *pv;
            *mv = config.beta1 * *mv + (1.0 - config.beta1) * g;
            *vv = config.beta2 * *vv + (1.0 - config.beta2) * g * g;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// `lr(t) = max(min_lr, lr0 · decay_rate^t)`, stepped once per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay_rate: f64,
    pub min_lr: f64,
}

impl LrSchedule {
    pub fn new(lr0: f64, decay_rate: f64, min_lr: f64) -> Result<Self, OptimError> {
        if !(decay_rate > 0.0 && decay_rate <= 1.0) {
            return Err(OptimError::Schedule(format!("decay rate {decay_rate} not in (0, 1]")));
        }
        if !(min_lr > 0.0 && min_lr <= lr0) {
            return Err(OptimError::Schedule(format!(
                "need 0 < min_lr <= lr0, got min_lr={min_lr} lr0={lr0}"
            )));
        }
        Ok(LrSchedule {
            lr0,
            decay_rate,
            min_lr,
        })
    }

    /// Fixed learning rate.
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            lr0: lr,
            decay_rate: 1.0,
            min_lr: lr,
        }
    }

    pub fn lr_at(&self, t: u64) -> f64 {
        let exponent = t.min(i32::MAX as u64) as i32;
        (self.lr0 * self.decay_rate.powi(exponent)).max(self.min_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut p = scalar(1.0);
        sgd_step(&mut [&mut p], &[&scalar(0.0)], 0.1).unwrap();
        assert_eq!(p.values(), &[1.0]);
        sgd_step(&mut [&mut p], &[&scalar(2.0)], 0.1).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
        assert!(sgd_step(&mut [&mut p], &[&Tensor::zeros(vec![2])], 0.1).is_err());
    }

    #[test]
    fn sgd_quadratic_bowl() {
        let mut p = scalar(1.0);
        let mut steps = 0;
        while p.values()[0].abs() >= 1e-6 {
            let g = scalar(2.0 * p.values()[0]);
            sgd_step(&mut [&mut p], &[&g], 0.1).unwrap();
            steps += 1;
            assert!(steps <= 200);
        }
        // Contraction factor 0.8 per step.
        let expected = (1e-6f64).ln() / 0.8f64.ln();
        assert_eq!(steps, expected.ceil() as usize);
    }

    #[test]
    fn adam_examples() {
        let cfg = AdamConfig::default();
        let mut p = scalar(3.0);
        let mut state = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[&scalar(0.0)], &mut state, 0.01, &cfg).unwrap();
        assert_eq!(p.values(), &[3.0]);
        assert_eq!(state.t, 1);

        // Decay alone drives the first step like a gradient of wd·p.
        let wd = AdamConfig {
            weight_decay: 1e-5,
            ..cfg
        };
        let mut a = scalar(3.0);
        let mut sa = AdamState::new(&[&a]);
        adam_step(&mut [&mut a], &[&scalar(0.0)], &mut sa, 0.01, &wd).unwrap();
        let mut b = scalar(3.0);
        let mut sb = AdamState::new(&[&b]);
        adam_step(&mut [&mut b], &[&scalar(3e-5)], &mut sb, 0.01, &cfg).unwrap();
        assert_eq!(a.values(), b.values());

        let mut p = scalar(0.0);
        let mut state = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[&scalar(1.0)], &mut state, 0.01, &cfg).unwrap();
        assert!((p.values()[0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_scale_robust() {
        let cfg = AdamConfig::default();
        let run = |g: f64| {
            let mut p = scalar(0.5);
            let mut s = AdamState::new(&[&p]);
            adam_step(&mut [&mut p], &[&scalar(g)], &mut s, 0.01, &cfg).unwrap();
            p.values()[0] - 0.5
        };
        let (a, b) = (run(0.3), run(3.0));
        assert!(((a - b) / a).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_mismatched_state() {
        let mut p = scalar(1.0);
        let mut state = AdamState::new(&[&Tensor::zeros(vec![2])]);
        let err = adam_step(&mut [&mut p], &[&scalar(1.0)], &mut state, 0.1, &AdamConfig::default());
        assert!(matches!(err, Err(OptimError::Contract(_))));
    }

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::new(0.01, 1.0 - 1e-4, 1e-4).unwrap();
        assert_eq!(s.lr_at(0), 0.01);
        assert!((s.lr_at(10000) - 0.003679).abs() < 5e-7);
        assert_eq!(s.lr_at(10_000_000), 1e-4);
        let mut last = f64::INFINITY;
        for t in (0..100_000).step_by(997) {
            let lr = s.lr_at(t);
            assert!(lr <= last && lr >= 1e-4);
            last = lr;
        }
        assert!(LrSchedule::new(0.01, 1.5, 1e-4).is_err());
        assert!(LrSchedule::new(0.01, 0.9, 0.1).is_err());
    }
}
