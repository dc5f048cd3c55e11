use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `lr0 · ½ · (1 + cos(π · step / total))`, no warmup.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::invalid("cosine schedule needs total_steps > 0"));
    }
    if step > total_steps {
        return Err(Error::invalid(format!("step {step} beyond schedule length {total_steps}")));
    }
    let lr = lr0 * 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos());
    Ok(lr.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptimizerState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.numel() {
            return Err(Error::shape(format!("adam: tensor {i} grad {:?} vs param {:?}", g.shape(), p.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 5e-4).unwrap(), 5e-4);
        assert!(cosine_lr(100, 100, 5e-4).unwrap().abs() < 1e-20);
        assert!((cosine_lr(50, 100, 5e-4).unwrap() - 2.5e-4).abs() < 1e-18);
        assert!(cosine_lr(0, 0, 1.0).is_err());
        assert!(cosine_lr(101, 100, 1.0).is_err());
    }

    #[test]
    fn cosine_is_non_increasing() {
        let lrs: Vec<f64> = (0..=37).map(|s| cosine_lr(s, 37, 1.0).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = vec![Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = p.clone();
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &[Tensor::zeros(&[3])], &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn scalar_recurrence() {
        // hand-rolled Adam on a scalar with constant gradient 0.5
        let cfg = AdamConfig::default();
        let (lr, g) = (0.01, 0.5);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + (1.0 - 0.9) * g;
            v = 0.999 * v + (1.0 - 0.999) * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= lr * mh / (vh.sqrt() + 1e-8);
        }
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = OptimizerState::new(&p);
        for _ in 0..2 {
            adam_step(&mut p, &[Tensor::scalar(g)], &mut st, lr, &cfg).unwrap();
        }
        assert_eq!(p[0].data()[0], w);
        assert_eq!(st.step(), 2);
        // bias-corrected constant gradient moves by ~lr per step
        assert!((1.0 - w - 0.02).abs() < 1e-6);
    }

    #[test]
    fn per_tensor_independence() {
        let a = Tensor::new(&[2], vec![0.3, -0.1]).unwrap();
        let b = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let ga = Tensor::new(&[2], vec![0.2, 0.4]).unwrap();
        let gb = Tensor::new(&[1, 2], vec![-1.0, 0.01]).unwrap();
        let cfg = AdamConfig::default();

        let mut fwd = vec![a.clone(), b.clone()];
        let mut st = OptimizerState::new(&fwd);
        adam_step(&mut fwd, &[ga.clone(), gb.clone()], &mut st, 0.1, &cfg).unwrap();

        let mut rev = vec![b, a];
        let mut st = OptimizerState::new(&rev);
        adam_step(&mut rev, &[gb, ga], &mut st, 0.1, &cfg).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut st = OptimizerState::new(&p);
        assert!(adam_step(&mut p, &[Tensor::zeros(&[3])], &mut st, 0.1, &AdamConfig::default()).is_err());
        assert!(adam_step(&mut p, &[], &mut st, 0.1, &AdamConfig::default()).is_err());
    }
}
