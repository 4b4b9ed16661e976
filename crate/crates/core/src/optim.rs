//! SGD with momentum, Adam, and piecewise learning-rate schedules.

use crate::error::{Error, Result};
use crate::nn::Params;
use crate::tensor::Tensor;

fn check_congruent(params: &Params, grads: &Params, state: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(format!(
            "optimizer: {} params, {} grads, {} state tensors",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    for ((p, g), s) in params.tensors.iter().zip(&grads.tensors).zip(state) {
        if p.shape() != g.shape() || p.shape() != s.shape() {
            return Err(Error::shape(format!(
                "optimizer: param {:?}, grad {:?}, state {:?}",
                p.shape(),
                g.shape(),
                s.shape()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(params: &Params, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: params.zeros_like().tensors,
        }
    }

    /// `v ← m·v − lr·(g + wd·p)`, then `p ← p + v`.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        check_congruent(params, grads, &self.velocity)?;
        let (lr, m, wd) = (self.lr, self.momentum, self.weight_decay);
        for ((p, g), v) in params.tensors.iter_mut().zip(&grads.tensors).zip(&mut self.velocity) {
            for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *v = m * *v - lr * (g + wd * *p);
                *p += *v;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: params.zeros_like().tensors,
            v: params.zeros_like().tensors,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        check_congruent(params, grads, &self.m)?;
        check_congruent(params, grads, &self.v)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for (i, p) in params.tensors.iter_mut().enumerate() {
            let g = grads.tensors[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, p) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j] + wd * *p;
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                *p -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }

    pub fn set_hyper(&mut self, lr: f64, weight_decay: f64) {
        match self {
            Optimizer::Sgd(o) => {
                o.lr = lr;
                o.weight_decay = weight_decay;
            }
            Optimizer::Adam(o) => {
                o.lr = lr;
                o.weight_decay = weight_decay;
            }
        }
    }
}

/// `(last epoch, lr, weight decay)` rows of the reference SGD schedule.
pub const STEP_SCHEDULE: [(u32, f64, f64); 7] = [
    (10, 1e-2, 5e-4),
    (20, 1e-3, 5e-4),
    (25, 1e-4, 5e-4),
    (30, 5e-5, 0.0),
    (35, 1e-5, 0.0),
    (40, 5e-6, 0.0),
    (45, 1e-6, 0.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// The 45-epoch table; later epochs keep the last row.
    Step,
    /// The table compressed onto `total` epochs: epoch `e` reads row
    /// `ceil(45·e/total)`.
    Scaled { total: u32 },
    Constant { lr: f64, weight_decay: f64 },
}

fn step_row(epoch: u32) -> (f64, f64) {
    STEP_SCHEDULE
        .iter()
        .find(|&&(last, _, _)| epoch <= last)
        .map(|&(_, lr, wd)| (lr, wd))
        .unwrap_or((1e-6, 0.0))
}

impl Schedule {
    /// `(lr, weight decay)` for a 1-based epoch.
    pub fn at(&self, epoch: u32) -> (f64, f64) {
        let epoch = epoch.max(1);
        match *self {
            Schedule::Step => step_row(epoch),
            Schedule::Scaled { total } => {
                let total = total.max(1) as u64;
                let mapped = (45 * epoch as u64).div_ceil(total);
                step_row(mapped as u32)
            }
            Schedule::Constant { lr, weight_decay } => (lr, weight_decay),
        }
    }
}

pub fn lr_schedule(epoch: u32) -> (f64, f64) {
    Schedule::Step.at(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Params {
        Params {
            names: vec!["p".into()],
            tensors: vec![Tensor::new([1], vec![v]).unwrap()],
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar(1.0);
        let mut o = Sgd::new(&p, 0.1, 0.0, 0.0);
        o.step(&mut p, &scalar(2.0)).unwrap();
        assert!((p.tensors[0].data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(3.0);
        let mut o = Sgd::new(&p, 0.1, 0.9, 0.0);
        o.step(&mut p, &scalar(0.0)).unwrap();
        assert_eq!(p.tensors[0].data()[0], 3.0);
    }

    #[test]
    fn momentum_recurrence() {
        let (lr, m, g1, g2) = (0.1, 0.9, 2.0, -1.0);
        let mut p = scalar(1.0);
        let mut o = Sgd::new(&p, lr, m, 0.0);
        o.step(&mut p, &scalar(g1)).unwrap();
        o.step(&mut p, &scalar(g2)).unwrap();
        let v1 = -lr * g1;
        let v2 = m * v1 - lr * g2;
        assert!((p.tensors[0].data()[0] - (1.0 + v1 + v2)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_sign_step() {
        for g in [3.0, -1e-3, 250.0] {
            let mut p = scalar(0.5);
            let mut o = Adam::new(&p, 2e-4);
            o.step(&mut p, &scalar(g)).unwrap();
            let expected = 0.5 - 2e-4 * g.signum() * g.abs() / (g.abs() + 1e-8);
            assert!((p.tensors[0].data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = scalar(-2.0);
        let mut o = Adam::new(&p, 1e-2);
        for _ in 0..5 {
            o.step(&mut p, &scalar(0.0)).unwrap();
        }
        assert_eq!(p.tensors[0].data()[0], -2.0);
    }

    #[test]
    fn adam_matches_hand_recurrence() {
        let grads = [0.3, -1.2, 0.7, 0.0, 2.5];
        let (lr, b1, b2, eps) = (1e-2, 0.9f64, 0.999f64, 1e-8);
        let mut p = scalar(1.0);
        let mut o = Adam::new(&p, lr);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            o.step(&mut p, &scalar(g)).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.tensors[0].data()[0] - x).abs() < 1e-14);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = scalar(1.25);
        let mut s = Sgd::new(&p, 0.0, 0.9, 5e-4);
        let mut a = Adam::new(&p, 0.0);
        for _ in 0..3 {
            s.step(&mut p, &scalar(4.0)).unwrap();
            a.step(&mut p, &scalar(4.0)).unwrap();
        }
        assert_eq!(p.tensors[0].data()[0], 1.25);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = scalar(1.0);
        let g = Params {
            names: vec!["p".into()],
            tensors: vec![Tensor::zeros([2])],
        };
        let mut o = Sgd::new(&p, 0.1, 0.0, 0.0);
        assert!(o.step(&mut p, &g).is_err());
    }

    #[test]
    fn schedule_table() {
        assert_eq!(lr_schedule(5), (1e-2, 5e-4));
        assert_eq!(lr_schedule(27), (5e-5, 0.0));
        assert_eq!(lr_schedule(45), (1e-6, 0.0));
        assert_eq!(lr_schedule(100), (1e-6, 0.0));
        assert_eq!(lr_schedule(11), (1e-3, 5e-4));
    }

    #[test]
    fn scaled_schedule_compresses_table() {
        let s = Schedule::Scaled { total: 9 };
        assert_eq!(s.at(1), (1e-2, 5e-4));
        assert_eq!(s.at(2), (1e-2, 5e-4));
        assert_eq!(s.at(3), (1e-3, 5e-4));
        assert_eq!(s.at(9), (1e-6, 0.0));
        assert_eq!(Schedule::Scaled { total: 45 }.at(27), lr_schedule(27));
    }
}
