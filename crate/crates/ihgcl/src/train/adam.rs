//! Adam optimizer over a fixed list of dense parameter matrices.

use crate::tensor::Dense;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam state: one first- and second-moment matrix per parameter, plus the
/// shared step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    /// Fresh optimizer for parameters of the given shapes.
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Adam {
        Adam {
            lr,
            t: 0,
            m: shapes.iter().map(|&s| Dense::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Dense::zeros(s)).collect(),
        }
    }

    /// One update over all parameters; `grads[i]` pairs with `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Dense], grads: &[Dense]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let lr = self.lr;
        for i in 0..self.m.len() {
            let g = &grads[i];
            assert_eq!(g.dim(), params[i].dim(), "gradient shape mismatch");
            ndarray::Zip::from(&mut *params[i])
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + EPS);
                });
        }
    }

    /// Completed step count.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Moment matrices, first then second, in parameter order.
    pub fn moments(&self) -> (&[Dense], &[Dense]) {
        (&self.m, &self.v)
    }

    /// Restore moments and step counter from a checkpoint; shapes must match
    /// the optimizer's own.
    pub fn restore(&mut self, m: Vec<Dense>, v: Vec<Dense>, t: u64) {
        assert_eq!(m.len(), self.m.len(), "first-moment count mismatch");
        assert_eq!(v.len(), self.v.len(), "second-moment count mismatch");
        for (a, b) in m.iter().zip(&self.m) {
            assert_eq!(a.dim(), b.dim(), "first-moment shape mismatch");
        }
        for (a, b) in v.iter().zip(&self.v) {
            assert_eq!(a.dim(), b.dim(), "second-moment shape mismatch");
        }
        self.m = m;
        self.v = v;
        self.t = t;
    }
}
