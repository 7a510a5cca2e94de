use super::tensor::{Matrix, ParamStore};

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || -> Vec<Matrix> {
            store
                .iter()
                .map(|(_, t)| Matrix::zeros(t.values.raw_dim()))
                .collect()
        };
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update of every parameter that carries a gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for ((tensor, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(grad) = &tensor.grad else { continue };
            if wd != 0.0 {
                tensor.values *= 1.0 - lr * wd;
            }
            ndarray::Zip::from(&mut tensor.values)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}
