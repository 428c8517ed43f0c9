use super::mlp::{Gradients, Mlp};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// Applies one descent step along `grads`.
    pub fn update(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let eps = self.eps;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&grads.w[i])
                .and(&mut self.m.w[i])
                .and(&mut self.v.w[i])
                .for_each(|p, &g, m, v| upd(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&grads.b[i])
                .and(&mut self.m.b[i])
                .and(&mut self.v.b[i])
                .for_each(|p, &g, m, v| upd(p, g, m, v));
        }
    }
}

/// `target ← (1 − rate)·target + rate·online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, rate: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        t.w.zip_mut_with(&o.w, |a, &b| *a = (1.0 - rate) * *a + rate * b);
        t.b.zip_mut_with(&o.b, |a, &b| *a = (1.0 - rate) * *a + rate * b);
    }
}
