use muse_autograd::{Gradients, ParamStore};

/// Adam with bias correction. Parameters without a gradient in a step are
/// left untouched, moments included.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, moments: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.trainable_ids() {
            let Some(grad) = grads.param(id) else { continue };
            let idx = id.index();
            if self.moments.len() <= idx {
                self.moments.resize(idx + 1, None);
            }
            let (m, v) = self.moments[idx].get_or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            let w = store.get_mut(id).data_mut();
            for (((w, g), m), v) in w.iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use muse_autograd::{Graph, Tensor};

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.add_weight("w", Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap()).unwrap();
        let mut g = Graph::new(true);
        let w = g.param(&store, id);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        let mut adam = Adam::new(1e-3, 0.9, 0.999, 1e-8);
        adam.step(&mut store, &grads);
        let w = store.get(id).data();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }
}
