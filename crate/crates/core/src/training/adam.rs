use crate::config::ModelConfig;
use crate::numcore::{ParamStore, Real};

/// ADAM with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn from_config(config: &ModelConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    /// Applies one update to every parameter using its accumulated gradient.
    pub fn step<T: Real>(&self, store: &mut ParamStore<T>) {
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_m_b1, one_m_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        for p in store.iter_mut() {
            p.step += 1;
            let t = p.step as i32;
            let c1 = T::of(1.0 - self.beta1.powi(t));
            let c2 = T::of(1.0 - self.beta2.powi(t));
            let g = p.gradient.data();
            let m = p.moment1.data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + one_m_b1 * gi;
            }
            let s = p.moment2.data_mut();
            for (si, &gi) in s.iter_mut().zip(g) {
                *si = b2 * *si + one_m_b2 * gi * gi;
            }
            let (m, s) = (p.moment1.data(), p.moment2.data());
            for ((w, &mi), &si) in p.value.data_mut().iter_mut().zip(m).zip(s) {
                let m_hat = mi / c1;
                let s_hat = si / c2;
                *w -= lr * m_hat / (s_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .map(|p| p.gradient.sum_squares().f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for p in store.iter_mut() {
            p.gradient.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
