/// Adaptive-moment state for one flat parameter block.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// In-place update of `params` at step `t` (1-based).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: usize) {
        let b1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let b2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1;
            let v_hat = self.v[i] / b2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    /// Keeps moments of surviving entries; new entries (`None`) start at zero.
    /// `width` is the number of scalars per item.
    pub fn remap(&mut self, origin: &[Option<usize>], width: usize) {
        let mut m = vec![0.0; origin.len() * width];
        let mut v = vec![0.0; origin.len() * width];
        for (k, o) in origin.iter().enumerate() {
            if let Some(j) = o {
                m[k * width..(k + 1) * width].copy_from_slice(&self.m[j * width..(j + 1) * width]);
                v[k * width..(k + 1) * width].copy_from_slice(&self.v[j * width..(j + 1) * width]);
            }
        }
        self.m = m;
        self.v = v;
    }
}
