use super::{NumericsError, Tensor2};

/// Adam with bias correction (β1 = 0.9, β2 = 0.999, ε = 1e-8 by default).
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Accumulators are created lazily on the
    /// first call and must keep the same shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut Tensor2], grads: &[Tensor2]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::Dimension(format!(
                "adam: {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NumericsError::shape("adam", p.shape(), g.shape()));
            }
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor2::zeros(g.rows(), g.cols())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(m, g)| m.shape() != g.shape())
        {
            return Err(NumericsError::Dimension("adam: parameter set changed between steps".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            let (pd, gd) = (p.data_mut(), g.data());
            for (((pi, gi), mi), vi) in pd.iter_mut().zip(gd).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.check_finite("adam")?;
        }
        Ok(())
    }
}
