use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::neuralnet::mlp::{Gradients, Mlp};
use crate::scalar::Scalar;

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first: Gradients<T>,
    pub second: Gradients<T>,
    pub step: u64,
    pub hyper: AdamHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Mlp<T>) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &Mlp<T>, hyper: AdamHyper) -> Self {
        Self {
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
            step: 0,
            hyper,
        }
    }

    /// One bias-corrected Adam update. Non-finite gradients leave both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Gradients<T>, lr: T) -> Result<()> {
        if grads.layers.len() != params.layers.len() || self.first.layers.len() != params.layers.len() {
            return Err(domain("optimizer, gradient and parameter shapes differ"));
        }
        for ((g, m), l) in grads.layers.iter().zip(&self.first.layers).zip(&params.layers) {
            if g.0.len() != l.weights.len() || g.1.len() != l.bias.len() || m.0.len() != l.weights.len() {
                return Err(domain("optimizer, gradient and parameter shapes differ"));
            }
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient passed to Adam".into()));
        }

        self.step += 1;
        let b1 = T::lit(self.hyper.beta1);
        let b2 = T::lit(self.hyper.beta2);
        let eps = T::lit(self.hyper.eps);
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);

        for (li, layer) in params.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (mw, mb) = &mut self.first.layers[li];
            let (vw, vb) = &mut self.second.layers[li];
            let targets = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = gw.iter().chain(gb.iter());
            let ms = mw.iter_mut().chain(mb.iter_mut());
            let vs = vw.iter_mut().chain(vb.iter_mut());
            for (((p, g), m), v) in targets.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (T::one() - b1) * *g;
                *v = b2 * *v + (T::one() - b2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
