use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

/// Dense affine layer, weights stored row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![T::zero(); outputs],
        }
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc = acc + *w * *xi;
            }
            out.push(acc);
        }
    }
}

/// Multi-layer perceptron: rectifier between hidden layers, configurable
/// output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
    pub output_activation: Activation,
}

/// Per-parameter partial derivatives, shaped like the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(p: &Mlp<T>) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: T) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|g| *g = *g * k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, g| m.max(g.abs()))
    }
}

impl<T: Scalar> Mlp<T> {
    /// Builds a network with layer widths `[input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output_activation: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(domain(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect();
        Ok(Self { layers, output_activation })
    }

    pub fn from_layers(layers: Vec<Layer<T>>, output_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(domain("network needs at least one layer"));
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(domain("layer storage does not match its shape"));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Dimension {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers, output_activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer widths `[input, hidden..., output]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp<T>) -> bool {
        self.widths() == other.widths()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            let act = self.activation_of(i);
            next.iter_mut().for_each(|z| *z = act.apply(*z));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Single-output convenience.
    pub fn forward_scalar(&self, input: &[T]) -> Result<T> {
        let out = self.forward(input)?;
        if out.len() != 1 {
            return Err(Error::Dimension { expected: 1, got: out.len() });
        }
        Ok(out[0])
    }

    /// Reverse-mode derivatives; returns parameter gradients and the
    /// gradient with respect to the input.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        let mut grads = Gradients::zeros_like(self);
        let dx = self.backward_accumulate(input, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Mlp::backward`] but adds into an existing gradient buffer.
    pub fn backward_accumulate(&self, input: &[T], upstream: &[T], grads: &mut Gradients<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(domain("gradient buffer shaped for a different network"));
        }

        // Forward pass retaining pre-activations and activations.
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&acts[i], &mut z);
            let act = self.activation_of(i);
            let y = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            acts.push(y);
        }

        let mut delta: Vec<T> = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.activation_of(i);
            for (o, d) in delta.iter_mut().enumerate() {
                *d = *d * act.derivative(pre[i][o], acts[i + 1][o]);
            }
            let (gw, gb) = &mut grads.layers[i];
            let x = &acts[i];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                gb[o] = gb[o] + d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g = *g + d * *xi;
                }
            }
            let mut prev = vec![T::zero(); layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p = *p + d * *w;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Mutable access to every parameter in a fixed order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

/// Elementwise `target <- tau * online + (1 - tau) * target`.
pub fn soft_update<T: Scalar>(target: &mut Mlp<T>, online: &Mlp<T>, tau: T) -> Result<()> {
    if !target.same_shape(online) {
        return Err(domain("soft update between networks of different shapes"));
    }
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(domain(format!("soft update rate {tau} outside [0, 1]")));
    }
    let keep = T::one() - tau;
    for (t, o) in target.params_mut().zip(online.params()) {
        *t = tau * *o + keep * *t;
    }
    Ok(())
}
