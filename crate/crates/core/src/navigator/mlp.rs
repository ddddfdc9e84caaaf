//! Fully connected ReLU network with a single logit output, trained full-batch
//! with Adam on binary cross-entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Weights stored input-major: `weights[i * outputs + j]` connects input `i` to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Dense<S: Scalar> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<S>,
    pub biases: Vec<S>,
}

impl<S: Scalar> Dense<S> {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || S::lit(rng.random_range(-bound..bound));
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let biases = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            weights,
            biases,
        }
    }

    fn forward_into(&self, x: &[S], out: &mut [S]) {
        out.copy_from_slice(&self.biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi == S::zero() {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o = *o + xi * w;
            }
        }
    }

    fn is_consistent(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.biases.len() == self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Mlp<S: Scalar> {
    pub layers: Vec<Dense<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// `input -> hidden[0] -> ... -> 1`, uniformly initialised in `±1/sqrt(fan_in)`.
    pub fn new(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &h in hidden.iter().chain(std::iter::once(&1)) {
            layers.push(Dense::init(fan_in, h, &mut rng));
            fan_in = h;
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub(crate) fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.iter().all(Dense::is_consistent)
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self.layers.last().is_some_and(|l| l.outputs == 1)
    }

    /// Pre-activations of every layer for one input row.
    fn forward_all(&self, x: &[S]) -> Vec<Vec<S>> {
        let mut acts: Vec<Vec<S>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec![S::zero(); layer.outputs];
            match k {
                0 => layer.forward_into(x, &mut z),
                _ => {
                    let h: Vec<S> = acts[k - 1].iter().map(|&v| relu(v)).collect();
                    layer.forward_into(&h, &mut z);
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn logit(&self, x: &[S]) -> S {
        self.forward_all(x).last().expect("at least one layer")[0]
    }
}

fn relu<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        v
    } else {
        S::zero()
    }
}

pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `max(z,0) - z*y + ln(1 + e^{-|z|})`
fn bce_with_logit<S: Scalar>(z: S, y: S) -> S {
    z.max(S::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<S> {
    pub loss: S,
    pub accuracy: S,
}

/// Full-batch Adam state for an [`Mlp`].
pub(crate) struct Trainer<S: Scalar> {
    adam: AdamConfig,
    m: Vec<(Vec<S>, Vec<S>)>,
    v: Vec<(Vec<S>, Vec<S>)>,
    step: i32,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(mlp: &Mlp<S>, adam: AdamConfig) -> Self {
        let zeros = || {
            mlp.layers
                .iter()
                .map(|l| (vec![S::zero(); l.weights.len()], vec![S::zero(); l.biases.len()]))
                .collect::<Vec<_>>()
        };
        Self {
            adam,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    /// One gradient step over the whole batch; returns loss and accuracy measured
    /// before the update.
    pub fn epoch(&mut self, mlp: &mut Mlp<S>, rows: &[(&[S], bool)]) -> EpochStats<S> {
        let n = S::from_usize(rows.len()).unwrap();
        let mut grads: Vec<(Vec<S>, Vec<S>)> = mlp
            .layers
            .iter()
            .map(|l| (vec![S::zero(); l.weights.len()], vec![S::zero(); l.biases.len()]))
            .collect();
        let mut loss = S::zero();
        let mut correct = 0usize;
        let depth = mlp.layers.len();

        for &(x, label) in rows {
            let y = if label { S::one() } else { S::zero() };
            let pre = mlp.forward_all(x);
            let z = pre[depth - 1][0];
            loss = loss + bce_with_logit(z, y);
            if (z > S::zero()) == label {
                correct += 1;
            }
            let mut delta = vec![(sigmoid(z) - y) / n];
            for k in (0..depth).rev() {
                let layer = &mlp.layers[k];
                let input: Vec<S> = if k == 0 {
                    x.to_vec()
                } else {
                    pre[k - 1].iter().map(|&v| relu(v)).collect()
                };
                let (gw, gb) = &mut grads[k];
                for (b, &d) in gb.iter_mut().zip(&delta) {
                    *b = *b + d;
                }
                for (i, &xi) in input.iter().enumerate() {
                    if xi == S::zero() {
                        continue;
                    }
                    let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                    for (g, &d) in row.iter_mut().zip(&delta) {
                        *g = *g + xi * d;
                    }
                }
                if k > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            if pre[k - 1][i] <= S::zero() {
                                return S::zero();
                            }
                            let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                            row.iter().zip(&delta).map(|(&w, &d)| w * d).sum()
                        })
                        .collect();
                }
            }
        }
        self.apply(mlp, &grads);
        EpochStats {
            loss: loss / n,
            accuracy: S::from_usize(correct).unwrap() / n,
        }
    }

    fn apply(&mut self, mlp: &mut Mlp<S>, grads: &[(Vec<S>, Vec<S>)]) {
        self.step += 1;
        let b1 = S::lit(self.adam.beta1);
        let b2 = S::lit(self.adam.beta2);
        let lr = S::lit(self.adam.learning_rate);
        let eps = S::lit(self.adam.epsilon);
        let c1 = S::one() - b1.powi(self.step);
        let c2 = S::one() - b2.powi(self.step);
        let update = |p: &mut [S], g: &[S], m: &mut [S], v: &mut [S]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (k, layer) in mlp.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            update(&mut layer.weights, gw, mw, vw);
            update(&mut layer.biases, gb, mb, vb);
        }
    }
}

/// Loss and accuracy of `mlp` on `rows` without updating it.
pub(crate) fn evaluate<S: Scalar>(mlp: &Mlp<S>, rows: &[(&[S], bool)]) -> EpochStats<S> {
    let n = S::from_usize(rows.len().max(1)).unwrap();
    let mut loss = S::zero();
    let mut correct = 0usize;
    for &(x, label) in rows {
        let z = mlp.logit(x);
        loss = loss + bce_with_logit(z, if label { S::one() } else { S::zero() });
        if (z > S::zero()) == label {
            correct += 1;
        }
    }
    EpochStats {
        loss: loss / n,
        accuracy: S::from_usize(correct).unwrap() / n,
    }
}
