//! Neural emission allocation model.
//!
//! A feedforward network maps loads to per-load (or per-zone) emission
//! factors. The input Jacobian `J = ∂λ̂/∂d` is propagated exactly alongside
//! the activations as forward tangents
//!
//! ```text
//! P¹ = W¹·diag(1/s),  Pℓ = Wℓ·Tℓ⁻¹,  Tℓ = Dℓ·Pℓ,  J = c·diag(σ′(aᴸ))·Pᴸ
//! ```
//!
//! where `Dℓ` is the ReLU gate (times the dropout mask while training).
//! Losses that involve `J` are differentiated by a reverse pass over both
//! the activations and the tangents, which yields exact second-order terms.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::Partition;

mod loss;

pub use loss::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("expected {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("load vector has zero norm")]
    ZeroLoad,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("zone {0} has no load")]
    EmptyZone(usize),
    #[error("nodal operation called on a model with {outputs} outputs and {inputs} inputs")]
    NotNodal { inputs: usize, outputs: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// `c·σ(a)`, bounded to `[0, c]`.
    #[default]
    ScaledSigmoid,
    /// Identity output, for tests.
    Linear,
}

/// Dense layer `a = W·z + b`, with an optional binary mask on `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_out: usize,
    pub n_in: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<u8>>,
}

impl Layer {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Layer {
            n_out,
            n_in,
            weights: vec![0.0; n_out * n_in],
            biases: vec![0.0; n_out],
            mask: None,
        }
    }

    pub fn allowed(&self, k: usize, m: usize) -> bool {
        self.mask.as_ref().map_or(true, |mk| mk[k * self.n_in + m] != 0)
    }

    pub fn trainable(&self) -> usize {
        let w = match &self.mask {
            Some(m) => m.iter().filter(|v| **v != 0).count(),
            None => self.weights.len(),
        };
        w + self.biases.len()
    }

    /// Zeroes every masked weight.
    pub fn apply_mask(&mut self) {
        if let Some(m) = &self.mask {
            for (w, &keep) in self.weights.iter_mut().zip(m) {
                if keep == 0 {
                    *w = 0.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub output_activation: OutputActivation,
    pub output_scale: f64,
    pub input_scale: Vec<f64>,
    /// Subtracted before scaling: the network sees `(d − offset) / scale`.
    #[serde(default)]
    pub input_offset: Vec<f64>,
    pub dropout_rate: f64,
}

impl NetworkModel {
    /// Network with PyTorch-style uniform initialization
    /// `U(−1/√fan_in, 1/√fan_in)`, where `fan_in` counts unmasked inputs.
    pub fn new<R: Rng>(
        layer_sizes: &[usize],
        input_scale: Vec<f64>,
        output_scale: f64,
        masks: Option<(Vec<u8>, Vec<u8>)>,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(NnError::Architecture(format!("bad layer sizes {layer_sizes:?}")));
        }
        if input_scale.len() != layer_sizes[0] || input_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(NnError::Architecture("input scale must be positive per input".into()));
        }
        if !(output_scale > 0.0) || !(0.0..1.0).contains(&dropout_rate) {
            return Err(NnError::Architecture("output scale or dropout out of range".into()));
        }
        let nl = layer_sizes.len() - 1;
        let mut layers: Vec<Layer> = (0..nl)
            .map(|l| Layer::zeros(layer_sizes[l + 1], layer_sizes[l]))
            .collect();
        if let Some((first, last)) = masks {
            if first.len() != layers[0].weights.len() || last.len() != layers[nl - 1].weights.len() {
                return Err(NnError::Architecture("mask shape mismatch".into()));
            }
            layers[0].mask = Some(first);
            layers[nl - 1].mask = Some(last);
        }
        for layer in &mut layers {
            for k in 0..layer.n_out {
                let fan_in = (0..layer.n_in).filter(|&m| layer.allowed(k, m)).count().max(1);
                let bound = 1.0 / (fan_in as f64).sqrt();
                for m in 0..layer.n_in {
                    layer.weights[k * layer.n_in + m] = rng.gen_range(-bound..bound);
                }
                layer.biases[k] = rng.gen_range(-bound..bound);
            }
            layer.apply_mask();
        }
        Ok(NetworkModel {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            output_activation: OutputActivation::ScaledSigmoid,
            output_scale,
            input_offset: vec![0.0; input_scale.len()],
            input_scale,
            dropout_rate,
        })
    }

    fn normalized(&self, d: &[f64], j: usize) -> f64 {
        (d[j] - self.input_offset.get(j).copied().unwrap_or(0.0)) / self.input_scale[j]
    }

    /// Sets the input normalization `(d − offset) / scale`.
    pub fn set_input_normalization(&mut self, offset: Vec<f64>, scale: Vec<f64>) -> Result<(), NnError> {
        let n = self.n_inputs();
        if offset.len() != n || scale.len() != n || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(NnError::Architecture("normalization needs one positive scale per input".into()));
        }
        self.input_offset = offset;
        self.input_scale = scale;
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn is_nodal(&self) -> bool {
        self.n_inputs() == self.n_outputs()
    }

    pub fn trainable_parameters(&self) -> usize {
        self.layers.iter().map(Layer::trainable).sum()
    }

    pub fn check_input(&self, d: &[f64]) -> Result<(), NnError> {
        if d.len() != self.n_inputs() {
            return Err(NnError::Dimension {
                expected: self.n_inputs(),
                got: d.len(),
            });
        }
        Ok(())
    }

    /// `λ̂(d)` in evaluation mode.
    pub fn forward(&self, d: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(d)?;
        let mut z: Vec<f64> = (0..d.len()).map(|j| self.normalized(d, j)).collect();
        let nl = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut a = layer.biases.clone();
            for k in 0..layer.n_out {
                let row = &layer.weights[k * layer.n_in..(k + 1) * layer.n_in];
                a[k] += row.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>();
            }
            if l + 1 < nl {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
                z = a;
            } else {
                return Ok(a.into_iter().map(|v| self.output(v).0).collect());
            }
        }
        unreachable!()
    }

    /// Output value and its first two derivatives with respect to `a`.
    fn output(&self, a: f64) -> (f64, f64, f64) {
        match self.output_activation {
            OutputActivation::Linear => (a, 1.0, 0.0),
            OutputActivation::ScaledSigmoid => {
                let s = sigmoid(a);
                let d1 = s * (1.0 - s);
                let c = self.output_scale;
                (c * s, c * d1, c * d1 * (1.0 - 2.0 * s))
            }
        }
    }

    /// Exact `∂λ̂/∂d` (outputs × inputs) in evaluation mode.
    pub fn input_jacobian(&self, d: &[f64]) -> Result<DMatrix<f64>, NnError> {
        self.check_input(d)?;
        let mut tape = Tape::new(self);
        self.run(d, None::<&mut rand_chacha::ChaCha8Rng>, &mut tape);
        let (n, dd) = (self.n_outputs(), self.n_inputs());
        Ok(DMatrix::from_fn(n, dd, |i, j| tape.jac[i * dd + j]))
    }

    /// Forward pass with tangents. Dropout is applied when `rng` is given.
    pub fn run<R: Rng>(&self, d: &[f64], mut rng: Option<&mut R>, tape: &mut Tape) {
        let dd = self.n_inputs();
        let nl = self.layers.len();
        let z0 = &mut tape.z[0];
        for j in 0..dd {
            z0[j] = self.normalized(d, j);
        }
        let t0 = &mut tape.t[0];
        t0.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..dd {
            t0[j * dd + j] = 1.0 / self.input_scale[j];
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (n_out, n_in) = (layer.n_out, layer.n_in);
            let (zin, zout) = split_pair(&mut tape.z, l);
            let (tin, tout) = split_pair(&mut tape.t, l);
            let a = &mut tape.a[l];
            let p = &mut tape.p[l];
            a.copy_from_slice(&layer.biases);
            p.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n_out {
                let row = &layer.weights[k * n_in..(k + 1) * n_in];
                let prow = &mut p[k * dd..(k + 1) * dd];
                let mut acc = 0.0;
                for m in 0..n_in {
                    let w = row[m];
                    if w != 0.0 {
                        acc += w * zin[m];
                        let trow = &tin[m * dd..(m + 1) * dd];
                        for j in 0..dd {
                            prow[j] += w * trow[j];
                        }
                    }
                }
                a[k] += acc;
            }
            if l + 1 < nl {
                let gate = &mut tape.gate[l];
                let keep = 1.0 - self.dropout_rate;
                // Dropout acts on hidden layers 2..L−1.
                let drop = l >= 1 && self.dropout_rate > 0.0;
                for k in 0..n_out {
                    let mut g = if a[k] > 0.0 { 1.0 } else { 0.0 };
                    if drop {
                        if let Some(r) = rng.as_deref_mut() {
                            g = if r.gen::<f64>() < keep { g / keep } else { 0.0 };
                        }
                    }
                    gate[k] = g;
                    zout[k] = g * a[k];
                    let src = &p[k * dd..(k + 1) * dd];
                    let dst = &mut tout[k * dd..(k + 1) * dd];
                    for j in 0..dd {
                        dst[j] = g * src[j];
                    }
                }
            } else {
                for k in 0..n_out {
                    let (y, d1, _) = self.output(a[k]);
                    tape.out[k] = y;
                    for j in 0..dd {
                        tape.jac[k * dd + j] = d1 * p[k * dd + j];
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients given `∂loss/∂λ̂` (`g_out`) and
    /// `∂loss/∂J` (`g_jac`, row-major outputs × inputs) for the last `run`.
    pub fn backward(&self, tape: &Tape, g_out: &[f64], g_jac: &[f64], grads: &mut Gradients) {
        let dd = self.n_inputs();
        let nl = self.layers.len();
        let n_last = self.n_outputs();
        let mut ga = vec![0.0; n_last];
        let mut gp = vec![0.0; n_last * dd];
        for k in 0..n_last {
            let (_, d1, d2) = self.output(tape.a[nl - 1][k]);
            let prow = &tape.p[nl - 1][k * dd..(k + 1) * dd];
            let grow = &g_jac[k * dd..(k + 1) * dd];
            let mut s = 0.0;
            for j in 0..dd {
                s += grow[j] * prow[j];
                gp[k * dd + j] = d1 * grow[j];
            }
            ga[k] = d1 * g_out[k] + d2 * s;
        }
        for l in (0..nl).rev() {
            let layer = &self.layers[l];
            let (n_out, n_in) = (layer.n_out, layer.n_in);
            let zin = &tape.z[l];
            let tin = &tape.t[l];
            let gw = &mut grads.w[l];
            let gb = &mut grads.b[l];
            for k in 0..n_out {
                gb[k] += ga[k];
                let gprow = &gp[k * dd..(k + 1) * dd];
                let gak = ga[k];
                for m in 0..n_in {
                    if !layer.allowed(k, m) {
                        continue;
                    }
                    let trow = &tin[m * dd..(m + 1) * dd];
                    let mut v = gak * zin[m];
                    for j in 0..dd {
                        v += gprow[j] * trow[j];
                    }
                    gw[k * n_in + m] += v;
                }
            }
            if l == 0 {
                break;
            }
            let gate = &tape.gate[l - 1];
            let mut ga_prev = vec![0.0; n_in];
            let mut gp_prev = vec![0.0; n_in * dd];
            for k in 0..n_out {
                let row = &layer.weights[k * n_in..(k + 1) * n_in];
                let gprow = &gp[k * dd..(k + 1) * dd];
                for m in 0..n_in {
                    let w = row[m];
                    if w == 0.0 || gate[m] == 0.0 {
                        continue;
                    }
                    ga_prev[m] += w * ga[k];
                    let dst = &mut gp_prev[m * dd..(m + 1) * dd];
                    for j in 0..dd {
                        dst[j] += w * gprow[j];
                    }
                }
            }
            for m in 0..n_in {
                let g = gate[m];
                ga_prev[m] *= g;
                for j in 0..dd {
                    gp_prev[m * dd + j] *= g;
                }
            }
            ga = ga_prev;
            gp = gp_prev;
        }
    }

    /// Flattened parameters in layer order (weights then biases).
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    pub fn set_parameters(&mut self, v: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&v[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&v[at..at + nb]);
            at += nb;
            l.apply_mask();
        }
    }

    /// Text checkpoint with an exact round-trip of every parameter.
    pub fn to_checkpoint(&self, metadata: &[(String, String)]) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            format: &'a str,
            version: u32,
            metadata: std::collections::BTreeMap<String, String>,
            model: &'a NetworkModel,
        }
        toml::to_string(&Out {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            metadata: metadata.iter().cloned().collect(),
            model: self,
        })
        .expect("model serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<(Self, Vec<(String, String)>), NnError> {
        #[derive(Deserialize)]
        struct In {
            format: String,
            version: u32,
            #[serde(default)]
            metadata: std::collections::BTreeMap<String, String>,
            model: NetworkModel,
        }
        let parsed: In = toml::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if parsed.format != CHECKPOINT_FORMAT || parsed.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported format {} v{}",
                parsed.format, parsed.version
            )));
        }
        let m = parsed.model;
        let sizes_ok = m.layers.len() + 1 == m.layer_sizes.len()
            && m.layers.iter().enumerate().all(|(l, layer)| {
                layer.n_in == m.layer_sizes[l]
                    && layer.n_out == m.layer_sizes[l + 1]
                    && layer.weights.len() == layer.n_in * layer.n_out
                    && layer.biases.len() == layer.n_out
                    && layer.mask.as_ref().map_or(true, |mk| mk.len() == layer.weights.len())
            });
        let offset_ok = m.input_offset.is_empty() || m.input_offset.len() == m.layer_sizes[0];
        if !sizes_ok || !offset_ok || m.input_scale.len() != m.layer_sizes[0] {
            return Err(NnError::Checkpoint("inconsistent layer dimensions".into()));
        }
        Ok((m, parsed.metadata.into_iter().collect()))
    }
}

const CHECKPOINT_FORMAT: &str = "carbonlace-model";
const CHECKPOINT_VERSION: u32 = 1;

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Mutable references to entries `l` and `l + 1`.
fn split_pair(v: &mut [Vec<f64>], l: usize) -> (&Vec<f64>, &mut Vec<f64>) {
    let (a, b) = v.split_at_mut(l + 1);
    (&a[l], &mut b[0])
}

/// Activations and tangents of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `z[l]` is the input of layer `l`.
    pub z: Vec<Vec<f64>>,
    /// `t[l]` is the tangent of `z[l]` (`n × D`).
    pub t: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub gate: Vec<Vec<f64>>,
    pub out: Vec<f64>,
    pub jac: Vec<f64>,
}

impl Tape {
    pub fn new(model: &NetworkModel) -> Self {
        let dd = model.n_inputs();
        let s = &model.layer_sizes;
        let nl = s.len() - 1;
        Tape {
            z: s.iter().map(|&n| vec![0.0; n]).collect(),
            t: s.iter().map(|&n| vec![0.0; n * dd]).collect(),
            a: s[1..].iter().map(|&n| vec![0.0; n]).collect(),
            p: s[1..].iter().map(|&n| vec![0.0; n * dd]).collect(),
            gate: s[1..nl].iter().map(|&n| vec![0.0; n]).collect(),
            out: vec![0.0; s[nl]],
            jac: vec![0.0; s[nl] * dd],
        }
    }
}

/// Parameter gradients shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(model: &NetworkModel) -> Self {
        Gradients {
            w: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            b: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|v| v.iter_mut().for_each(|x| *x *= s));
    }

    /// Same layout as [`NetworkModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            v.extend_from_slice(w);
            v.extend_from_slice(b);
        }
        v
    }
}

/// Allocates `width` neurons to groups in proportion to group size; the
/// remainder goes to the largest groups (lower index first on ties).
pub fn allocate_neurons(sizes: &[usize], width: usize) -> Result<Vec<usize>, NnError> {
    let total: usize = sizes.iter().sum();
    if width < sizes.len() {
        return Err(NnError::Architecture(format!(
            "width {width} is smaller than the group count {}",
            sizes.len()
        )));
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| width * s / total).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut left = width - alloc.iter().sum::<usize>();
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[g] += 1;
        left -= 1;
    }
    // Every group needs at least one neuron.
    for g in 0..alloc.len() {
        if alloc[g] == 0 {
            let donor = (0..alloc.len()).max_by_key(|&h| (alloc[h], std::cmp::Reverse(h))).unwrap();
            alloc[donor] -= 1;
            alloc[g] = 1;
        }
    }
    Ok(alloc)
}

/// Masks for the first and last layers that only connect loads (inputs) and
/// outputs to the hidden neurons of their own group.
///
/// For a nodal model the outputs are loads and follow `partition`; for a
/// zonal model (`outputs == partition.count`) output `k` is group `k`.
pub fn build_masks(partition: &Partition, layer_sizes: &[usize]) -> Result<(Vec<u8>, Vec<u8>), NnError> {
    let nl = layer_sizes.len() - 1;
    let d = layer_sizes[0];
    if partition.len() != d {
        return Err(NnError::Dimension {
            expected: d,
            got: partition.len(),
        });
    }
    if nl < 2 {
        return Err(NnError::Architecture("masking needs at least one hidden layer".into()));
    }
    let sizes = partition.sizes();
    let owner = |width: usize| -> Result<Vec<usize>, NnError> {
        let alloc = allocate_neurons(&sizes, width)?;
        Ok(alloc.iter().enumerate().flat_map(|(g, &n)| std::iter::repeat(g).take(n)).collect())
    };
    let h1 = layer_sizes[1];
    let first_owner = owner(h1)?;
    let mut first = vec![0u8; h1 * d];
    for k in 0..h1 {
        for j in 0..d {
            first[k * d + j] = (first_owner[k] == partition.group_of(j)) as u8;
        }
    }
    let hl = layer_sizes[nl - 1];
    let n_out = layer_sizes[nl];
    let out_group: Vec<usize> = if n_out == d {
        (0..d).map(|i| partition.group_of(i)).collect()
    } else if n_out == partition.count {
        (0..n_out).collect()
    } else {
        return Err(NnError::Architecture(format!(
            "{n_out} outputs match neither {d} loads nor {} groups",
            partition.count
        )));
    };
    let last_owner = owner(hl)?;
    let mut last = vec![0u8; n_out * hl];
    for i in 0..n_out {
        for m in 0..hl {
            last[i * hl + m] = (last_owner[m] == out_group[i]) as u8;
        }
    }
    Ok((first, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(sizes: &[usize], seed: u64) -> NetworkModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (0..sizes[0]).map(|k| 1.0 + 0.5 * k as f64).collect();
        NetworkModel::new(sizes, scale, 1.3, None, 0.0, &mut rng).unwrap()
    }

    #[test]
    fn zero_parameters_give_half_scale() {
        let mut m = model(&[3, 4, 3], 1);
        let n = m.parameters().len();
        m.set_parameters(&vec![0.0; n]);
        assert_eq!(m.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.65; 3]);
    }

    #[test]
    fn linear_single_layer_jacobian() {
        let mut m = model(&[3, 2], 4);
        m.output_activation = OutputActivation::Linear;
        let j = m.input_jacobian(&[0.3, 0.1, 0.2]).unwrap();
        for k in 0..2 {
            for i in 0..3 {
                assert!((j[(k, i)] - m.layers[0].weights[k * 3 + i] / m.input_scale[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let m = model(&[4, 8, 8, 4], 7);
        let d = [1.1, 0.7, 2.3, 1.9];
        let j = m.input_jacobian(&d).unwrap();
        let h = 1e-4;
        for i in 0..4 {
            let mut dp = d;
            dp[i] += h;
            let mut dm = d;
            dm[i] -= h;
            let (fp, fm) = (m.forward(&dp).unwrap(), m.forward(&dm).unwrap());
            for k in 0..4 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert!((fd - j[(k, i)]).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", j[(k, i)]);
            }
        }
    }

    #[test]
    fn allocation_follows_sizes() {
        assert_eq!(allocate_neurons(&[5, 5, 5, 5], 40).unwrap(), vec![10; 4]);
        assert_eq!(allocate_neurons(&[3, 2, 2], 10).unwrap(), vec![5, 3, 2]);
        assert_eq!(allocate_neurons(&[1], 7).unwrap(), vec![7]);
    }

    #[test]
    fn single_group_masks_are_dense() {
        let p = Partition::single(4);
        let (a, b) = build_masks(&p, &[4, 6, 6, 4]).unwrap();
        assert!(a.iter().chain(&b).all(|v| *v == 1));
    }

    #[test]
    fn mask_density_matches_count() {
        let p = Partition::new(3, vec![0, 0, 1, 1, 1, 2]).unwrap();
        let (first, _) = build_masks(&p, &[6, 12, 12, 6]).unwrap();
        let alloc = allocate_neurons(&p.sizes(), 12).unwrap();
        let expected: usize = p.sizes().iter().zip(&alloc).map(|(s, n)| s * n).sum();
        assert_eq!(first.iter().filter(|v| **v == 1).count(), expected);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = model(&[3, 5, 3], 9);
        let text = m.to_checkpoint(&[("seed".into(), "9".into())]);
        let (back, meta) = NetworkModel::from_checkpoint(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta, vec![("seed".to_string(), "9".to_string())]);
    }
}
