use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{interpolate, FlowBatch, VelocityField};
use crate::error::{check_dim, Error, Result};
use crate::stream::SeededStream;

pub const ACTIVATION: &str = "tanh";

/// Pairs per gradient chunk; chunk partials are summed in index order so the
/// result does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Fully connected tanh network mapping `[t, condition, x]` to a velocity.
///
/// Parameters are stored flat, layer by layer, each layer as a row-major
/// weight matrix followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpField {
    dim_x: usize,
    dim_cond: usize,
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub dim_x: usize,
    pub dim_cond: usize,
    pub param_count: usize,
    pub config_hash: String,
}

struct Cache {
    /// Post-activation output of every layer, input included.
    activations: Vec<Vec<f64>>,
}

impl MlpField {
    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn new(dim_x: usize, dim_cond: usize, hidden: &[usize], stream: &SeededStream) -> Result<Self> {
        if dim_x == 0 {
            return Err(Error::InvalidArgument("velocity field needs dim_x >= 1".into()));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument("hidden layer widths must be positive".into()));
        }
        let mut layer_sizes = vec![1 + dim_cond + dim_x];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(dim_x);
        let mut rng = stream.rng();
        let mut params = Vec::with_capacity(param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| scale * rng.standard_normal()));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self {
            dim_x,
            dim_cond,
            layer_sizes,
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        check_dim("parameter vector", self.params.len(), params.len())?;
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn input(&self, t: f64, condition: &[f64], x: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.layer_sizes[0]);
        input.push(t);
        input.extend_from_slice(condition);
        input.extend_from_slice(x);
        input
    }

    fn forward(&self, input: Vec<f64>) -> Cache {
        let n_layers = self.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input);
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let prev = &activations[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    let z = bias[o] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            activations.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        Cache { activations }
    }

    /// Accumulates `∂/∂θ` of `scale·‖out − target‖²` into `grad`; returns the
    /// unscaled squared error.
    fn backward_into(&self, cache: &Cache, target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let n_layers = self.layer_sizes.len() - 1;
        let out = &cache.activations[n_layers];
        let mut delta: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
        let sq: f64 = delta.iter().map(|d| d * d).sum();
        delta.iter_mut().for_each(|d| *d *= 2.0 * scale);
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let prev = &cache.activations[l];
            for o in 0..fan_out {
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                row.iter_mut().zip(prev).for_each(|(g, a)| *g += delta[o] * a);
                grad[off + fan_in * fan_out + o] += delta[o];
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                next.iter_mut().zip(row).for_each(|(n, w)| *n += delta[o] * w);
            }
            // prev = tanh(z), so dtanh = 1 − prev².
            next.iter_mut().zip(prev).for_each(|(n, a)| *n *= 1.0 - a * a);
            delta = next;
        }
        sq
    }

    fn check_batch(&self, batch: &FlowBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("flow batch"));
        }
        check_dim("field x dimension", self.dim_x, batch.dim_x())?;
        check_dim("field condition dimension", self.dim_cond, batch.dim_cond())
    }

    /// Flow-matching loss and its exact gradient with respect to the flat
    /// parameter vector.
    pub fn loss_and_grad(&self, batch: &FlowBatch) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let scale = 1.0 / batch.len() as f64;
        let idx: Vec<usize> = (0..batch.len()).collect();
        let partials: Vec<(f64, Vec<f64>)> = idx
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for &i in chunk {
                    let (xt, target) = interpolate(&batch.x0[i], &batch.x1[i], batch.t[i])?;
                    let cache = self.forward(self.input(batch.t[i], &batch.condition[i], &xt));
                    loss += self.backward_into(&cache, &target, scale, &mut grad);
                }
                Ok((loss, grad))
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((loss * scale, grad))
    }

    /// One Adam step on `batch`. Returns the loss before the update; a
    /// non-finite loss or gradient leaves the parameters untouched.
    pub fn train_step(&mut self, adam: &mut Adam, batch: &FlowBatch, lr: f64) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("flow-matching loss".into()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i}")));
        }
        adam.step(&mut self.params, &grad, lr)?;
        Ok(loss)
    }

    fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("bin"), stem.with_extension("json"))
    }

    /// Writes `<stem>.bin` (little-endian f64 parameters) and `<stem>.json`.
    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        let (bin, json) = Self::paths(stem);
        let bytes: Vec<u8> = self.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let header = CheckpointHeader {
            layer_sizes: self.layer_sizes.clone(),
            activation: ACTIVATION.to_string(),
            dim_x: self.dim_x,
            dim_cond: self.dim_cond,
            param_count: self.params.len(),
            config_hash: config_hash.to_string(),
        };
        let text = serde_json::to_string_pretty(&header)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn load(stem: &Path) -> Result<(Self, CheckpointHeader)> {
        let (bin, json) = Self::paths(stem);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text)?;
        if header.activation != ACTIVATION {
            return Err(Error::InvalidArgument(format!(
                "unsupported activation {:?}",
                header.activation
            )));
        }
        let sizes = &header.layer_sizes;
        if sizes.len() < 2
            || sizes[0] != 1 + header.dim_cond + header.dim_x
            || sizes[sizes.len() - 1] != header.dim_x
        {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {sizes:?} inconsistent with dim_x {} and dim_cond {}",
                header.dim_x, header.dim_cond
            )));
        }
        check_dim("checkpoint parameter count", param_count(sizes), header.param_count)?;
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        check_dim("checkpoint byte length", header.param_count * 8, bytes.len())?;
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let field = Self {
            dim_x: header.dim_x,
            dim_cond: header.dim_cond,
            layer_sizes: header.layer_sizes.clone(),
            params,
        };
        Ok((field, header))
    }
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl VelocityField for MlpField {
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_cond(&self) -> usize {
        self.dim_cond
    }

    fn velocity(&self, t: f64, condition: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.layer_sizes.len() - 1;
        self.forward(self.input(t, condition, x)).activations.swap_remove(n)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_dim("adam parameters", self.m.len(), params.len())?;
        check_dim("adam gradient", self.m.len(), grad.len())?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
