//! Shared-trunk feed-forward multitask network with manual backpropagation.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{TaskLosses, LOG_CLAMP};
use super::weights::TaskWeights;
use crate::error::{Error, Result};

pub const TRUNK_WIDTHS: [usize; 4] = [256, 128, 64, 32];
/// Classes per head: CT diagnosis, NAT diagnosis, severity.
pub const HEAD_CLASSES: [usize; 3] = [2, 2, 3];

/// Fully connected layer, `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }

    /// He-normal weights (`sd = sqrt(2 / fan_in)`), zero bias.
    pub fn he<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive sd");
        Self {
            w: Array2::from_shape_simple_fn((n_in, n_out), || normal.sample(rng)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// How per-task losses are combined into the training objective.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// Constant task weights (random-weighted or mean loss).
    Fixed(&'a TaskWeights),
    /// Learned log-variances stored in the network.
    Uncertainty,
}

/// Network parameters. Gradients are returned in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlNet {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
    /// Per-task log-variances, used only by the uncertainty objective.
    pub log_vars: Array1<f64>,
}

/// Forward-pass activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Trunk outputs after the rectifier, one per layer.
    pub hidden: Vec<Array2<f64>>,
    /// Softmax outputs per task, shape `(batch, classes)`.
    pub probs: Vec<Array2<f64>>,
}

fn check_finite(a: &Array2<f64>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("activations of layer {layer}")))
    }
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

impl MtlNet {
    pub fn new<R: Rng + ?Sized>(input: usize, trunk: &[usize], heads: &[usize], rng: &mut R) -> Result<Self> {
        if input == 0 || trunk.is_empty() || heads.len() < 2 || trunk.iter().chain(heads).any(|&w| w == 0) {
            return Err(Error::invalid("network needs an input, a trunk and at least two non-empty heads"));
        }
        let mut layers = Vec::with_capacity(trunk.len());
        let mut width = input;
        for &w in trunk {
            layers.push(Dense::he(width, w, rng));
            width = w;
        }
        let head_layers = heads.iter().map(|&c| Dense::he(width, c, rng)).collect();
        Ok(Self {
            trunk: layers,
            heads: head_layers,
            log_vars: Array1::zeros(heads.len()),
        })
    }

    /// The default architecture: trunk 256-128-64-32, heads of 2, 2 and 3 classes.
    pub fn standard<R: Rng + ?Sized>(input: usize, rng: &mut R) -> Result<Self> {
        Self::new(input, &TRUNK_WIDTHS, &HEAD_CLASSES, rng)
    }

    pub fn input_width(&self) -> usize {
        self.trunk[0].n_in()
    }

    pub fn tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Forward> {
        if x.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "input width {} vs network input {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(self.trunk.len());
        for (i, layer) in self.trunk.iter().enumerate() {
            let input = hidden.last().map(|h| h.view()).unwrap_or(x.view());
            let mut z = layer.apply(&input);
            check_finite(&z, &format!("trunk.{i}"))?;
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z);
        }
        let top = hidden.last().expect("non-empty trunk").view();
        let mut probs = Vec::with_capacity(self.heads.len());
        for (j, head) in self.heads.iter().enumerate() {
            let mut logits = head.apply(&top);
            check_finite(&logits, &format!("head.{j}"))?;
            softmax_rows(&mut logits);
            probs.push(logits);
        }
        Ok(Forward { hidden, probs })
    }

    /// Per-task batch-mean cross-entropies of a forward pass.
    pub fn task_losses(fwd: &Forward, targets: &[Vec<usize>]) -> TaskLosses {
        let mut clamped = 0;
        let losses = fwd
            .probs
            .iter()
            .zip(targets)
            .map(|(p, t)| {
                let mut s = 0.0;
                for (row, &c) in p.rows().into_iter().zip(t) {
                    if row[c] < LOG_CLAMP {
                        clamped += 1;
                    }
                    s -= row[c].max(LOG_CLAMP).ln();
                }
                s / t.len() as f64
            })
            .collect();
        TaskLosses { losses, clamped }
    }

    fn check_targets(&self, x: &ArrayView2<f64>, targets: &[Vec<usize>]) -> Result<()> {
        if targets.len() != self.tasks() {
            return Err(Error::DimensionMismatch(format!(
                "{} target sets for {} tasks",
                targets.len(),
                self.tasks()
            )));
        }
        for (t, head) in targets.iter().zip(&self.heads) {
            if t.len() != x.nrows() || t.iter().any(|&c| c >= head.n_out()) {
                return Err(Error::invalid("targets do not match the batch or head classes"));
            }
        }
        Ok(())
    }

    /// Scalar objective for the given weighting.
    pub fn objective(&self, losses: &[f64], weighting: Weighting<'_>) -> Result<f64> {
        match weighting {
            Weighting::Fixed(w) => super::loss::weighted_loss(losses, w),
            Weighting::Uncertainty => super::loss::uncertainty_of(losses, self.log_vars.as_slice().unwrap()),
        }
    }

    /// Objective value without gradients.
    pub fn loss(&self, x: &ArrayView2<f64>, targets: &[Vec<usize>], weighting: Weighting<'_>) -> Result<f64> {
        self.check_targets(x, targets)?;
        let fwd = self.forward(x)?;
        let losses = Self::task_losses(&fwd, targets);
        self.objective(&losses.losses, weighting)
    }

    /// Objective value, per-task losses and the exact gradient of the
    /// objective. Task weights are constants; only the uncertainty objective
    /// differentiates with respect to `log_vars`.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        targets: &[Vec<usize>],
        weighting: Weighting<'_>,
    ) -> Result<(f64, TaskLosses, MtlNet)> {
        self.check_targets(x, targets)?;
        let fwd = self.forward(x)?;
        let losses = Self::task_losses(&fwd, targets);
        let value = self.objective(&losses.losses, weighting)?;
        let batch = x.nrows() as f64;
        let coeffs: Vec<f64> = match weighting {
            Weighting::Fixed(w) => w.as_slice().to_vec(),
            Weighting::Uncertainty => self.log_vars.iter().map(|s| (-s).exp()).collect(),
        };

        let mut grads = self.zeros_like();
        if let Weighting::Uncertainty = weighting {
            for (g, (&c, &l)) in grads.log_vars.iter_mut().zip(coeffs.iter().zip(&losses.losses)) {
                *g = 1.0 - c * l;
            }
        }

        let top = fwd.hidden.last().expect("non-empty trunk");
        let mut d_top: Array2<f64> = Array2::zeros(top.raw_dim());
        for (j, head) in self.heads.iter().enumerate() {
            // d CE / d logits = softmax - onehot
            let mut d_logits = fwd.probs[j].clone();
            for (mut row, &c) in d_logits.rows_mut().into_iter().zip(&targets[j]) {
                row[c] -= 1.0;
            }
            d_logits *= coeffs[j] / batch;
            grads.heads[j].w = top.t().dot(&d_logits);
            grads.heads[j].b = d_logits.sum_axis(Axis(0));
            d_top = d_top + d_logits.dot(&head.w.t());
        }

        let mut delta = d_top;
        for i in (0..self.trunk.len()).rev() {
            // rectifier derivative
            delta.zip_mut_with(&fwd.hidden[i], |d, &h| {
                if h <= 0.0 {
                    *d = 0.0;
                }
            });
            let input = if i == 0 { x.view() } else { fwd.hidden[i - 1].view() };
            grads.trunk[i].w = input.t().dot(&delta);
            grads.trunk[i].b = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.trunk[i].w.t());
            }
        }
        Ok((value, losses, grads))
    }

    pub fn zeros_like(&self) -> MtlNet {
        MtlNet {
            trunk: self.trunk.iter().map(|l| Dense::zeros(l.n_in(), l.n_out())).collect(),
            heads: self.heads.iter().map(|l| Dense::zeros(l.n_in(), l.n_out())).collect(),
            log_vars: Array1::zeros(self.log_vars.len()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.trunk
            .iter()
            .chain(&self.heads)
            .map(|l| l.w.len() + l.b.len())
            .sum::<usize>()
            + self.log_vars.len()
    }

    /// Parameters in a fixed order: trunk layers (weights row-major, then
    /// bias), heads likewise, then log-variances.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.trunk.iter().chain(&self.heads) {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out.extend(self.log_vars.iter());
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        for l in self.trunk.iter_mut().chain(self.heads.iter_mut()) {
            l.w.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        self.log_vars.iter_mut().for_each(|v| *v = it.next().unwrap());
        Ok(())
    }

    pub fn shape_manifest(&self) -> ShapeManifest {
        let layer = |prefix: &str, i: usize, l: &Dense| LayerShape {
            name: format!("{prefix}.{i}"),
            inputs: l.n_in(),
            outputs: l.n_out(),
        };
        ShapeManifest {
            dtype: "f32-le".into(),
            trunk: self.trunk.iter().enumerate().map(|(i, l)| layer("trunk", i, l)).collect(),
            heads: self.heads.iter().enumerate().map(|(i, l)| layer("head", i, l)).collect(),
            log_vars: self.log_vars.len(),
            total: self.num_params(),
        }
    }

    /// Writes the flat parameters as little-endian f32 to `path` and the
    /// shape manifest next to it (`.json`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.num_params() * 4);
        for v in self.flatten() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let manifest = serde_json::to_string_pretty(&self.shape_manifest()).expect("manifest serializes");
        let mpath = path.with_extension("json");
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mpath = path.with_extension("json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: ShapeManifest = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
            path: mpath.clone(),
            reason: e.to_string(),
        })?;
        let mut net = MtlNet {
            trunk: m.trunk.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            heads: m.heads.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            log_vars: Array1::zeros(m.log_vars),
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != net.num_params() * 4 {
            return Err(Error::PayloadSize {
                path: path.into(),
                expected: net.num_params() * 4,
                found: bytes.len(),
            });
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        net.load_flat(&flat)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeManifest {
    pub dtype: String,
    pub trunk: Vec<LayerShape>,
    pub heads: Vec<LayerShape>,
    pub log_vars: usize,
    pub total: usize,
}
