//! Dirichlet-sampled task weights.
//!
//! With the concentration fixed to all ones the Dirichlet is uniform on the
//! simplex, so a draw is just `K` i.i.d. unit-rate exponentials normalized by
//! their sum. Averaging `n` such draws concentrates the weights around
//! `1/K`; a large `n` degenerates into the plain mean loss.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomWeightConfig {
    pub tasks: usize,
    /// Number of Dirichlet draws averaged per iteration.
    pub draws: usize,
}

impl RandomWeightConfig {
    pub fn new(tasks: usize, draws: usize) -> Result<Self> {
        if tasks < 2 {
            return Err(Error::invalid(format!("need at least 2 tasks, got {tasks}")));
        }
        if draws < 1 {
            return Err(Error::invalid("need at least one draw"));
        }
        Ok(Self { tasks, draws })
    }

    /// The all-ones concentration vector.
    pub fn alpha(&self) -> Vec<f64> {
        vec![1.0; self.tasks]
    }
}

/// Non-negative task weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights(Vec<f64>);

impl TaskWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("task weights must be non-negative, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("task weights must sum to 1, got {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn dirichlet_ones<R: Rng + ?Sized>(k: usize, rng: &mut R, out: &mut [f64]) {
    let mut sum = 0.0;
    for o in out.iter_mut().take(k) {
        let e: f64 = Exp1.sample(rng);
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Averages `cfg.draws` Dirichlet(1, ..., 1) draws componentwise.
pub fn sample_task_weights<R: Rng + ?Sized>(cfg: &RandomWeightConfig, rng: &mut R) -> TaskWeights {
    let k = cfg.tasks;
    let mut acc = vec![0.0; k];
    let mut draw = vec![0.0; k];
    for _ in 0..cfg.draws {
        dirichlet_ones(k, rng, &mut draw);
        for (a, d) in acc.iter_mut().zip(&draw) {
            *a += d;
        }
    }
    let total: f64 = acc.iter().sum();
    for a in acc.iter_mut() {
        *a /= total;
    }
    TaskWeights(acc)
}

/// Dirichlet density `prod p_i^(a_i - 1) / B(a)` with
/// `B(a) = prod Gamma(a_i) / Gamma(sum a_i)`.
pub fn dirichlet_pdf(p: &[f64], alpha: &[f64]) -> Result<f64> {
    if p.len() != alpha.len() || p.len() < 2 {
        return Err(Error::invalid(format!(
            "point has {} components, concentration has {}",
            p.len(),
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(Error::invalid("concentration must be positive"));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("point {p:?} is not on the simplex")));
    }
    let a0: f64 = alpha.iter().sum();
    let ln_b = alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(a0);
    let mut ln_kernel = 0.0;
    for (&pi, &ai) in p.iter().zip(alpha) {
        if ai != 1.0 {
            if pi == 0.0 {
                return Ok(if ai > 1.0 { 0.0 } else { f64::INFINITY });
            }
            ln_kernel += (ai - 1.0) * pi.ln();
        }
    }
    Ok((ln_kernel - ln_b).exp())
}
