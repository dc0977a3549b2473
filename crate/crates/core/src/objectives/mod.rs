//! Synthetic multi-objective problem families. Each client `i` holds local
//! functions `f_{i,k}`; the global loss of task `k` is their mean over all
//! clients. Stochastic oracles feed the simulated wire, exact oracles feed
//! the metrics only.

mod logistic;
mod partition;
mod quadratic;

pub use logistic::{LogisticProblem, LogisticSpec};
pub use partition::{dirichlet_partition, partition_heterogeneity};
pub use quadratic::{pareto_front_2quadratic, HessianSpec, InitSpec, ParetoSegment, QuadraticProblem, QuadraticSpec};

use crate::error::{FedMooError, Result};
use crate::tensor::{Matrix, SeededRng};
use serde::{Deserialize, Serialize};

/// Noise, batching and clipping of the stochastic gradient oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradOracleSpec {
    /// `σ_l`; the quadratic family adds `N(0, σ_l²/d · I)`.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub clip_radius: Option<f64>,
}

fn default_batch() -> usize {
    128
}

impl Default for GradOracleSpec {
    fn default() -> Self {
        GradOracleSpec { noise_std: 0.0, batch_size: default_batch(), clip_radius: None }
    }
}

impl GradOracleSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_noise(noise_std: f64) -> Self {
        GradOracleSpec { noise_std, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(FedMooError::InvalidInput(format!("noise_std {} must be >= 0", self.noise_std)));
        }
        if self.batch_size == 0 {
            return Err(FedMooError::InvalidInput("batch_size must be >= 1".into()));
        }
        if let Some(r) = self.clip_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(FedMooError::InvalidInput(format!("clip_radius {r} must be > 0")));
            }
        }
        Ok(())
    }

    pub(crate) fn clip(&self, g: &mut [f64]) {
        if let Some(r) = self.clip_radius {
            let n = crate::tensor::norm(g);
            if n > r {
                let s = r / n;
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// A federated multi-objective problem with `N` clients and `M` tasks over
/// a model of dimension `d`.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn num_tasks(&self) -> usize;
    fn num_clients(&self) -> usize;
    /// Starting model `x⁰`.
    fn initial_point(&self) -> Vec<f64>;
    fn oracle(&self) -> &GradOracleSpec;

    /// Unbiased estimate of `∇f_{i,k}(x)`.
    fn local_stoch_grad(&self, i: usize, k: usize, x: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>>;
    fn exact_local_grad(&self, i: usize, k: usize, x: &[f64]) -> Result<Vec<f64>>;
    fn local_loss(&self, i: usize, k: usize, x: &[f64]) -> Result<f64>;
    fn exact_global_grad(&self, k: usize, x: &[f64]) -> Result<Vec<f64>>;
    fn global_loss(&self, k: usize, x: &[f64]) -> Result<f64>;

    /// Stochastic Jacobian `H̃_i` (d x M), one column per task.
    fn local_stoch_jacobian(&self, i: usize, x: &[f64], rng: &mut SeededRng) -> Result<Matrix> {
        let cols = (0..self.num_tasks())
            .map(|k| self.local_stoch_grad(i, k, x, rng))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_columns(&cols)
    }

    /// Exact Jacobian of the global losses (d x M).
    fn exact_global_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let cols = (0..self.num_tasks())
            .map(|k| self.exact_global_grad(k, x))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_columns(&cols)
    }

    fn global_losses(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_tasks()).map(|k| self.global_loss(k, x)).collect()
    }

    fn local_losses(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_tasks()).map(|k| self.local_loss(i, k, x)).collect()
    }

    fn check_ids(&self, i: usize, k: usize) -> Result<()> {
        if i >= self.num_clients() {
            return Err(FedMooError::UnknownId(format!("client {i} of {}", self.num_clients())));
        }
        if k >= self.num_tasks() {
            return Err(FedMooError::UnknownId(format!("task {k} of {}", self.num_tasks())));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(FedMooError::ShapeMismatch(format!(
                "model has {} entries, problem dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FedMooError::InvalidInput("model has non-finite entries".into()));
        }
        Ok(())
    }
}
