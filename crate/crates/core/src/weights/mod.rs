//! Task-weight solvers.
//!
//! [`get_weights`] runs projected gradient descent on `wᵀGw` over the simplex
//! with an (approximate) Gram matrix `G`. [`mgda_exact`] solves the min-norm
//! problem to tolerance from the Jacobian itself and is used as oracle and
//! metric. The preference-constrained solver lives in [`preference`].

mod lp;
pub mod preference;

pub use lp::{solve_simplex_lp, LinearConstraint, LpMethod, LpSolution};
pub use preference::{
    get_preference_weights, kl_from_uniform, preference_sets, preference_state,
    project_min_weight, PreferenceBranch, PreferenceSets, PreferenceSolution,
    PreferenceState, PreferenceVector, DEFAULT_EPS_MU,
};

use crate::error::{FedMooError, Result};
use crate::tensor::{gram, project_simplex, symmetric_eigen, Matrix, SimplexPoint};

/// `K` steps of `w <- Π_Δ(w - beta * G w)` on the symmetrized `G`.
pub fn get_weights(w: &SimplexPoint, g: &Matrix, beta: f64, k: usize) -> Result<SimplexPoint> {
    let m = w.len();
    if g.shape() != (m, m) {
        return Err(FedMooError::ShapeMismatch(format!(
            "gram is {:?}, weights have length {m}",
            g.shape()
        )));
    }
    if !g.is_finite() {
        return Err(FedMooError::InvalidInput("gram matrix has non-finite entries".into()));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(FedMooError::InvalidInput(format!("step size {beta} must be >= 0")));
    }
    let g = g.symmetrized()?;
    let mut current = w.clone();
    for _ in 0..k {
        let grad = g.mul_vec(&current);
        let step: Vec<f64> = current.iter().zip(&grad).map(|(wi, gi)| wi - beta * gi).collect();
        current = project_simplex(&step)?;
    }
    Ok(current)
}

/// Quadratic form `wᵀ G w`.
pub fn quad_form(g: &Matrix, w: &[f64]) -> f64 {
    crate::tensor::dot(w, &g.mul_vec(w))
}

/// Result of the exact min-norm solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MinNorm {
    pub weights: SimplexPoint,
    /// `‖Σ_k w_k g_k‖` at the returned weights.
    pub norm: f64,
    pub iterations: usize,
}

const MGDA_MAX_ITERS: usize = 1_000_000;

/// Min-norm point of the convex hull of the columns of `jacobian` (d x M),
/// solved by projected gradient with step `1/λ_max(JᵀJ)` until the per-step
/// decrease of `‖Jw‖²` drops below `tol * 1e-2`.
pub fn mgda_exact(jacobian: &Matrix, tol: f64) -> Result<MinNorm> {
    if !jacobian.is_finite() {
        return Err(FedMooError::InvalidInput("jacobian has non-finite entries".into()));
    }
    let g = gram(jacobian, jacobian)?;
    mgda_from_gram(&g, tol)
}

/// Same solve as [`mgda_exact`] starting from a precomputed Gram matrix.
pub fn mgda_from_gram(g: &Matrix, tol: f64) -> Result<MinNorm> {
    let m = g.rows();
    if m == 2 {
        // Closed form on the segment between the two gradients.
        let denom = g[(0, 0)] + g[(1, 1)] - g[(0, 1)] - g[(1, 0)];
        let w1 = if denom > 0.0 {
            ((g[(1, 1)] - 0.5 * (g[(0, 1)] + g[(1, 0)])) / denom).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let weights = SimplexPoint::new(vec![w1, 1.0 - w1])?;
        let value = quad_form(g, &weights).max(0.0);
        return Ok(MinNorm { weights, norm: value.sqrt(), iterations: 0 });
    }
    let (eigs, _) = symmetric_eigen(g)?;
    let lambda_max = eigs[0];
    let mut w = SimplexPoint::uniform(m);
    if m == 1 || lambda_max <= 0.0 {
        let value = quad_form(g, &w).max(0.0);
        return Ok(MinNorm { weights: w, norm: value.sqrt(), iterations: 0 });
    }
    let step = 1.0 / lambda_max;
    let threshold = tol * 1e-2;
    let mut value = quad_form(g, &w);
    let mut iterations = 0;
    while iterations < MGDA_MAX_ITERS {
        iterations += 1;
        let grad = g.mul_vec(&w);
        let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
        let next = project_simplex(&trial)?;
        let next_value = quad_form(g, &next);
        let decrease = value - next_value;
        if decrease < 0.0 {
            // Round-off at the optimum; keep the better iterate.
            break;
        }
        w = next;
        value = next_value;
        if decrease < threshold {
            break;
        }
    }
    Ok(MinNorm { weights: w, norm: value.max(0.0).sqrt(), iterations })
}
