//! Preference-constrained weights: drive the scaled losses `r_k L_k` towards
//! equality while descending, in the style of exact-Pareto-optimal search.

use super::lp::{solve_simplex_lp, LinearConstraint, LpMethod};
use crate::error::{FedMooError, Result};
use crate::tensor::{project_simplex_mass, Matrix, SimplexPoint};
use serde::{Deserialize, Serialize};

/// Threshold on `μ_r` below which the solver switches to plain descent.
pub const DEFAULT_EPS_MU: f64 = 0.01;
const LOSS_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(FedMooError::InvalidInput("empty preference vector".into()));
        }
        if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(FedMooError::InvalidInput(format!(
                "preference entries must be positive, got {r:?}"
            )));
        }
        Ok(PreferenceVector(r))
    }

    pub fn uniform(m: usize) -> Self {
        PreferenceVector(vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PreferenceVector {
    type Error = FedMooError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PreferenceVector::new(v)
    }
}

impl From<PreferenceVector> for Vec<f64> {
    fn from(p: PreferenceVector) -> Vec<f64> {
        p.0
    }
}

impl std::ops::Deref for PreferenceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceState {
    /// `r ⊙ L / Σ r_k L_k`.
    pub u_hat: SimplexPoint,
    /// KL divergence of `u_hat` from uniform.
    pub mu: f64,
    pub a: Vec<f64>,
    /// Losses after clamping.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceSets {
    pub j: Vec<usize>,
    pub j_bar: Vec<usize>,
    pub j_star: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreferenceBranch {
    /// All constraints enforced.
    Full,
    /// The `J̄ \ J*` constraints were dropped to regain feasibility.
    Relaxed,
    /// Still infeasible; uniform weights returned.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceSolution {
    pub weights: SimplexPoint,
    pub state: PreferenceState,
    pub sets: PreferenceSets,
    pub branch: PreferenceBranch,
    /// True when `μ > ε` and the objective pushes towards balance.
    pub balancing: bool,
    pub method: Option<LpMethod>,
}

/// `Σ u_k log(u_k M)` with `0 log 0 = 0`.
pub fn kl_from_uniform(u: &[f64]) -> f64 {
    let m = u.len() as f64;
    u.iter().filter(|x| **x > 0.0).map(|x| x * (x * m).ln()).sum::<f64>().max(0.0)
}

fn clamp_losses(losses: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(losses.len());
    for (k, &l) in losses.iter().enumerate() {
        if !l.is_finite() || l < 0.0 {
            return Err(FedMooError::Domain(format!("loss {k} is {l}; losses must be positive")));
        }
        if l < LOSS_FLOOR {
            log::warn!("loss {k} = {l:e} clamped to {LOSS_FLOOR:e}");
            out.push(LOSS_FLOOR);
        } else {
            out.push(l);
        }
    }
    Ok(out)
}

pub fn preference_state(r: &PreferenceVector, losses: &[f64]) -> Result<PreferenceState> {
    let m = r.len();
    if losses.len() != m {
        return Err(FedMooError::ShapeMismatch(format!(
            "{} losses for a preference of length {m}",
            losses.len()
        )));
    }
    let losses = clamp_losses(losses)?;
    let scaled: Vec<f64> = r.iter().zip(&losses).map(|(ri, li)| ri * li).collect();
    let total: f64 = scaled.iter().sum();
    let u: Vec<f64> = scaled.iter().map(|x| x / total).collect();
    let mu = kl_from_uniform(&u);
    let a = r
        .iter()
        .zip(&u)
        .map(|(ri, ui)| ri * ((ui * m as f64).ln() - mu))
        .collect();
    let u_hat = SimplexPoint::new(u.clone()).unwrap_or_else(|_| {
        crate::tensor::project_simplex(&u).expect("finite normalized losses")
    });
    Ok(PreferenceState { u_hat, mu, a, losses })
}

pub fn preference_sets(a: &[f64], g: &Matrix, r: &PreferenceVector, losses: &[f64]) -> Result<PreferenceSets> {
    let m = a.len();
    if g.shape() != (m, m) || r.len() != m || losses.len() != m {
        return Err(FedMooError::ShapeMismatch(format!(
            "preference sets need M = {m} throughout, gram is {:?}",
            g.shape()
        )));
    }
    let mut j = Vec::new();
    let mut j_bar = Vec::new();
    for k in 0..m {
        let align: f64 = (0..m).map(|i| a[i] * g[(i, k)]).sum();
        if align > 0.0 {
            j.push(k);
        } else {
            j_bar.push(k);
        }
    }
    let scaled: Vec<f64> = r.iter().zip(losses).map(|(ri, li)| ri * li).collect();
    let top = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * top.abs().max(f64::MIN_POSITIVE);
    let j_star = (0..m).filter(|&k| scaled[k] >= top - tol).collect();
    Ok(PreferenceSets { j, j_bar, j_star })
}

/// Solves the preference weight program exactly as a linear program over
/// the simplex. See [`PreferenceBranch`] for the infeasibility fallbacks.
pub fn get_preference_weights(
    r: &PreferenceVector,
    losses: &[f64],
    g: &Matrix,
    eps_mu: f64,
) -> Result<PreferenceSolution> {
    let m = r.len();
    if g.shape() != (m, m) {
        return Err(FedMooError::ShapeMismatch(format!(
            "gram is {:?}, preference has length {m}",
            g.shape()
        )));
    }
    if !g.is_finite() {
        return Err(FedMooError::InvalidInput("gram matrix has non-finite entries".into()));
    }
    if !(eps_mu.is_finite() && eps_mu > 0.0) {
        return Err(FedMooError::InvalidInput(format!("eps_mu {eps_mu} must be positive")));
    }
    let g = g.symmetrized()?;
    let state = preference_state(r, losses)?;
    let sets = preference_sets(&state.a, &g, r, &state.losses)?;
    let balancing = state.mu > eps_mu;

    let direction: Vec<f64> = if balancing { state.a.clone() } else { vec![1.0; m] };
    let objective = g.mul_vec(&direction);
    let column = |k: usize| g.column(k);
    let star: Vec<LinearConstraint> = sets
        .j_star
        .iter()
        .map(|&k| LinearConstraint { coeffs: column(k), rhs: 0.0 })
        .collect();
    let any_aligned = !sets.j.is_empty();
    let rest: Vec<LinearConstraint> = sets
        .j_bar
        .iter()
        .filter(|k| !sets.j_star.contains(k))
        .map(|&k| {
            let gk = column(k);
            let rhs = if any_aligned { crate::tensor::dot(&state.a, &gk) } else { 0.0 };
            LinearConstraint { coeffs: gk, rhs }
        })
        .collect();

    let mut all = star.clone();
    all.extend(rest.iter().cloned());
    if let Some(sol) = solve_simplex_lp(&objective, &all)? {
        return Ok(PreferenceSolution {
            weights: sol.weights,
            state,
            sets,
            branch: PreferenceBranch::Full,
            balancing,
            method: Some(sol.method),
        });
    }
    log::warn!("preference program infeasible; dropping J-bar constraints");
    if let Some(sol) = solve_simplex_lp(&objective, &star)? {
        return Ok(PreferenceSolution {
            weights: sol.weights,
            state,
            sets,
            branch: PreferenceBranch::Relaxed,
            balancing,
            method: Some(sol.method),
        });
    }
    log::warn!("preference program infeasible after relaxation; using uniform weights");
    Ok(PreferenceSolution {
        weights: SimplexPoint::uniform(m),
        state,
        sets,
        branch: PreferenceBranch::Uniform,
        balancing,
        method: None,
    })
}

/// Euclidean projection onto `{w : w_k ≥ floor, Σ w_k = 1}`.
pub fn project_min_weight(w: &SimplexPoint, floor: f64) -> Result<SimplexPoint> {
    let m = w.len();
    if !(floor.is_finite() && floor >= 0.0) || floor * m as f64 >= 1.0 {
        return Err(FedMooError::InvalidFloor { floor, tasks: m });
    }
    if w.iter().all(|x| *x >= floor) {
        return Ok(w.clone());
    }
    let shifted: Vec<f64> = w.iter().map(|x| x - floor).collect();
    let p = project_simplex_mass(&shifted, 1.0 - floor * m as f64)?;
    let out: Vec<f64> = p.iter().map(|x| x + floor).collect();
    let total: f64 = out.iter().sum();
    SimplexPoint::new(out.iter().map(|x| x / total).collect())
}
