use crate::error::{FedMooError, Result};
use std::ops::Deref;

const SUM_TOL: f64 = 1e-12;

/// A point of the probability simplex: nonnegative entries summing to one.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(FedMooError::InvalidInput("simplex point needs M >= 1".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FedMooError::InvalidInput(
                "simplex weights must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(FedMooError::InvalidInput(format!("simplex weights sum to {s}")));
        }
        Ok(SimplexPoint(weights))
    }

    pub fn uniform(m: usize) -> Self {
        SimplexPoint(vec![1.0 / m as f64; m])
    }

    pub fn vertex(m: usize, k: usize) -> Self {
        let mut w = vec![0.0; m];
        w[k] = 1.0;
        SimplexPoint(w)
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SimplexPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection onto `{w : w >= 0, sum(w) = mass}` by sort-and-threshold.
pub fn project_simplex_mass(v: &[f64], mass: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(FedMooError::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FedMooError::InvalidInput("non-finite entry in projection input".into()));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(FedMooError::InvalidInput(format!("simplex mass {mass} must be positive")));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - mass) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

/// Euclidean projection of `v` onto the probability simplex. Points that
/// already lie on the simplex are returned unchanged, which makes the map
/// exactly idempotent.
pub fn project_simplex(v: &[f64]) -> Result<SimplexPoint> {
    if v.iter().all(|x| x.is_finite() && *x >= 0.0)
        && !v.is_empty()
        && (v.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL
    {
        return Ok(SimplexPoint(v.to_vec()));
    }
    let w = project_simplex_mass(v, 1.0)?;
    Ok(SimplexPoint(w))
}
