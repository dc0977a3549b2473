//! Small dense linear programs over the probability simplex:
//! maximize `cᵀw` subject to `w ∈ Δ_M` and `aᵢᵀw ≥ bᵢ`.
//!
//! Solved exactly by enumerating the vertices of the feasible polytope; when
//! the number of candidate vertices is too large a penalized projected
//! subgradient ascent is used instead.

use crate::error::{FedMooError, Result};
use crate::tensor::{dot, project_simplex, SimplexPoint};

/// Candidate vertex count above which enumeration gives way to subgradient ascent.
pub const MAX_VERTEX_CANDIDATES: u128 = 100_000;
const SUBGRADIENT_ITERS: usize = 5_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    fn slack(&self, w: &[f64]) -> f64 {
        dot(&self.coeffs, w) - self.rhs
    }

    fn tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.rhs.abs() + self.coeffs.iter().map(|c| c.abs()).sum::<f64>())
    }

    pub fn satisfied_by(&self, w: &[f64]) -> bool {
        self.slack(w) >= -self.tolerance()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpMethod {
    VertexEnumeration,
    Subgradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub weights: SimplexPoint,
    pub objective: f64,
    pub method: LpMethod,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

/// Solves `A x = b` for square `A` by Gaussian elimination with partial
/// pivoting; `None` when the system is numerically singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-12 {
            return x < y;
        }
    }
    false
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn enumerate_vertices(objective: &[f64], constraints: &[LinearConstraint]) -> Option<LpSolution> {
    let m = objective.len();
    // Inequalities: w_j >= 0 for every j, then the extra constraints.
    let total = m + constraints.len();
    let row = |i: usize| -> (Vec<f64>, f64) {
        if i < m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            (e, 0.0)
        } else {
            let c = &constraints[i - m];
            (c.coeffs.clone(), c.rhs)
        }
    };
    let feasible = |w: &[f64]| -> bool {
        w.iter().all(|x| *x >= -1e-12) && constraints.iter().all(|c| c.satisfied_by(w))
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |w: Vec<f64>| {
        if !feasible(&w) {
            return;
        }
        let w: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
        let s: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / s).collect();
        let val = dot(objective, &w);
        let scale = 1e-12 * (1.0 + objective.iter().map(|c| c.abs()).sum::<f64>());
        match &best {
            None => best = Some((w, val)),
            Some((bw, bv)) => {
                if val > bv + scale || ((val - bv).abs() <= scale && lex_less(&w, bw)) {
                    best = Some((w, val));
                }
            }
        }
    };

    if m == 1 {
        consider(vec![1.0]);
    } else {
        let k = m - 1;
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let mut a = Vec::with_capacity(m);
            let mut b = Vec::with_capacity(m);
            a.push(vec![1.0; m]);
            b.push(1.0);
            for &i in &idx {
                let (r, rhs) = row(i);
                a.push(r);
                b.push(rhs);
            }
            if let Some(w) = solve_square(a, b) {
                consider(w);
            }
            if !next_combination(&mut idx, total) {
                break;
            }
        }
    }
    best.map(|(w, val)| LpSolution {
        weights: SimplexPoint::new(w.clone())
            .unwrap_or_else(|_| project_simplex(&w).expect("finite vertex")),
        objective: val,
        method: LpMethod::VertexEnumeration,
    })
}

fn subgradient_ascent(objective: &[f64], constraints: &[LinearConstraint]) -> Result<Option<LpSolution>> {
    let m = objective.len();
    let scale = objective.iter().map(|c| c.abs()).fold(0.0, f64::max)
        + constraints
            .iter()
            .flat_map(|c| c.coeffs.iter())
            .map(|c| c.abs())
            .fold(0.0, f64::max);
    let penalty = 10.0 * (1.0 + objective.iter().map(|c| c.abs()).sum::<f64>());
    let base_step = 1.0 / scale.max(1e-12);
    let mut w = SimplexPoint::uniform(m);
    let mut best: Option<(SimplexPoint, f64)> = None;
    for t in 0..SUBGRADIENT_ITERS {
        if constraints.iter().all(|c| c.satisfied_by(&w)) {
            let val = dot(objective, &w);
            if best.as_ref().is_none_or(|(_, bv)| val > *bv) {
                best = Some((w.clone(), val));
            }
        }
        let mut grad = objective.to_vec();
        for c in constraints {
            if c.slack(&w) < 0.0 {
                for (g, a) in grad.iter_mut().zip(&c.coeffs) {
                    *g += penalty * a;
                }
            }
        }
        let step = base_step / ((t + 1) as f64).sqrt();
        let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi + step * gi).collect();
        w = project_simplex(&trial)?;
    }
    Ok(best.map(|(weights, objective)| LpSolution {
        weights,
        objective,
        method: LpMethod::Subgradient,
    }))
}

/// Maximizes `objectiveᵀ w` over the simplex subject to `constraints`.
/// Returns `Ok(None)` when no feasible point was found. Among optimal
/// vertices the lexicographically smallest one is returned.
pub fn solve_simplex_lp(objective: &[f64], constraints: &[LinearConstraint]) -> Result<Option<LpSolution>> {
    let m = objective.len();
    if m == 0 {
        return Err(FedMooError::InvalidInput("empty LP objective".into()));
    }
    if objective.iter().any(|c| !c.is_finite())
        || constraints
            .iter()
            .any(|c| c.coeffs.len() != m || !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()))
    {
        return Err(FedMooError::InvalidInput("LP data must be finite and of length M".into()));
    }
    let candidates = binomial(m + constraints.len(), m.saturating_sub(1));
    if candidates <= MAX_VERTEX_CANDIDATES {
        Ok(enumerate_vertices(objective, constraints))
    } else {
        subgradient_ascent(objective, constraints)
    }
}
