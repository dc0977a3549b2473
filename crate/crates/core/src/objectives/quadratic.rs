use super::{GradOracleSpec, Problem};
use crate::error::{FedMooError, Result};
use crate::tensor::{dist_sq, SeededRng, StreamRole};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Diagonal Hessians `A_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HessianSpec {
    Identity,
    /// `A_k = s_k I`.
    Scaled { scales: Vec<f64> },
    /// Entries drawn log-uniformly from `[min, max]`, then multiplied by the
    /// optional per-task scale.
    RandomDiagonal {
        min: f64,
        max: f64,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
    Diagonal { diags: Vec<Vec<f64>> },
}

impl Default for HessianSpec {
    fn default() -> Self {
        HessianSpec::Identity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    Zeros,
    Gaussian { scale: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Zeros
    }
}

/// Generator for the heterogeneous quadratic family
/// `f_{i,k}(x) = ½ (x − c_{i,k})ᵀ A_k (x − c_{i,k})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub tasks: usize,
    pub clients: usize,
    #[serde(default)]
    pub hessian: HessianSpec,
    /// Explicit mean centers `c̄_k`; drawn as `N(0, center_scale² I)` when absent.
    #[serde(default)]
    pub task_centers: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub center_scale: f64,
    /// Client spread `σ_g` of `c_{i,k} = c̄_k + σ_g z_{i,k}`.
    #[serde(default)]
    pub sigma_g: f64,
    #[serde(default)]
    pub init: InitSpec,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    dim: usize,
    tasks: usize,
    clients: usize,
    hessians: Vec<Vec<f64>>,
    /// `centers[(i * M + k) * d ..][..d]`.
    centers: Vec<f64>,
    mean_centers: Vec<Vec<f64>>,
    loss_floor: Vec<f64>,
    x0: Vec<f64>,
    oracle: GradOracleSpec,
}

fn normal_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

impl QuadraticProblem {
    /// `hessians[k]` is the diagonal of `A_k`, `centers[i][k]` is `c_{i,k}`.
    pub fn new(
        hessians: Vec<Vec<f64>>,
        centers: Vec<Vec<Vec<f64>>>,
        x0: Vec<f64>,
        oracle: GradOracleSpec,
    ) -> Result<Self> {
        oracle.validate()?;
        let tasks = hessians.len();
        let clients = centers.len();
        if tasks == 0 || clients == 0 {
            return Err(FedMooError::InvalidInput("need at least one task and one client".into()));
        }
        let dim = hessians[0].len();
        if dim == 0 {
            return Err(FedMooError::InvalidInput("dimension must be >= 1".into()));
        }
        for (k, h) in hessians.iter().enumerate() {
            if h.len() != dim {
                return Err(FedMooError::ShapeMismatch(format!("hessian {k} has length {}", h.len())));
            }
            if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(FedMooError::InvalidInput(format!("hessian {k} must be positive definite")));
            }
        }
        if x0.len() != dim || x0.iter().any(|v| !v.is_finite()) {
            return Err(FedMooError::InvalidInput("initial point has wrong length or non-finite entries".into()));
        }
        let mut flat = Vec::with_capacity(clients * tasks * dim);
        for (i, per_task) in centers.iter().enumerate() {
            if per_task.len() != tasks {
                return Err(FedMooError::ShapeMismatch(format!("client {i} has {} centers", per_task.len())));
            }
            for c in per_task {
                if c.len() != dim || c.iter().any(|v| !v.is_finite()) {
                    return Err(FedMooError::InvalidInput(format!("client {i} has a malformed center")));
                }
                flat.extend_from_slice(c);
            }
        }
        let mut problem = QuadraticProblem {
            dim,
            tasks,
            clients,
            hessians,
            centers: flat,
            mean_centers: Vec::new(),
            loss_floor: Vec::new(),
            x0,
            oracle,
        };
        problem.mean_centers = (0..tasks)
            .map(|k| {
                let mut m = vec![0.0; dim];
                for i in 0..clients {
                    for (a, c) in m.iter_mut().zip(problem.center(i, k)) {
                        *a += c;
                    }
                }
                m.iter_mut().for_each(|v| *v /= clients as f64);
                m
            })
            .collect();
        problem.loss_floor = (0..tasks)
            .map(|k| {
                let mean = &problem.mean_centers[k];
                (0..clients)
                    .map(|i| problem.quad(k, problem.center(i, k), mean))
                    .sum::<f64>()
                    / clients as f64
            })
            .collect();
        Ok(problem)
    }

    pub fn from_spec(spec: &QuadraticSpec, oracle: GradOracleSpec, seed: u64) -> Result<Self> {
        let (d, m, n) = (spec.dim, spec.tasks, spec.clients);
        if d == 0 || m == 0 || n == 0 {
            return Err(FedMooError::InvalidInput("dim, tasks and clients must be >= 1".into()));
        }
        if !(spec.sigma_g.is_finite() && spec.sigma_g >= 0.0) {
            return Err(FedMooError::InvalidInput("sigma_g must be >= 0".into()));
        }
        let mut rng = SeededRng::for_role(seed, 0, StreamRole::Problem, 0);
        let check_len = |what: &str, len: usize, want: usize| -> Result<()> {
            if len != want {
                return Err(FedMooError::InvalidInput(format!("{what} has length {len}, expected {want}")));
            }
            Ok(())
        };
        let hessians: Vec<Vec<f64>> = match &spec.hessian {
            HessianSpec::Identity => vec![vec![1.0; d]; m],
            HessianSpec::Scaled { scales } => {
                check_len("hessian scales", scales.len(), m)?;
                scales.iter().map(|s| vec![*s; d]).collect()
            }
            HessianSpec::RandomDiagonal { min, max, scales } => {
                if !(*min > 0.0 && max >= min && max.is_finite()) {
                    return Err(FedMooError::InvalidInput("random hessian needs 0 < min <= max".into()));
                }
                if let Some(s) = scales {
                    check_len("hessian scales", s.len(), m)?;
                }
                let (lo, hi) = (min.ln(), max.ln());
                (0..m)
                    .map(|k| {
                        let s = scales.as_ref().map_or(1.0, |s| s[k]);
                        (0..d).map(|_| s * (lo + (hi - lo) * rng.random::<f64>()).exp()).collect()
                    })
                    .collect()
            }
            HessianSpec::Diagonal { diags } => {
                check_len("hessian diags", diags.len(), m)?;
                diags.clone()
            }
        };
        let means: Vec<Vec<f64>> = match &spec.task_centers {
            Some(c) => {
                check_len("task_centers", c.len(), m)?;
                c.clone()
            }
            None => (0..m).map(|_| normal_vec(&mut rng, d, spec.center_scale)).collect(),
        };
        for c in &means {
            check_len("task center", c.len(), d)?;
        }
        // Offsets are recentred so the client mean of c_{i,k} is exactly c̄_k.
        let mut centers = vec![vec![Vec::new(); m]; n];
        for k in 0..m {
            let offsets: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, d, spec.sigma_g)).collect();
            let mut avg = vec![0.0; d];
            for o in &offsets {
                for (a, v) in avg.iter_mut().zip(o) {
                    *a += v / n as f64;
                }
            }
            for (i, o) in offsets.iter().enumerate() {
                centers[i][k] = means[k].iter().zip(o).zip(&avg).map(|((c, z), a)| c + z - a).collect();
            }
        }
        let x0 = match &spec.init {
            InitSpec::Zeros => vec![0.0; d],
            InitSpec::Gaussian { scale } => normal_vec(&mut rng, d, *scale),
            InitSpec::Explicit { values } => {
                check_len("init values", values.len(), d)?;
                values.clone()
            }
        };
        QuadraticProblem::new(hessians, centers, x0, oracle)
    }

    pub fn with_initial_point(mut self, x0: Vec<f64>) -> Result<Self> {
        self.check_point(&x0)?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_oracle(mut self, oracle: GradOracleSpec) -> Result<Self> {
        oracle.validate()?;
        self.oracle = oracle;
        Ok(self)
    }

    pub fn center(&self, i: usize, k: usize) -> &[f64] {
        let start = (i * self.tasks + k) * self.dim;
        &self.centers[start..start + self.dim]
    }

    /// `c̄_k`, the minimizer of `L_k`.
    pub fn mean_center(&self, k: usize) -> &[f64] {
        &self.mean_centers[k]
    }

    pub fn hessian_diag(&self, k: usize) -> &[f64] {
        &self.hessians[k]
    }

    /// `min_x L_k(x)`, the part of the global loss due to client spread.
    pub fn loss_floor(&self, k: usize) -> f64 {
        self.loss_floor[k]
    }

    /// `(1/N) Σ_i ‖∇f_{i,k}(x) − ∇L_k(x)‖²`, which does not depend on `x`.
    pub fn heterogeneity(&self, k: usize) -> f64 {
        let a = &self.hessians[k];
        let mean = &self.mean_centers[k];
        (0..self.clients)
            .map(|i| {
                self.center(i, k)
                    .iter()
                    .zip(mean)
                    .zip(a)
                    .map(|((c, m), a)| (a * (c - m)).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.clients as f64
    }

    /// True when every `A_k` is a multiple of the identity.
    pub fn is_isotropic(&self) -> bool {
        self.hessians.iter().all(|h| h.iter().all(|v| (v - h[0]).abs() <= 1e-12 * h[0]))
    }

    fn quad(&self, k: usize, x: &[f64], c: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(c)
            .zip(&self.hessians[k])
            .map(|((x, c), a)| a * (x - c) * (x - c))
            .sum::<f64>()
    }

    fn grad_at(&self, k: usize, x: &[f64], c: &[f64]) -> Vec<f64> {
        x.iter().zip(c).zip(&self.hessians[k]).map(|((x, c), a)| a * (x - c)).collect()
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_tasks(&self) -> usize {
        self.tasks
    }

    fn num_clients(&self) -> usize {
        self.clients
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn oracle(&self) -> &GradOracleSpec {
        &self.oracle
    }

    fn local_stoch_grad(&self, i: usize, k: usize, x: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        self.check_ids(i, k)?;
        self.check_point(x)?;
        let mut g = self.grad_at(k, x, self.center(i, k));
        if self.oracle.noise_std > 0.0 {
            let s = self.oracle.noise_std / (self.dim as f64).sqrt();
            for v in g.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += s * z;
            }
        }
        self.oracle.clip(&mut g);
        Ok(g)
    }

    fn exact_local_grad(&self, i: usize, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_ids(i, k)?;
        self.check_point(x)?;
        Ok(self.grad_at(k, x, self.center(i, k)))
    }

    fn local_loss(&self, i: usize, k: usize, x: &[f64]) -> Result<f64> {
        self.check_ids(i, k)?;
        self.check_point(x)?;
        Ok(self.quad(k, x, self.center(i, k)))
    }

    fn exact_global_grad(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_ids(0, k)?;
        self.check_point(x)?;
        Ok(self.grad_at(k, x, &self.mean_centers[k]))
    }

    fn global_loss(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_ids(0, k)?;
        self.check_point(x)?;
        Ok(self.quad(k, x, &self.mean_centers[k]) + self.loss_floor[k])
    }
}

/// Pareto set `[c̄₁, c̄₂]` of a two-task isotropic quadratic.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoSegment {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl ParetoSegment {
    pub fn is_degenerate(&self) -> bool {
        dist_sq(&self.start, &self.end) == 0.0
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        self.start.iter().zip(&self.end).map(|(a, b)| a + t * (b - a)).collect()
    }

    /// Euclidean distance from `x` to the segment.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let len2 = dist_sq(&self.start, &self.end);
        if len2 == 0.0 {
            return dist_sq(x, &self.start).sqrt();
        }
        let t: f64 = x
            .iter()
            .zip(&self.start)
            .zip(&self.end)
            .map(|((x, a), b)| (x - a) * (b - a))
            .sum::<f64>()
            / len2;
        dist_sq(x, &self.point(t.clamp(0.0, 1.0))).sqrt()
    }
}

pub fn pareto_front_2quadratic(problem: &QuadraticProblem) -> Result<ParetoSegment> {
    if problem.tasks != 2 {
        return Err(FedMooError::Unsupported(format!("needs M = 2, got {}", problem.tasks)));
    }
    if !problem.is_isotropic() {
        return Err(FedMooError::Unsupported("needs isotropic hessians".into()));
    }
    Ok(ParetoSegment { start: problem.mean_centers[0].clone(), end: problem.mean_centers[1].clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_client() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![vec![1.0]],
            vec![vec![vec![0.0]], vec![vec![2.0]]],
            vec![0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap()
    }

    #[test]
    fn two_client_example() {
        let p = two_client();
        // (½·1 + ½·1) / 2
        assert_eq!(p.global_loss(0, &[1.0]).unwrap(), 0.5);
        assert_eq!(p.exact_global_grad(0, &[1.0]).unwrap(), vec![0.0]);
        let brute: f64 = (0..2).map(|i| p.local_loss(i, 0, &[1.0]).unwrap()).sum::<f64>() / 2.0;
        assert_eq!(brute, 0.5);
    }

    #[test]
    fn stoch_grad_at_local_minimizer_is_zero() {
        let spec = QuadraticSpec {
            dim: 5,
            tasks: 2,
            clients: 3,
            hessian: HessianSpec::RandomDiagonal { min: 0.5, max: 2.0, scales: None },
            task_centers: None,
            center_scale: 1.0,
            sigma_g: 0.3,
            init: InitSpec::Zeros,
        };
        let p = QuadraticProblem::from_spec(&spec, GradOracleSpec::noiseless(), 4).unwrap();
        let mut rng = SeededRng::new(0, 0);
        let c = p.center(1, 1).to_vec();
        assert!(p.local_stoch_grad(1, 1, &c, &mut rng).unwrap().iter().all(|v| *v == 0.0));
        let x = vec![0.3; 5];
        assert_eq!(p.local_stoch_grad(2, 0, &x, &mut rng).unwrap(), p.exact_local_grad(2, 0, &x).unwrap());
    }

    #[test]
    fn unknown_ids() {
        let p = two_client();
        let mut rng = SeededRng::new(0, 0);
        assert!(matches!(p.local_stoch_grad(2, 0, &[0.0], &mut rng), Err(FedMooError::UnknownId(_))));
        assert!(matches!(p.local_stoch_grad(0, 1, &[0.0], &mut rng), Err(FedMooError::UnknownId(_))));
    }

    #[test]
    fn centers_are_recentred() {
        let spec = QuadraticSpec {
            dim: 4,
            tasks: 2,
            clients: 7,
            hessian: HessianSpec::Identity,
            task_centers: Some(vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]]),
            center_scale: 1.0,
            sigma_g: 2.0,
            init: InitSpec::Zeros,
        };
        let p = QuadraticProblem::from_spec(&spec, GradOracleSpec::noiseless(), 1).unwrap();
        for (a, b) in p.mean_center(0).iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert!(p.exact_global_grad(0, &x).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn clipping_bounds_norm() {
        let oracle = GradOracleSpec { noise_std: 1.0, batch_size: 1, clip_radius: Some(0.5) };
        let p = two_client().with_oracle(oracle).unwrap();
        let mut rng = SeededRng::new(9, 0);
        for _ in 0..100 {
            let g = p.local_stoch_grad(0, 0, &[10.0], &mut rng).unwrap();
            assert!(crate::tensor::norm(&g) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn pareto_segment() {
        let p = QuadraticProblem::new(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]]],
            vec![0.0, 0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap();
        let seg = pareto_front_2quadratic(&p).unwrap();
        assert_eq!(seg.start, vec![0.0, 0.0]);
        assert_eq!(seg.end, vec![1.0, 0.0]);
        let g1 = p.exact_global_grad(0, &[0.5, 0.0]).unwrap();
        let g2 = p.exact_global_grad(1, &[0.5, 0.0]).unwrap();
        assert!(g1.iter().zip(&g2).all(|(a, b)| (0.5 * a + 0.5 * b).abs() < 1e-15));
        assert!((seg.distance(&[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((seg.distance(&[0.5, -3.0]) - 3.0).abs() < 1e-15);

        let same = QuadraticProblem::new(
            vec![vec![1.0], vec![1.0]],
            vec![vec![vec![2.0], vec![2.0]]],
            vec![0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap();
        assert!(pareto_front_2quadratic(&same).unwrap().is_degenerate());

        let aniso = QuadraticProblem::new(
            vec![vec![1.0, 2.0], vec![1.0, 1.0]],
            vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]]],
            vec![0.0, 0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap();
        assert!(matches!(pareto_front_2quadratic(&aniso), Err(FedMooError::Unsupported(_))));
    }
}
