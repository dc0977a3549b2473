use super::partition::dirichlet_partition;
use super::{GradOracleSpec, Problem};
use crate::error::{FedMooError, Result};
use crate::tensor::{SeededRng, StreamRole};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Generator for the multi-head softmax classification family: a shared
/// linear encoder `W` (hidden x features) followed by one linear head `V_k`
/// (classes x hidden) per task, trained with cross-entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub features: usize,
    pub hidden: usize,
    pub classes: usize,
    pub tasks: usize,
    pub clients: usize,
    /// Synthetic samples per client; ignored when `data_csv` is set.
    #[serde(default = "default_samples")]
    pub samples_per_client: usize,
    /// Dirichlet concentration of the label partition.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Std of the Gaussian noise added to teacher logits.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// CSV with feature columns followed by `label` (one task) or
    /// `label_1, …, label_M`.
    #[serde(default)]
    pub data_csv: Option<String>,
}

fn default_samples() -> usize {
    64
}
fn default_alpha() -> f64 {
    0.3
}
fn default_label_noise() -> f64 {
    0.5
}
fn default_init_scale() -> f64 {
    0.1
}

#[derive(Clone, Debug)]
struct ClientData {
    /// Row-major `n x features`.
    features: Vec<f64>,
    /// Row-major `n x tasks`.
    labels: Vec<usize>,
}

impl ClientData {
    fn len(&self, p: usize) -> usize {
        self.features.len() / p
    }
}

#[derive(Clone, Debug)]
pub struct LogisticProblem {
    features: usize,
    hidden: usize,
    classes: usize,
    tasks: usize,
    clients: Vec<ClientData>,
    x0: Vec<f64>,
    oracle: GradOracleSpec,
}

/// Samples as (feature row, one label per task).
type Dataset = (Vec<Vec<f64>>, Vec<Vec<usize>>);

fn read_csv(path: &Path, features: usize, tasks: usize, classes: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| FedMooError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| FedMooError::Io(e.to_string()))?.clone();
    let expected: Vec<String> = if tasks == 1 {
        vec!["label".into()]
    } else {
        (1..=tasks).map(|k| format!("label_{k}")).collect()
    };
    if headers.len() != features + tasks {
        return Err(FedMooError::InvalidInput(format!(
            "{} has {} columns, expected {features} features and {tasks} labels",
            path.display(),
            headers.len()
        )));
    }
    let label_cols: Vec<&str> = headers.iter().skip(features).collect();
    if label_cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(FedMooError::InvalidInput(format!("label columns must be {expected:?}, found {label_cols:?}")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| FedMooError::Io(e.to_string()))?;
        let parse_err = |col: usize| FedMooError::InvalidInput(format!("row {row}, column {col}: bad value"));
        let mut x = Vec::with_capacity(features);
        for col in 0..features {
            let v: f64 = rec[col].trim().parse().map_err(|_| parse_err(col))?;
            if !v.is_finite() {
                return Err(parse_err(col));
            }
            x.push(v);
        }
        let mut y = Vec::with_capacity(tasks);
        for col in features..features + tasks {
            let v: usize = rec[col].trim().parse().map_err(|_| parse_err(col))?;
            if v >= classes {
                return Err(FedMooError::InvalidInput(format!("row {row}: label {v} >= classes {classes}")));
            }
            y.push(v);
        }
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

fn synthesize(spec: &LogisticSpec, rng: &mut SeededRng) -> Dataset {
    let (p, c, m) = (spec.features, spec.classes, spec.tasks);
    let teachers: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..c * p).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let total = spec.samples_per_client * spec.clients;
    let mut xs = Vec::with_capacity(total);
    let mut ys = Vec::with_capacity(total);
    for _ in 0..total {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let y = teachers
            .iter()
            .map(|t| {
                let logits: Vec<f64> = (0..c)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(rng);
                        crate::tensor::dot(&t[j * p..(j + 1) * p], &x) + spec.label_noise * z
                    })
                    .collect();
                argmax(&logits)
            })
            .collect();
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl LogisticProblem {
    pub fn from_spec(spec: &LogisticSpec, oracle: GradOracleSpec, seed: u64) -> Result<Self> {
        oracle.validate()?;
        if spec.features == 0 || spec.hidden == 0 || spec.tasks == 0 || spec.clients == 0 {
            return Err(FedMooError::InvalidInput("features, hidden, tasks and clients must be >= 1".into()));
        }
        if spec.classes < 2 {
            return Err(FedMooError::InvalidInput("need at least two classes".into()));
        }
        let mut rng = SeededRng::for_role(seed, 0, StreamRole::Problem, 0);
        let (xs, ys) = match &spec.data_csv {
            Some(path) => read_csv(Path::new(path), spec.features, spec.tasks, spec.classes)?,
            None => synthesize(spec, &mut rng),
        };
        // Partition on the joint label so every task sees skewed mixes.
        let joint: Vec<usize> = match spec.classes.checked_pow(spec.tasks as u32) {
            Some(n) if n <= 4096 => ys.iter().map(|y| y.iter().rev().fold(0, |acc, v| acc * spec.classes + v)).collect(),
            _ => ys.iter().map(|y| y[0]).collect(),
        };
        let mut part_rng = SeededRng::for_role(seed, 0, StreamRole::Partition, 0);
        let parts = dirichlet_partition(&joint, spec.clients, spec.alpha, &mut part_rng)?;
        let clients = parts
            .iter()
            .map(|idx| ClientData {
                features: idx.iter().flat_map(|&i| xs[i].iter().copied()).collect(),
                labels: idx.iter().flat_map(|&i| ys[i].iter().copied()).collect(),
            })
            .collect();
        let mut problem = LogisticProblem {
            features: spec.features,
            hidden: spec.hidden,
            classes: spec.classes,
            tasks: spec.tasks,
            clients,
            x0: Vec::new(),
            oracle,
        };
        let mut init_rng = SeededRng::for_role(seed, 0, StreamRole::Init, 0);
        problem.x0 = (0..problem.param_count())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut init_rng);
                spec.init_scale * z
            })
            .collect();
        Ok(problem)
    }

    fn param_count(&self) -> usize {
        self.hidden * self.features + self.tasks * self.classes * self.hidden
    }

    fn head_offset(&self, k: usize) -> usize {
        self.hidden * self.features + k * self.classes * self.hidden
    }

    pub fn client_len(&self, i: usize) -> usize {
        self.clients[i].len(self.features)
    }

    /// Adds the cross-entropy gradient of task `k` on sample `s` of client
    /// `i` into `grad` (scaled by `weight`) and returns the sample loss.
    fn accumulate(&self, i: usize, k: usize, s: usize, x: &[f64], weight: f64, grad: Option<&mut [f64]>) -> f64 {
        let (p, h, c) = (self.features, self.hidden, self.classes);
        let data = &self.clients[i];
        let f = &data.features[s * p..(s + 1) * p];
        let y = data.labels[s * self.tasks + k];
        let w = &x[..h * p];
        let v = &x[self.head_offset(k)..self.head_offset(k) + c * h];
        let z: Vec<f64> = (0..h).map(|r| crate::tensor::dot(&w[r * p..(r + 1) * p], f)).collect();
        let logits: Vec<f64> = (0..c).map(|j| crate::tensor::dot(&v[j * h..(j + 1) * h], &z)).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = sum.ln() + top - logits[y];
        if let Some(grad) = grad {
            let mut e: Vec<f64> = exps.iter().map(|v| v / sum).collect();
            e[y] -= 1.0;
            let off = self.head_offset(k);
            for j in 0..c {
                for r in 0..h {
                    grad[off + j * h + r] += weight * e[j] * z[r];
                }
            }
            for r in 0..h {
                let dz: f64 = (0..c).map(|j| v[j * h + r] * e[j]).sum();
                if dz != 0.0 {
                    for q in 0..p {
                        grad[r * p + q] += weight * dz * f[q];
                    }
                }
            }
        }
        loss
    }

    fn batch_grad(&self, i: usize, k: usize, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_count()];
        let wgt = 1.0 / batch.len() as f64;
        for &s in batch {
            self.accumulate(i, k, s, x, wgt, Some(&mut g));
        }
        g
    }

    fn draw_batch(&self, i: usize, rng: &mut SeededRng) -> Vec<usize> {
        let n = self.client_len(i);
        let b = self.oracle.batch_size.min(n);
        let mut idx = sample(rng, n, b).into_vec();
        idx.sort_unstable();
        idx
    }
}

impl Problem for LogisticProblem {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn num_tasks(&self) -> usize {
        self.tasks
    }

    fn num_clients(&self) -> usize {
        self.clients.len()
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
        let batch = self.draw_batch(i, rng);
        let mut g = self.batch_grad(i, k, x, &batch);
        self.oracle.clip(&mut g);
        Ok(g)
    }

    /// One minibatch shared by all task heads.
    fn local_stoch_jacobian(&self, i: usize, x: &[f64], rng: &mut SeededRng) -> Result<crate::tensor::Matrix> {
        self.check_ids(i, 0)?;
        self.check_point(x)?;
        let batch = self.draw_batch(i, rng);
        let cols: Vec<Vec<f64>> = (0..self.tasks)
            .map(|k| {
                let mut g = self.batch_grad(i, k, x, &batch);
                self.oracle.clip(&mut g);
                g
            })
            .collect();
        crate::tensor::Matrix::from_columns(&cols)
    }

    fn exact_local_grad(&self, i: usize, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_ids(i, k)?;
        self.check_point(x)?;
        let all: Vec<usize> = (0..self.client_len(i)).collect();
        Ok(self.batch_grad(i, k, x, &all))
    }

    fn local_loss(&self, i: usize, k: usize, x: &[f64]) -> Result<f64> {
        self.check_ids(i, k)?;
        self.check_point(x)?;
        let n = self.client_len(i);
        Ok((0..n).map(|s| self.accumulate(i, k, s, x, 0.0, None)).sum::<f64>() / n as f64)
    }

    fn exact_global_grad(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.num_clients() as f64;
        let mut g = vec![0.0; self.param_count()];
        for i in 0..self.num_clients() {
            for (a, b) in g.iter_mut().zip(self.exact_local_grad(i, k, x)?) {
                *a += b / n;
            }
        }
        Ok(g)
    }

    fn global_loss(&self, k: usize, x: &[f64]) -> Result<f64> {
        let n = self.num_clients() as f64;
        let mut total = 0.0;
        for i in 0..self.num_clients() {
            total += self.local_loss(i, k, x)? / n;
        }
        Ok(total)
    }
}
