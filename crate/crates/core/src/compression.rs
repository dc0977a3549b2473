//! Compression of client Jacobians under a per-call upload budget measured
//! in float entries. One transmitted index counts as one float.

use crate::error::{FedMooError, Result};
use crate::tensor::{
    randomized_svd, reshape_pad_square, square_side, unreshape, Matrix, RsvdParams, SeededRng,
};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorKind {
    RandSvd,
    TopK,
    RandomMask,
    RandKUnbiased,
    Identity,
}

impl CompressorKind {
    pub fn name(&self) -> &'static str {
        match self {
            CompressorKind::RandSvd => "rand-svd",
            CompressorKind::TopK => "top-k",
            CompressorKind::RandomMask => "random-mask",
            CompressorKind::RandKUnbiased => "rand-k-unbiased",
            CompressorKind::Identity => "identity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    /// Upload allowance per call, in float entries.
    pub budget_floats: usize,
    #[serde(default)]
    pub rsvd: RsvdParams,
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, budget_floats: usize) -> Self {
        CompressorSpec { kind, budget_floats, rsvd: RsvdParams::default() }
    }

    /// Number of singular triples affordable for a `d x m` Jacobian.
    pub fn svd_rank(&self, d: usize, m: usize) -> Result<usize> {
        let s = square_side(d, m);
        let unit = 2 * s + 1;
        let r = self.budget_floats / unit;
        if r < 1 {
            return Err(self.budget_error(unit));
        }
        Ok(r.min(s))
    }

    /// Kept entries per column for rand-k-unbiased.
    pub fn keep_per_column(&self, d: usize, m: usize) -> Result<usize> {
        let k = self.budget_floats / (2 * m);
        if k < 1 {
            return Err(self.budget_error(2 * m));
        }
        Ok(k.min(d))
    }

    /// Variance parameter `q = d / k - 1` of the rand-k-unbiased operator.
    pub fn variance_q(&self, d: usize, m: usize) -> Result<f64> {
        let k = self.keep_per_column(d, m)?;
        Ok(d as f64 / k as f64 - 1.0)
    }

    /// Upload cost a `d x m` Jacobian incurs under this spec.
    pub fn cost_for(&self, d: usize, m: usize) -> Result<usize> {
        Ok(match self.kind {
            CompressorKind::RandSvd => {
                let s = square_side(d, m);
                self.svd_rank(d, m)? * (2 * s + 1)
            }
            CompressorKind::TopK => 2 * self.top_k_count(d, m)?,
            CompressorKind::RandomMask => self.mask_count(d, m)?,
            CompressorKind::RandKUnbiased => 2 * m * self.keep_per_column(d, m)?,
            CompressorKind::Identity => {
                if self.budget_floats < d * m {
                    return Err(self.budget_error(d * m));
                }
                d * m
            }
        })
    }

    fn top_k_count(&self, d: usize, m: usize) -> Result<usize> {
        let k = self.budget_floats / 2;
        if k < 1 {
            return Err(self.budget_error(2));
        }
        Ok(k.min(d * m))
    }

    fn mask_count(&self, d: usize, m: usize) -> Result<usize> {
        if self.budget_floats < 1 {
            return Err(self.budget_error(1));
        }
        Ok(self.budget_floats.min(d * m))
    }

    fn budget_error(&self, unit: usize) -> FedMooError {
        FedMooError::Budget {
            kind: self.kind.name().to_string(),
            budget: self.budget_floats,
            unit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Leading singular triples of the reshaped `side x side` square.
    LowRank { side: usize, u: Matrix, s: Vec<f64>, v: Matrix },
    /// Entries addressed by their column-major position in the `d x m` matrix.
    Sparse { indices: Vec<usize>, values: Vec<f64> },
    Dense(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedJacobian {
    pub kind: CompressorKind,
    pub payload: Payload,
    pub shape: (usize, usize),
    pub upload_cost_floats: usize,
}

/// Compresses `h` (d x M) under `spec`.
pub fn compress(spec: &CompressorSpec, h: &Matrix, rng: &mut SeededRng) -> Result<CompressedJacobian> {
    let (d, m) = h.shape();
    let cost = spec.cost_for(d, m)?;
    let payload = match spec.kind {
        CompressorKind::Identity => Payload::Dense(h.clone()),
        CompressorKind::RandSvd => {
            let r = spec.svd_rank(d, m)?;
            let sq = reshape_pad_square(h);
            let svd = randomized_svd(&sq, r, spec.rsvd, rng)?;
            Payload::LowRank { side: sq.rows(), u: svd.u, s: svd.s, v: svd.v }
        }
        CompressorKind::TopK => {
            let k = spec.top_k_count(d, m)?;
            let flat = column_major(h);
            let mut order: Vec<usize> = (0..flat.len()).collect();
            // Ties resolve to the lower index so the choice is deterministic.
            order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
            let mut indices: Vec<usize> = order[..k].to_vec();
            indices.sort_unstable();
            let values = indices.iter().map(|&i| flat[i]).collect();
            Payload::Sparse { indices, values }
        }
        CompressorKind::RandomMask => {
            let k = spec.mask_count(d, m)?;
            let flat = column_major(h);
            let mut indices = sample(rng, flat.len(), k).into_vec();
            indices.sort_unstable();
            let values = indices.iter().map(|&i| flat[i]).collect();
            Payload::Sparse { indices, values }
        }
        CompressorKind::RandKUnbiased => {
            let k = spec.keep_per_column(d, m)?;
            let scale = d as f64 / k as f64;
            let mut indices = Vec::with_capacity(k * m);
            let mut values = Vec::with_capacity(k * m);
            for col in 0..m {
                let mut rows = sample(rng, d, k).into_vec();
                rows.sort_unstable();
                for row in rows {
                    indices.push(col * d + row);
                    values.push(h[(row, col)] * scale);
                }
            }
            Payload::Sparse { indices, values }
        }
    };
    debug_assert!(cost <= spec.budget_floats);
    Ok(CompressedJacobian { kind: spec.kind, payload, shape: (d, m), upload_cost_floats: cost })
}

/// Server-side reconstruction of the `d x M` matrix.
pub fn decompress(c: &CompressedJacobian) -> Result<Matrix> {
    let (d, m) = c.shape;
    if d == 0 || m == 0 {
        return Err(FedMooError::Decode("empty original shape".into()));
    }
    match &c.payload {
        Payload::Dense(h) => {
            if h.shape() != (d, m) {
                return Err(FedMooError::Decode(format!(
                    "dense payload is {:?}, expected {:?}",
                    h.shape(),
                    c.shape
                )));
            }
            Ok(h.clone())
        }
        Payload::LowRank { side, u, s, v } => {
            if *side != square_side(d, m)
                || u.rows() != *side
                || v.rows() != *side
                || u.cols() != s.len()
                || v.cols() != s.len()
            {
                return Err(FedMooError::Decode("inconsistent low-rank factors".into()));
            }
            let svd = crate::tensor::Svd { u: u.clone(), s: s.clone(), v: v.clone() };
            unreshape(&svd.reconstruct(), d, m)
        }
        Payload::Sparse { indices, values } => {
            if indices.len() != values.len() {
                return Err(FedMooError::Decode("index/value length mismatch".into()));
            }
            let mut out = Matrix::zeros(d, m);
            for (&idx, &val) in indices.iter().zip(values) {
                if idx >= d * m {
                    return Err(FedMooError::Decode(format!("index {idx} out of range")));
                }
                out[(idx % d, idx / d)] = val;
            }
            Ok(out)
        }
    }
}

fn column_major(h: &Matrix) -> Vec<f64> {
    let (d, m) = h.shape();
    let mut out = Vec::with_capacity(d * m);
    for k in 0..m {
        for i in 0..d {
            out.push(h[(i, k)]);
        }
    }
    out
}

/// Normalized root mean squared error `‖truth − estimate‖_F / ‖truth‖_F`.
pub fn nrmse(truth: &Matrix, estimate: &Matrix) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(FedMooError::ShapeMismatch(format!(
            "nrmse of {:?} vs {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(FedMooError::Undefined("nrmse against a zero ground truth".into()));
    }
    Ok(truth.sub(estimate)?.frobenius_norm() / denom)
}
