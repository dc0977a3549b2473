use super::{Matrix, SeededRng};
use crate::error::{FedMooError, Result};
use rand_distr::{Distribution, StandardNormal};

/// Thin singular value decomposition `A ≈ U diag(s) Vᵀ` with `s` non-increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, r) = self.u.shape();
        let n = self.v.rows();
        let mut out = Matrix::zeros(m, n);
        for k in 0..r {
            let sk = self.s[k];
            if sk == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = self.u[(i, k)] * sk;
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// Randomized SVD settings.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsvdParams {
    pub power_iters: usize,
    pub oversampling: usize,
}

impl Default for RsvdParams {
    fn default() -> Self {
        RsvdParams { power_iters: 2, oversampling: 5 }
    }
}

/// Orthonormalizes the columns of `y` in place (modified Gram-Schmidt, two
/// passes). Columns that vanish relative to their original norm become zero.
fn orthonormalize_columns(y: &mut Matrix) {
    let (m, l) = y.shape();
    let mut cols: Vec<Vec<f64>> = (0..l).map(|j| y.column(j)).collect();
    for j in 0..l {
        let original = super::norm(&cols[j]);
        for _pass in 0..2 {
            for p in 0..j {
                let proj = super::dot(&cols[p], &cols[j]);
                if proj != 0.0 {
                    let (head, tail) = cols.split_at_mut(j);
                    super::axpy(-proj, &head[p], &mut tail[0]);
                }
            }
        }
        let nrm = super::norm(&cols[j]);
        if original == 0.0 || nrm <= 1e-12 * original {
            cols[j].iter_mut().for_each(|v| *v = 0.0);
        } else {
            cols[j].iter_mut().for_each(|v| *v /= nrm);
        }
    }
    for (j, col) in cols.iter().enumerate() {
        debug_assert_eq!(col.len(), m);
        y.set_column(j, col);
    }
}

/// One-sided Jacobi SVD of a matrix with `rows >= cols`.
fn jacobi_svd_tall(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v = Matrix::identity(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = super::norm_sq(&cols[p]);
                let beta = super::norm_sq(&cols[q]);
                let gamma = super::dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let cp = cols[p][i];
                    let cq = cols[q][i];
                    cols[p][i] = c * cp - s * cq;
                    cols[q][i] = s * cp + c * cq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = cols.iter().map(|c| super::norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 0.0 {
            let ucol: Vec<f64> = cols[j].iter().map(|x| x / sigma).collect();
            u.set_column(k, &ucol);
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    Svd { u, s, v: vs }
}

/// Exact thin SVD by one-sided Jacobi rotations. Intended for the small
/// matrices produced inside the randomized SVD and for tests.
pub fn thin_svd(a: &Matrix) -> Svd {
    if a.rows() >= a.cols() {
        jacobi_svd_tall(a)
    } else {
        let t = jacobi_svd_tall(&a.transpose());
        Svd { u: t.v, s: t.s, v: t.u }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in non-increasing order with eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(FedMooError::ShapeMismatch("eigen needs a square matrix".into()));
    }
    let mut m = a.symmetrized()?;
    let mut vecs = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = m.data().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs[(k, p)];
                    let vkq = vecs[(k, q)];
                    vecs[(k, p)] = c * vkp - s * vkq;
                    vecs[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut sorted = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        sorted.set_column(k, &vecs.column(j));
    }
    Ok((values, sorted))
}

/// Rank-`r` randomized SVD with Gaussian test matrix, `oversampling` extra
/// columns and `power_iters` re-orthonormalized power iterations.
pub fn randomized_svd(a: &Matrix, r: usize, params: RsvdParams, rng: &mut SeededRng) -> Result<Svd> {
    let (m, n) = a.shape();
    let max_rank = m.min(n);
    if r == 0 || r > max_rank {
        return Err(FedMooError::InvalidRank { rank: r, max: max_rank });
    }
    let l = (r + params.oversampling).min(max_rank);

    let mut omega = Matrix::zeros(n, l);
    for x in omega.data_mut() {
        *x = StandardNormal.sample(rng);
    }
    let mut q = a.matmul(&omega)?;
    orthonormalize_columns(&mut q);
    let at = a.transpose();
    for _ in 0..params.power_iters {
        let mut z = at.matmul(&q)?;
        orthonormalize_columns(&mut z);
        q = a.matmul(&z)?;
        orthonormalize_columns(&mut q);
    }

    // B = Qᵀ A is l x n; its SVD lifts back through Q.
    let b = super::gram(&q, a)?;
    let small = thin_svd(&b);
    let u_full = q.matmul(&small.u)?;

    let mut u = Matrix::zeros(m, r);
    let mut v = Matrix::zeros(n, r);
    for k in 0..r {
        u.set_column(k, &u_full.column(k));
        v.set_column(k, &small.v.column(k));
    }
    Ok(Svd { u, s: small.s[..r].to_vec(), v })
}
