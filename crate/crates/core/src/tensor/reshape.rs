use super::Matrix;
use crate::error::{FedMooError, Result};

/// Side of the square that holds `d * m` entries: `ceil(sqrt(d * m))`.
pub fn square_side(d: usize, m: usize) -> usize {
    let n = d * m;
    let mut s = (n as f64).sqrt() as usize;
    while s * s < n {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    s
}

/// Reads `h` column by column and writes the entries row by row into an
/// `s x s` square, zero padding the tail.
pub fn reshape_pad_square(h: &Matrix) -> Matrix {
    let (d, m) = h.shape();
    let s = square_side(d, m);
    let mut out = Matrix::zeros(s, s);
    let dst = out.data_mut();
    let mut idx = 0;
    for k in 0..m {
        for i in 0..d {
            dst[idx] = h[(i, k)];
            idx += 1;
        }
    }
    out
}

/// Inverse of [`reshape_pad_square`]; padding entries are discarded.
pub fn unreshape(sq: &Matrix, d: usize, m: usize) -> Result<Matrix> {
    let s = square_side(d, m);
    if sq.shape() != (s, s) {
        return Err(FedMooError::ShapeMismatch(format!(
            "expected {s}x{s} square for a {d}x{m} matrix, got {:?}",
            sq.shape()
        )));
    }
    let mut out = Matrix::zeros(d, m);
    let src = sq.data();
    let mut idx = 0;
    for k in 0..m {
        for i in 0..d {
            out[(i, k)] = src[idx];
            idx += 1;
        }
    }
    Ok(out)
}
