//! Measurements: Pareto stationarity, the communication ledger, `Δ_M` and
//! the Gram-estimation nRMSE protocol.

mod ledger;
mod nrmse;

pub use ledger::{CommLedger, Direction, LedgerEntry, MessageKind, TransferSummary};
pub use nrmse::{gram_nrmse_protocol, NrmseProtocol, NrmseRow};

use crate::error::{FedMooError, Result};
use crate::objectives::Problem;
use crate::tensor::{gram, norm_sq};
use crate::weights::mgda_from_gram;
use serde::{Deserialize, Serialize};

/// Tolerance of the min-norm solve behind [`StationarityMode::MgdaMin`].
pub const STATIONARITY_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StationarityMode<'a> {
    /// `‖Σ_k w_k ∇L_k(x)‖²` with the given weights.
    AtWeights(&'a [f64]),
    /// `min_{w ∈ Δ_M} ‖Σ_k w_k ∇L_k(x)‖²`.
    MgdaMin,
}

/// Squared norm of the best (or the given) convex combination of the
/// exact global gradients at `x`.
pub fn stationarity(problem: &dyn Problem, x: &[f64], mode: StationarityMode<'_>) -> Result<f64> {
    let j = problem.exact_global_jacobian(x)?;
    match mode {
        StationarityMode::AtWeights(w) => {
            if w.len() != problem.num_tasks() {
                return Err(FedMooError::ShapeMismatch(format!(
                    "{} weights for {} tasks",
                    w.len(),
                    problem.num_tasks()
                )));
            }
            Ok(norm_sq(&j.mul_vec(w)))
        }
        StationarityMode::MgdaMin => {
            let g = gram(&j, &j)?;
            let r = mgda_from_gram(&g, STATIONARITY_TOL)?;
            // Evaluate the norm from the combined gradient to avoid Gram round-off.
            Ok(norm_sq(&j.mul_vec(&r.weights)))
        }
    }
}

/// Mean signed relative gap `(1/M) Σ (−1)^{ℓ_k} (S_A,k − S_B,k) / S_B,k`,
/// with `ℓ_k = 1` when higher scores are better. Positive means the
/// multi-task scores `multi` are worse than the single-task scores `single`.
pub fn delta_m(multi: &[f64], single: &[f64], higher_better: &[bool]) -> Result<f64> {
    let m = multi.len();
    if m == 0 || single.len() != m || higher_better.len() != m {
        return Err(FedMooError::ShapeMismatch(format!(
            "delta_m needs equal non-empty lengths, got {}, {}, {}",
            m,
            single.len(),
            higher_better.len()
        )));
    }
    let mut total = 0.0;
    for k in 0..m {
        if single[k] == 0.0 {
            return Err(FedMooError::Undefined(format!("single-task score {k} is zero")));
        }
        let sign = if higher_better[k] { -1.0 } else { 1.0 };
        total += sign * (multi[k] - single[k]) / single[k];
    }
    Ok(total / m as f64)
}

/// One row of `rounds.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub losses: Vec<f64>,
    /// Min-norm stationarity at `x^{t+1}`.
    pub stationarity: f64,
    /// `‖Σ_k w_k^{t+1} ∇L_k(x^{t+1})‖²`.
    pub stationarity_at_w: f64,
    pub mu_r: Option<f64>,
    pub weights: Vec<f64>,
    /// Payload floats of this round, all clients.
    pub upload_floats: u64,
    pub download_floats: u64,
    pub sidechannel_floats: u64,
    pub cumulative_upload_floats: u64,
    pub wall_time_ms: f64,
}

/// Column names of `rounds.csv` for `m` tasks, in order.
pub fn rounds_csv_header(m: usize) -> Vec<String> {
    let mut h = vec!["round".to_string()];
    h.extend((1..=m).map(|k| format!("loss_{k}")));
    h.push("stationarity".into());
    h.push("stationarity_at_w".into());
    h.push("mu_r".into());
    h.extend((1..=m).map(|k| format!("w_{k}")));
    h.extend(
        ["upload_floats", "download_floats", "sidechannel_floats", "cumulative_upload_floats"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

impl RoundRecord {
    /// Fields in [`rounds_csv_header`] order; floats use the shortest
    /// round-trip representation. Wall time is left out so reruns are
    /// byte-identical.
    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![self.round.to_string()];
        f.extend(self.losses.iter().map(|v| v.to_string()));
        f.push(self.stationarity.to_string());
        f.push(self.stationarity_at_w.to_string());
        f.push(self.mu_r.map_or(String::new(), |v| v.to_string()));
        f.extend(self.weights.iter().map(|v| v.to_string()));
        f.push(self.upload_floats.to_string());
        f.push(self.download_floats.to_string());
        f.push(self.sidechannel_floats.to_string());
        f.push(self.cumulative_upload_floats.to_string());
        f
    }
}

pub fn write_rounds_csv<W: std::io::Write>(records: &[RoundRecord], m: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| FedMooError::Io(e.to_string());
    w.write_record(rounds_csv_header(m)).map_err(io)?;
    for r in records {
        w.write_record(r.csv_fields()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{GradOracleSpec, QuadraticProblem};

    #[test]
    fn delta_m_worked_value() {
        let d = delta_m(&[94.4, 92.6], &[95.4, 93.1], &[true, true]).unwrap();
        assert!((d - 0.0079).abs() < 1e-4, "{d}");
    }

    #[test]
    fn delta_m_signs() {
        // Doubling lower-better losses is 100% worse.
        assert_eq!(delta_m(&[2.0, 2.0], &[1.0, 1.0], &[false, false]).unwrap(), 1.0);
        assert!(delta_m(&[96.0, 94.0], &[95.0, 93.0], &[true, true]).unwrap() < 0.0);
        assert!(matches!(delta_m(&[1.0], &[0.0], &[true]), Err(FedMooError::Undefined(_))));
    }

    fn segment_problem() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]]],
            vec![0.0, 0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap()
    }

    #[test]
    fn midpoint_is_stationary() {
        let p = segment_problem();
        assert!(stationarity(&p, &[0.5, 0.0], StationarityMode::MgdaMin).unwrap() < 1e-28);
        let off = stationarity(&p, &[0.5, 1.0], StationarityMode::MgdaMin).unwrap();
        assert!((off - 1.0).abs() < 1e-12);
        let at_w = stationarity(&p, &[0.5, 1.0], StationarityMode::AtWeights(&[1.0, 0.0])).unwrap();
        assert!(off <= at_w);
    }

    #[test]
    fn orthogonal_gradients() {
        // ∇L1 = x - c1 = (1, 0), ∇L2 = x - c2 = (0, 2) at x = (1, 2).
        let p = QuadraticProblem::new(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![vec![0.0, 2.0], vec![1.0, 0.0]]],
            vec![0.0, 0.0],
            GradOracleSpec::noiseless(),
        )
        .unwrap();
        let s = stationarity(&p, &[1.0, 2.0], StationarityMode::MgdaMin).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
    }

    #[test]
    fn single_objective_is_gradient_norm() {
        let p = QuadraticProblem::new(vec![vec![2.0]], vec![vec![vec![1.0]]], vec![0.0], GradOracleSpec::noiseless()).unwrap();
        assert_eq!(stationarity(&p, &[3.0], StationarityMode::MgdaMin).unwrap(), 16.0);
    }

    #[test]
    fn csv_header_matches_fields() {
        let r = RoundRecord {
            round: 1,
            losses: vec![0.5, 0.25],
            stationarity: 0.1,
            stationarity_at_w: 0.2,
            mu_r: None,
            weights: vec![0.5, 0.5],
            upload_floats: 4,
            download_floats: 2,
            sidechannel_floats: 1,
            cumulative_upload_floats: 4,
            wall_time_ms: 3.0,
        };
        assert_eq!(r.csv_fields().len(), rounds_csv_header(2).len());
        let mut buf = Vec::new();
        write_rounds_csv(&[r], 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("round,loss_1,loss_2,stationarity,"));
        assert!(text.contains("1,0.5,0.25,0.1,0.2,,0.5,0.5,4,2,1,4\n"));
    }
}
