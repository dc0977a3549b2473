use crate::compression::{nrmse, CompressorKind};
use crate::error::{FedMooError, Result};
use crate::federation::{
    approx_gram_jacobian, run_round_fedcmoo, sample_clients, CompressorConfig, Engine, GramContext, GramVariant,
    RoundConfig, ServerState,
};
use crate::objectives::Problem;
use crate::tensor::{SeededRng, StreamRole};
use serde::{Deserialize, Serialize};

/// Gram-estimation error study. The model follows a FedCMOO trajectory
/// with uncompressed Gram matrices; at every round each compressor and
/// option estimates the Gram matrix of the same sampled Jacobians, and its
/// nRMSE against the uncompressed Gram matrix is recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrmseProtocol {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_steps: usize,
    pub lr_local: f64,
    pub compressors: Vec<CompressorKind>,
    pub variants: Vec<GramVariant>,
    /// Upload budget per client; one model (`d` floats) when absent.
    #[serde(default)]
    pub budget_floats: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrmseRow {
    pub compressor: CompressorKind,
    pub variant: GramVariant,
    pub mean_nrmse: f64,
    /// Rounds that entered the mean (rounds with a zero Gram matrix are skipped).
    pub rounds: usize,
}

pub fn gram_nrmse_protocol(problem: &dyn Problem, protocol: &NrmseProtocol, seed: u64) -> Result<Vec<NrmseRow>> {
    if protocol
        .variants
        .iter()
        .any(|v| !matches!(v, GramVariant::OneWay | GramVariant::TwoWay))
    {
        return Err(FedMooError::Config("nrmse protocol compares one-way and two-way options only".into()));
    }
    let (d, m) = (problem.dim(), problem.num_tasks());
    let mut driver = RoundConfig::new(
        Engine::Fedcmoo,
        protocol.rounds,
        protocol.clients_per_round,
        protocol.local_steps,
        protocol.lr_local,
    );
    driver.gram_variant = GramVariant::ExactDebug;
    driver.validate(problem.num_clients(), m, d)?;

    let cases: Vec<(CompressorKind, GramVariant)> = protocol
        .compressors
        .iter()
        .flat_map(|c| protocol.variants.iter().map(move |v| (*c, *v)))
        .collect();
    let mut sums = vec![(0.0, 0usize); cases.len()];
    let mut state = ServerState::new(problem, seed);
    for _ in 0..protocol.rounds {
        let round = state.round + 1;
        let mut srng = SeededRng::for_role(seed, round as u64, StreamRole::Sampling, 0);
        let clients = sample_clients(&mut srng, problem.num_clients(), protocol.clients_per_round)?;
        let mut ctx = GramContext { seed, round, ledger: None };
        let exact = CompressorConfig::default().resolve(d, m);
        let truth = approx_gram_jacobian(GramVariant::ExactDebug, problem, &state.x, &clients, 0, &exact, &mut ctx)?;
        for ((kind, variant), acc) in cases.iter().zip(sums.iter_mut()) {
            let cfg = CompressorConfig { kind: *kind, budget_floats: protocol.budget_floats, ..Default::default() };
            let spec = cfg.resolve(d, m);
            let est = approx_gram_jacobian(*variant, problem, &state.x, &clients, 0, &spec, &mut ctx)?;
            match nrmse(&truth, &est) {
                Ok(e) => {
                    acc.0 += e;
                    acc.1 += 1;
                }
                Err(FedMooError::Undefined(_)) => {}
                Err(e) => return Err(e),
            }
        }
        run_round_fedcmoo(&mut state, &driver, problem)?;
    }
    Ok(cases
        .into_iter()
        .zip(sums)
        .map(|((compressor, variant), (sum, n))| NrmseRow {
            compressor,
            variant,
            mean_nrmse: if n > 0 { sum / n as f64 } else { f64::NAN },
            rounds: n,
        })
        .collect())
}
