use super::gram::{gram_from_jacobians, theory_gram, GramContext};
use super::{sample_clients, Engine, GramVariant, RoundConfig, ServerState, DIVERGENCE_NORM};
use crate::error::{FedMooError, Result};
use crate::metrics::{stationarity, CommLedger, MessageKind, RoundRecord, StationarityMode};
use crate::objectives::Problem;
use crate::tensor::{axpy, norm, Matrix, SeededRng, SimplexPoint, StreamRole};
use crate::weights::{get_preference_weights, get_weights, kl_from_uniform, mgda_exact, project_min_weight};
use std::time::Instant;

/// Tolerance of the server-side min-norm solve in FSMGDA.
const FSMGDA_TOL: f64 = 1e-14;

/// What one client sends back after local training.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    /// `(x^t − x_i^{t,τ}) / (τ η_l)`.
    pub delta: Vec<f64>,
    /// FSMGDA only: one update per task.
    pub task_deltas: Option<Vec<Vec<f64>>>,
    /// FedCMOO-Pref only: local losses at `x^t`.
    pub local_losses: Option<Vec<f64>>,
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub ledger: CommLedger,
    pub x: Vec<f64>,
    pub w: SimplexPoint,
}

fn client_rng(seed: u64, round: usize, index: usize) -> SeededRng {
    SeededRng::for_role(seed, round as u64, StreamRole::ClientGrad, index as u64)
}

fn round_clients(state: &ServerState, config: &RoundConfig, problem: &dyn Problem, round: usize) -> Result<Vec<usize>> {
    let mut rng = SeededRng::for_role(state.seed, round as u64, StreamRole::Sampling, 0);
    sample_clients(&mut rng, problem.num_clients(), config.clients_per_round)
}

/// Runs `τ` local steps along `H w`, starting with the already drawn
/// Jacobian `first` at `x`.
fn local_weighted_steps(
    problem: &dyn Problem,
    client: usize,
    x: &[f64],
    first: &Matrix,
    w: &[f64],
    config: &RoundConfig,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut xi = x.to_vec();
    axpy(-config.lr_local, &first.mul_vec(w), &mut xi);
    for _ in 1..config.local_steps {
        let h = problem.local_stoch_jacobian(client, &xi, rng)?;
        axpy(-config.lr_local, &h.mul_vec(w), &mut xi);
    }
    let scale = 1.0 / (config.local_steps as f64 * config.lr_local);
    Ok(x.iter().zip(&xi).map(|(a, b)| (a - b) * scale).collect())
}

fn mean_vec(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for v in vs {
        axpy(1.0, v, &mut out);
    }
    let n = vs.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// `1 / ‖sym(G)‖_F`, which never exceeds `1 / λ_max` and so keeps the
/// weight iteration monotone; 1 for a zero matrix.
fn auto_beta(g: &Matrix) -> f64 {
    let norm = g.symmetrized().map(|s| s.frobenius_norm()).unwrap_or(0.0);
    if norm > 0.0 && norm.is_finite() {
        1.0 / norm
    } else {
        1.0
    }
}

/// Applies `x ← x − η_g η_l τ · direction`, checks for divergence, and
/// writes the round record.
fn finish_round(
    state: &mut ServerState,
    config: &RoundConfig,
    problem: &dyn Problem,
    round: usize,
    direction: &[f64],
    w: SimplexPoint,
    started: Instant,
) -> Result<RoundRecord> {
    let step = config.lr_global * config.lr_local * config.local_steps as f64;
    let mut x = state.x.clone();
    axpy(-step, direction, &mut x);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FedMooError::Diverged { round, reason: "non-finite model parameters".into() });
    }
    let n = norm(&x);
    if n > DIVERGENCE_NORM {
        return Err(FedMooError::Diverged { round, reason: format!("model norm {n:e} exceeds {DIVERGENCE_NORM:e}") });
    }
    state.x = x;
    state.w = w;
    state.round = round;

    let losses = problem.global_losses(&state.x)?;
    let mu_r = match &config.preference {
        Some(r) if config.engine == Engine::FedcmooPref => {
            let scaled: Vec<f64> = r.iter().zip(&losses).map(|(a, b)| a * b.max(1e-12)).collect();
            let s: f64 = scaled.iter().sum();
            Some(kl_from_uniform(&scaled.iter().map(|v| v / s).collect::<Vec<_>>()))
        }
        _ => None,
    };
    let stat = stationarity(problem, &state.x, StationarityMode::MgdaMin)?;
    let stat_w = stationarity(problem, &state.x, StationarityMode::AtWeights(&state.w))?;
    let summary = state.ledger.round_summary(round);
    let cumulative = state.ledger.totals().upload;
    Ok(RoundRecord {
        round,
        losses,
        stationarity: stat,
        stationarity_at_w: stat_w,
        mu_r,
        weights: state.w.to_vec(),
        upload_floats: summary.upload,
        download_floats: summary.download,
        sidechannel_floats: summary.sidechannel,
        cumulative_upload_floats: cumulative,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn run_round_weighted(
    state: &mut ServerState,
    config: &RoundConfig,
    problem: &dyn Problem,
    engine: Engine,
) -> Result<RoundRecord> {
    let started = Instant::now();
    let round = state.round + 1;
    let (d, m) = (problem.dim(), problem.num_tasks());
    let clients = round_clients(state, config, problem, round)?;
    for &i in &clients {
        state.ledger.record(round, i, MessageKind::ModelDown, d as u64);
    }

    let mut rngs = Vec::with_capacity(clients.len());
    let mut jacobians = Vec::with_capacity(clients.len());
    for &i in &clients {
        let mut rng = client_rng(state.seed, round, i);
        jacobians.push(problem.local_stoch_jacobian(i, &state.x, &mut rng)?);
        rngs.push(rng);
    }

    let w = if engine == Engine::FedavgScalarized {
        SimplexPoint::uniform(m)
    } else {
        let spec = config.compressor.resolve(d, m);
        let mut ctx = GramContext { seed: state.seed, round, ledger: Some(&mut state.ledger) };
        let g = match config.gram_variant {
            GramVariant::TheoryUnbiased => theory_gram(problem, &state.x, config.theory_sample_size(), &spec, &mut ctx)?,
            v => gram_from_jacobians(v, &clients, &jacobians, &spec, &mut ctx)?,
        };
        let w = if engine == Engine::FedcmooPref {
            let r = config
                .preference
                .as_ref()
                .ok_or_else(|| FedMooError::Config("fedcmoo-pref needs a preference vector".into()))?;
            let mut mean = vec![0.0; m];
            for &i in &clients {
                let l = problem.local_losses(i, &state.x)?;
                state.ledger.record(round, i, MessageKind::LossesUp, m as u64);
                axpy(1.0 / clients.len() as f64, &l, &mut mean);
            }
            get_preference_weights(r, &mean, &g, config.eps_mu)?.weights
        } else {
            let beta = config.beta.unwrap_or_else(|| auto_beta(&g));
            get_weights(&state.w, &g, beta, config.pgd_steps)?
        };
        let w = match config.min_weight_floor {
            Some(f) => project_min_weight(&w, f)?,
            None => w,
        };
        for &i in &clients {
            state.ledger.record(round, i, MessageKind::WeightsDown, m as u64);
        }
        w
    };

    let mut deltas = Vec::with_capacity(clients.len());
    for ((&i, h), rng) in clients.iter().zip(&jacobians).zip(rngs.iter_mut()) {
        deltas.push(local_weighted_steps(problem, i, &state.x, h, &w, config, rng)?);
        state.ledger.record(round, i, MessageKind::DeltaUp, d as u64);
    }
    let direction = mean_vec(&deltas);
    finish_round(state, config, problem, round, &direction, w, started)
}

/// One FedCMOO round: compressed Gram estimate, weight update, weighted
/// local SGD and model averaging.
pub fn run_round_fedcmoo(state: &mut ServerState, config: &RoundConfig, problem: &dyn Problem) -> Result<RoundRecord> {
    run_round_weighted(state, config, problem, Engine::Fedcmoo)
}

/// FedCMOO with weights from the preference program on the mean local
/// losses of the participating clients.
pub fn run_round_fedcmoo_pref(state: &mut ServerState, config: &RoundConfig, problem: &dyn Problem) -> Result<RoundRecord> {
    run_round_weighted(state, config, problem, Engine::FedcmooPref)
}

/// Local SGD on the uniformly weighted loss, no Gram estimate.
pub fn run_round_fedavg_scalarized(
    state: &mut ServerState,
    config: &RoundConfig,
    problem: &dyn Problem,
) -> Result<RoundRecord> {
    run_round_weighted(state, config, problem, Engine::FedavgScalarized)
}

/// Client side of FSMGDA: `τ` local steps per task, one update per task.
pub fn fsmgda_client_update(
    problem: &dyn Problem,
    client: usize,
    x: &[f64],
    config: &RoundConfig,
    seed: u64,
    round: usize,
) -> Result<ClientUpdate> {
    let m = problem.num_tasks();
    let scale = 1.0 / (config.local_steps as f64 * config.lr_local);
    let mut task_deltas = Vec::with_capacity(m);
    for k in 0..m {
        let mut rng = client_rng(seed, round, client * m + k);
        let mut xi = x.to_vec();
        for _ in 0..config.local_steps {
            let g = problem.local_stoch_grad(client, k, &xi, &mut rng)?;
            axpy(-config.lr_local, &g, &mut xi);
        }
        task_deltas.push(x.iter().zip(&xi).map(|(a, b)| (a - b) * scale).collect::<Vec<f64>>());
    }
    Ok(ClientUpdate { client, delta: mean_vec(&task_deltas), task_deltas: Some(task_deltas), local_losses: None })
}

/// One FSMGDA round: per-task local training, min-norm weights on the
/// averaged per-task updates.
pub fn run_round_fsmgda(state: &mut ServerState, config: &RoundConfig, problem: &dyn Problem) -> Result<RoundRecord> {
    let started = Instant::now();
    let round = state.round + 1;
    let (d, m) = (problem.dim(), problem.num_tasks());
    let clients = round_clients(state, config, problem, round)?;
    let mut per_task: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(clients.len()); m];
    for &i in &clients {
        state.ledger.record(round, i, MessageKind::ModelDown, d as u64);
        let update = fsmgda_client_update(problem, i, &state.x, config, state.seed, round)?;
        state.ledger.record(round, i, MessageKind::TaskDeltasUp, (m * d) as u64);
        for (k, delta) in update.task_deltas.expect("fsmgda update carries task deltas").into_iter().enumerate() {
            per_task[k].push(delta);
        }
    }
    let cols: Vec<Vec<f64>> = per_task.iter().map(|v| mean_vec(v)).collect();
    let updates = Matrix::from_columns(&cols)?;
    let w = mgda_exact(&updates, FSMGDA_TOL)?.weights;
    let direction = updates.mul_vec(&w);
    finish_round(state, config, problem, round, &direction, w, started)
}

/// Dispatches on `config.engine`.
pub fn run_round(state: &mut ServerState, config: &RoundConfig, problem: &dyn Problem) -> Result<RoundRecord> {
    match config.engine {
        Engine::Fedcmoo => run_round_fedcmoo(state, config, problem),
        Engine::FedcmooPref => run_round_fedcmoo_pref(state, config, problem),
        Engine::Fsmgda => run_round_fsmgda(state, config, problem),
        Engine::FedavgScalarized => run_round_fedavg_scalarized(state, config, problem),
    }
}

/// Runs `config.rounds` rounds from the problem's initial point, handing
/// each record to `on_record` as soon as it is produced.
pub fn run_experiment(
    config: &RoundConfig,
    problem: &dyn Problem,
    seed: u64,
    mut on_record: impl FnMut(&RoundRecord),
) -> Result<RunOutput> {
    config.validate(problem.num_clients(), problem.num_tasks(), problem.dim())?;
    let mut state = ServerState::new(problem, seed);
    let mut records = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let round = state.round + 1;
        let rec = run_round(&mut state, config, problem).map_err(|e| match e {
            e @ FedMooError::Diverged { .. } => e,
            e => FedMooError::AtRound { round, source: Box::new(e) },
        })?;
        on_record(&rec);
        records.push(rec);
    }
    Ok(RunOutput { records, ledger: state.ledger, x: state.x, w: state.w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::CompressorKind;
    use crate::federation::CompressorConfig;
    use crate::objectives::{GradOracleSpec, QuadraticProblem, QuadraticSpec};

    fn problem(m: usize, sigma_l: f64) -> QuadraticProblem {
        let spec = QuadraticSpec {
            dim: 20,
            tasks: m,
            clients: 8,
            hessian: Default::default(),
            task_centers: None,
            center_scale: 1.0,
            sigma_g: 0.5,
            init: Default::default(),
        };
        QuadraticProblem::from_spec(&spec, GradOracleSpec::with_noise(sigma_l), 3).unwrap()
    }

    #[test]
    fn smoke_all_engines() {
        let p = problem(2, 0.1);
        for engine in [Engine::Fedcmoo, Engine::FedcmooPref, Engine::Fsmgda, Engine::FedavgScalarized] {
            let mut cfg = RoundConfig::new(engine, 10, 3, 2, 0.05);
            cfg.preference = Some(crate::weights::PreferenceVector::new(vec![1.0, 2.0]).unwrap());
            let mut seen = 0;
            let out = run_experiment(&cfg, &p, 1, |_| seen += 1).unwrap();
            assert_eq!(out.records.len(), 10);
            assert_eq!(seen, 10);
            assert_eq!(out.records.last().unwrap().round, 10);
        }
    }

    #[test]
    fn beta_zero_matches_fedavg() {
        let p = problem(2, 0.3);
        let mut a = RoundConfig::new(Engine::Fedcmoo, 15, 4, 3, 0.1);
        a.beta = Some(0.0);
        let mut b = a.clone();
        b.engine = Engine::FedavgScalarized;
        let ra = run_experiment(&a, &p, 7, |_| {}).unwrap();
        let rb = run_experiment(&b, &p, 7, |_| {}).unwrap();
        assert_eq!(ra.x, rb.x);
    }

    #[test]
    fn divergence_is_reported() {
        let p = problem(2, 0.0);
        let cfg = RoundConfig::new(Engine::FedavgScalarized, 200, 2, 5, 50.0);
        let err = run_experiment(&cfg, &p, 0, |_| {}).unwrap_err();
        assert!(err.is_divergence(), "{err:?}");
    }

    #[test]
    fn validation_errors() {
        let p = problem(2, 0.0);
        let mut cfg = RoundConfig::new(Engine::FedcmooPref, 1, 3, 1, 0.1);
        assert!(matches!(run_experiment(&cfg, &p, 0, |_| {}), Err(FedMooError::Config(_))));
        cfg.engine = Engine::Fedcmoo;
        cfg.clients_per_round = 9;
        assert!(matches!(run_experiment(&cfg, &p, 0, |_| {}), Err(FedMooError::Config(_))));
        cfg.clients_per_round = 2;
        cfg.compressor = CompressorConfig { kind: CompressorKind::RandSvd, budget_floats: Some(3), ..Default::default() };
        assert!(matches!(run_experiment(&cfg, &p, 0, |_| {}), Err(FedMooError::Config(_))));
    }
}
