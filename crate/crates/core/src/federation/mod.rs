//! Round engines of the federated simulator and the Gram-matrix estimators.
//!
//! Every source of randomness is a [`SeededRng`] keyed by
//! `(seed, round, role, client)`, so a round's outcome does not depend on
//! the order in which clients are simulated.

mod engines;
mod gram;

pub use engines::{
    run_experiment, run_round, run_round_fedavg_scalarized, run_round_fedcmoo, run_round_fedcmoo_pref,
    run_round_fsmgda, fsmgda_client_update, ClientUpdate, RunOutput,
};
pub use gram::{approx_gram_jacobian, gram_from_jacobians, theory_gram, GramContext};

use crate::compression::{CompressorKind, CompressorSpec};
use crate::error::{FedMooError, Result};
use crate::objectives::Problem;
use crate::metrics::CommLedger;
use crate::tensor::{RsvdParams, SeededRng, SimplexPoint};
use crate::weights::{PreferenceVector, DEFAULT_EPS_MU};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

/// Divergence guard on `‖x‖`.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Fedcmoo,
    FedcmooPref,
    Fsmgda,
    FedavgScalarized,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Fedcmoo => "fedcmoo",
            Engine::FedcmooPref => "fedcmoo-pref",
            Engine::Fsmgda => "fsmgda",
            Engine::FedavgScalarized => "fedavg-scalarized",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = FedMooError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedcmoo" => Ok(Engine::Fedcmoo),
            "fedcmoo-pref" => Ok(Engine::FedcmooPref),
            "fsmgda" => Ok(Engine::Fsmgda),
            "fedavg-scalarized" => Ok(Engine::FedavgScalarized),
            other => Err(FedMooError::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramVariant {
    #[default]
    OneWay,
    TwoWay,
    TheoryUnbiased,
    ExactDebug,
}

impl GramVariant {
    pub fn name(&self) -> &'static str {
        match self {
            GramVariant::OneWay => "one-way",
            GramVariant::TwoWay => "two-way",
            GramVariant::TheoryUnbiased => "theory-unbiased",
            GramVariant::ExactDebug => "exact-debug",
        }
    }
}

impl std::str::FromStr for GramVariant {
    type Err = FedMooError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-way" => Ok(GramVariant::OneWay),
            "two-way" => Ok(GramVariant::TwoWay),
            "theory-unbiased" => Ok(GramVariant::TheoryUnbiased),
            "exact-debug" => Ok(GramVariant::ExactDebug),
            other => Err(FedMooError::Config(format!("unknown gram variant `{other}`"))),
        }
    }
}

/// Compressor selection with a budget that defaults to one model's worth
/// of floats (`d`, or `d·M` for the identity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorKind,
    #[serde(default)]
    pub budget_floats: Option<usize>,
    #[serde(default)]
    pub rsvd: RsvdParams,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig { kind: CompressorKind::RandSvd, budget_floats: None, rsvd: RsvdParams::default() }
    }
}

impl CompressorConfig {
    pub fn resolve(&self, d: usize, m: usize) -> CompressorSpec {
        let budget = self.budget_floats.unwrap_or(match self.kind {
            CompressorKind::Identity => d * m,
            _ => d,
        });
        CompressorSpec { kind: self.kind, budget_floats: budget, rsvd: self.rsvd }
    }
}

fn one() -> f64 {
    1.0
}
fn default_pgd_steps() -> usize {
    20
}
fn default_eps_mu() -> f64 {
    DEFAULT_EPS_MU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    pub engine: Engine,
    pub rounds: usize,
    /// `n`, clients sampled per round.
    pub clients_per_round: usize,
    /// `n′` of the theory-unbiased estimator; defaults to `n`.
    #[serde(default)]
    pub theory_sample: Option<usize>,
    /// `τ`.
    pub local_steps: usize,
    /// `η_l`.
    pub lr_local: f64,
    /// `η_g`.
    #[serde(default = "one")]
    pub lr_global: f64,
    /// Step of the weight update; `1 / ‖G‖_F` of the round's Gram estimate when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    /// `K`.
    #[serde(default = "default_pgd_steps")]
    pub pgd_steps: usize,
    #[serde(default)]
    pub gram_variant: GramVariant,
    #[serde(default)]
    pub compressor: CompressorConfig,
    #[serde(default)]
    pub preference: Option<PreferenceVector>,
    #[serde(default)]
    pub min_weight_floor: Option<f64>,
    #[serde(default = "default_eps_mu")]
    pub eps_mu: f64,
}

impl RoundConfig {
    pub fn new(engine: Engine, rounds: usize, clients_per_round: usize, local_steps: usize, lr_local: f64) -> Self {
        RoundConfig {
            engine,
            rounds,
            clients_per_round,
            theory_sample: None,
            local_steps,
            lr_local,
            lr_global: 1.0,
            beta: None,
            pgd_steps: default_pgd_steps(),
            gram_variant: GramVariant::OneWay,
            compressor: CompressorConfig::default(),
            preference: None,
            min_weight_floor: None,
            eps_mu: DEFAULT_EPS_MU,
        }
    }

    pub fn theory_sample_size(&self) -> usize {
        self.theory_sample.unwrap_or(self.clients_per_round)
    }

    /// Checks the configuration against a problem with `n_clients`
    /// clients, `m` tasks and dimension `d`.
    pub fn validate(&self, n_clients: usize, m: usize, d: usize) -> Result<()> {
        let bad = |msg: String| Err(FedMooError::Config(msg));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.clients_per_round == 0 || self.clients_per_round > n_clients {
            return bad(format!("clients_per_round must be in 1..={n_clients}, got {}", self.clients_per_round));
        }
        if self.local_steps == 0 {
            return bad("local_steps must be >= 1".into());
        }
        for (name, v) in [("lr_local", self.lr_local), ("lr_global", self.lr_global)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("beta must be >= 0, got {b}"));
            }
        }
        if !(self.eps_mu.is_finite() && self.eps_mu > 0.0) {
            return bad(format!("eps_mu must be > 0, got {}", self.eps_mu));
        }
        if let Some(f) = self.min_weight_floor {
            if !(f.is_finite() && f >= 0.0 && f * (m as f64) < 1.0) {
                return bad(format!("min_weight_floor {f} must satisfy 0 <= floor * M < 1"));
            }
        }
        match (&self.preference, self.engine) {
            (None, Engine::FedcmooPref) => return bad("engine fedcmoo-pref needs a preference vector".into()),
            (Some(r), _) if r.len() != m => {
                return bad(format!("preference has {} entries for {m} tasks", r.len()));
            }
            _ => {}
        }
        if matches!(self.engine, Engine::Fedcmoo | Engine::FedcmooPref) && self.gram_variant != GramVariant::ExactDebug {
            let spec = self.compressor.resolve(d, m);
            spec.cost_for(d, m).map_err(|e| FedMooError::Config(e.to_string()))?;
            if self.gram_variant == GramVariant::TheoryUnbiased
                && !matches!(spec.kind, CompressorKind::RandKUnbiased | CompressorKind::Identity)
            {
                return bad(format!(
                    "theory-unbiased gram needs rand-k-unbiased or identity, got {}",
                    spec.kind.name()
                ));
            }
        }
        Ok(())
    }
}

/// Step sizes `η_l = 1/(L τ √(τT))`, `η_g = √τ`, `β = 1/(M √T)` for a
/// problem with smoothness `l_smooth`.
pub fn corollary_step_sizes(l_smooth: f64, local_steps: usize, rounds: usize, m: usize) -> (f64, f64, f64) {
    let tau = local_steps as f64;
    let t = rounds as f64;
    (1.0 / (l_smooth * tau * (tau * t).sqrt()), tau.sqrt(), 1.0 / (m as f64 * t.sqrt()))
}

/// Server-side state between rounds.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub x: Vec<f64>,
    pub w: SimplexPoint,
    /// Completed rounds.
    pub round: usize,
    pub seed: u64,
    pub ledger: CommLedger,
}

impl ServerState {
    pub fn new(problem: &dyn Problem, seed: u64) -> Self {
        ServerState {
            x: problem.initial_point(),
            w: SimplexPoint::uniform(problem.num_tasks()),
            round: 0,
            seed,
            ledger: CommLedger::new(),
        }
    }
}

/// `n` distinct clients out of `n_total`, uniformly, sorted.
pub fn sample_clients(rng: &mut SeededRng, n_total: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > n_total {
        return Err(FedMooError::Sampling(format!("cannot sample {n} of {n_total} clients")));
    }
    let mut c = sample(rng, n_total, n).into_vec();
    c.sort_unstable();
    Ok(c)
}
