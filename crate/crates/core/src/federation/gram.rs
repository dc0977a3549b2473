use super::{sample_clients, GramVariant};
use crate::compression::{compress, decompress, CompressorKind, CompressorSpec};
use crate::error::{FedMooError, Result};
use crate::metrics::{CommLedger, MessageKind};
use crate::objectives::Problem;
use crate::tensor::{gram, Matrix, SeededRng, StreamRole};

/// Where a Gram estimate is computed: seed, round and the ledger that
/// receives the transfers (none for offline evaluation).
pub struct GramContext<'a> {
    pub seed: u64,
    pub round: usize,
    pub ledger: Option<&'a mut CommLedger>,
}

impl GramContext<'_> {
    fn charge(&mut self, client: usize, kind: MessageKind, floats: usize) {
        if let Some(l) = self.ledger.as_deref_mut() {
            l.record(self.round, client, kind, floats as u64);
        }
    }
}

fn mean_of(mats: &[Matrix]) -> Result<Matrix> {
    let (d, m) = mats[0].shape();
    let mut out = Matrix::zeros(d, m);
    for h in mats {
        out.add_scaled(1.0, h)?;
    }
    out.scale(1.0 / mats.len() as f64);
    Ok(out)
}

fn sum_of(mats: &[Matrix]) -> Result<Matrix> {
    let (d, m) = mats[0].shape();
    let mut out = Matrix::zeros(d, m);
    for h in mats {
        out.add_scaled(1.0, h)?;
    }
    Ok(out)
}

/// Gram estimate from stochastic Jacobians the clients in `clients` have
/// already drawn. Handles every variant except [`GramVariant::TheoryUnbiased`],
/// which samples its own clients.
pub fn gram_from_jacobians(
    variant: GramVariant,
    clients: &[usize],
    jacobians: &[Matrix],
    spec: &CompressorSpec,
    ctx: &mut GramContext<'_>,
) -> Result<Matrix> {
    if clients.is_empty() || clients.len() != jacobians.len() {
        return Err(FedMooError::InvalidInput(format!(
            "{} clients with {} jacobians",
            clients.len(),
            jacobians.len()
        )));
    }
    let (d, m) = jacobians[0].shape();
    if variant == GramVariant::ExactDebug {
        for &i in clients {
            ctx.charge(i, MessageKind::JacobianUp, d * m);
        }
        let mean = mean_of(jacobians)?;
        return gram(&mean, &mean);
    }
    if variant == GramVariant::TheoryUnbiased {
        return Err(FedMooError::InvalidInput("theory-unbiased gram samples its own clients".into()));
    }
    let mut hats = Vec::with_capacity(clients.len());
    for (&i, h) in clients.iter().zip(jacobians) {
        let mut rng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::ClientCompress, i as u64);
        let c = compress(spec, h, &mut rng)?;
        ctx.charge(i, MessageKind::JacobianUp, spec.budget_floats);
        hats.push(decompress(&c)?);
    }
    match variant {
        GramVariant::OneWay => {
            let mean = mean_of(&hats)?;
            gram(&mean, &mean)
        }
        GramVariant::TwoWay => {
            let n = clients.len() as f64;
            let sum_hat = sum_of(&hats)?;
            let mut srv_rng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::ServerCompress, 0);
            let h = decompress(&compress(spec, &sum_hat, &mut srv_rng)?)?;
            let mut total = gram(&sum_hat, &sum_hat)?;
            for ((&i, full), hat) in clients.iter().zip(jacobians).zip(&hats) {
                ctx.charge(i, MessageKind::JacobianDown, spec.budget_floats);
                // Client side: own Gram plus the residual cross term, sent as one M x M matrix.
                let residual = full.sub(hat)?;
                let cross = gram(&residual, &h.sub(hat)?)?;
                let mut local = gram(full, full)?;
                local.add_scaled(1.0, &cross)?;
                local.add_scaled(1.0, &cross.transpose())?;
                ctx.charge(i, MessageKind::GramSidechannel, m * m);
                total.add_scaled(1.0, &local)?;
                total.add_scaled(-1.0, &gram(hat, hat)?)?;
            }
            total.scale(1.0 / (n * n));
            Ok(total)
        }
        GramVariant::ExactDebug | GramVariant::TheoryUnbiased => unreachable!(),
    }
}

/// Unbiased estimate `Y₁ᵀ Y₂` from two independent samples of `n_prime`
/// clients, each quantized independently with an unbiased compressor.
pub fn theory_gram(
    problem: &dyn Problem,
    x: &[f64],
    n_prime: usize,
    spec: &CompressorSpec,
    ctx: &mut GramContext<'_>,
) -> Result<Matrix> {
    if !matches!(spec.kind, CompressorKind::RandKUnbiased | CompressorKind::Identity) {
        return Err(FedMooError::Config(format!(
            "theory-unbiased gram needs an unbiased compressor, got {}",
            spec.kind.name()
        )));
    }
    let n_total = problem.num_clients();
    let mut ys = Vec::with_capacity(2);
    for set in 1..=2u64 {
        let mut srng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::TheorySampling, set);
        let clients = sample_clients(&mut srng, n_total, n_prime)?;
        let mut qs = Vec::with_capacity(clients.len());
        for i in clients {
            let idx = set * n_total as u64 + i as u64;
            let mut grng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::TheoryGrad, idx);
            let h = problem.local_stoch_jacobian(i, x, &mut grng)?;
            let mut crng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::TheoryCompress, idx);
            let c = compress(spec, &h, &mut crng)?;
            ctx.charge(i, MessageKind::JacobianUp, spec.budget_floats);
            qs.push(decompress(&c)?);
        }
        ys.push(mean_of(&qs)?);
    }
    gram(&ys[0], &ys[1])
}

/// Draws the stochastic Jacobians of `clients` at `x` from the same streams
/// the training engines use, then estimates the Gram matrix.
pub fn approx_gram_jacobian(
    variant: GramVariant,
    problem: &dyn Problem,
    x: &[f64],
    clients: &[usize],
    n_prime: usize,
    spec: &CompressorSpec,
    ctx: &mut GramContext<'_>,
) -> Result<Matrix> {
    if variant == GramVariant::TheoryUnbiased {
        return theory_gram(problem, x, n_prime, spec, ctx);
    }
    let jacobians = clients
        .iter()
        .map(|&i| {
            let mut rng = SeededRng::for_role(ctx.seed, ctx.round as u64, StreamRole::ClientGrad, i as u64);
            problem.local_stoch_jacobian(i, x, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    gram_from_jacobians(variant, clients, &jacobians, spec, ctx)
}
