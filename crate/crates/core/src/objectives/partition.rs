use crate::error::{FedMooError, Result};
use crate::tensor::SeededRng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Splits sample indices across `n_clients` clients with label mixes drawn
/// from `Dir(alpha · q)`, where `q` is the global label distribution.
///
/// Every client receives `floor(len / n_clients)` samples; the remainder is
/// left unassigned. Per-client class counts follow the drawn proportions by
/// largest remainder and are topped up from the classes that still have
/// samples when a class runs out.
pub fn dirichlet_partition(
    labels: &[usize],
    n_clients: usize,
    alpha: f64,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 {
        return Err(FedMooError::Partition("need at least one client".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(FedMooError::Partition(format!("alpha {alpha} must be > 0")));
    }
    if labels.len() < n_clients {
        return Err(FedMooError::Partition(format!(
            "{} samples cannot fill {n_clients} clients",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (idx, &y) in labels.iter().enumerate() {
        pools[y].push(idx);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(rng);
    }
    let total = labels.len() as f64;
    let global: Vec<f64> = pools.iter().map(|p| p.len() as f64 / total).collect();
    let per_client = labels.len() / n_clients;

    let mut parts = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        let props = draw_proportions(&global, alpha, rng)?;
        let available: Vec<usize> = pools.iter().map(|p| p.len()).collect();
        let counts = allocate(&props, &available, per_client);
        let mut part = Vec::with_capacity(per_client);
        for (class, &c) in counts.iter().enumerate() {
            let pool = &mut pools[class];
            part.extend(pool.drain(pool.len() - c..));
        }
        part.sort_unstable();
        parts.push(part);
    }
    Ok(parts)
}

fn draw_proportions(global: &[f64], alpha: f64, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let mut draws = vec![0.0; global.len()];
    for (d, q) in draws.iter_mut().zip(global) {
        if *q > 0.0 {
            let gamma = Gamma::new(alpha * q, 1.0)
                .map_err(|e| FedMooError::Partition(format!("gamma({}): {e}", alpha * q)))?;
            *d = gamma.sample(rng);
        }
    }
    let s: f64 = draws.iter().sum();
    if s > 0.0 && s.is_finite() {
        return Ok(draws.iter().map(|d| d / s).collect());
    }
    // Every draw underflowed; put the mass on one class chosen by q.
    let mut u: f64 = rng.random();
    let mut out = vec![0.0; global.len()];
    for (k, q) in global.iter().enumerate() {
        if u < *q || k == global.len() - 1 {
            out[k] = 1.0;
            break;
        }
        u -= q;
    }
    Ok(out)
}

fn allocate(props: &[f64], available: &[usize], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let assigned: usize = counts.iter().sum();
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    let mut deficit = 0;
    for (c, &a) in counts.iter_mut().zip(available) {
        if *c > a {
            deficit += *c - a;
            *c = a;
        }
    }
    let mut by_pref: Vec<usize> = (0..props.len()).collect();
    by_pref.sort_by(|&a, &b| props[b].total_cmp(&props[a]).then(available[b].cmp(&available[a])).then(a.cmp(&b)));
    while deficit > 0 {
        let mut progressed = false;
        for &k in &by_pref {
            if deficit == 0 {
                break;
            }
            if counts[k] < available[k] {
                counts[k] += 1;
                deficit -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    counts
}

/// Mean total-variation distance between each client's label mix and the
/// global label mix of `labels`.
pub fn partition_heterogeneity(labels: &[usize], parts: &[Vec<usize>]) -> f64 {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut global = vec![0.0; n_classes];
    for &y in labels {
        global[y] += 1.0 / labels.len() as f64;
    }
    let tv: Vec<f64> = parts
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| {
            let mut mix = vec![0.0; n_classes];
            for &idx in p {
                mix[labels[idx]] += 1.0 / p.len() as f64;
            }
            0.5 * mix.iter().zip(&global).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .collect();
    if tv.is_empty() {
        0.0
    } else {
        tv.iter().sum::<f64>() / tv.len() as f64
    }
}
