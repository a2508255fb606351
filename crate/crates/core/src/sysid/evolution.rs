use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Forward;
use crate::{rng, Error, Result};

/// (μ+λ) evolution strategy with log-normal step-size self-adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsSettings {
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    /// Initial mutation step in log-stiffness.
    pub sigma0: f64,
    pub seed: u64,
}

impl Default for EsSettings {
    fn default() -> Self {
        Self {
            mu: 8,
            lambda: 32,
            generations: 25,
            sigma0: 0.5,
            seed: 0,
        }
    }
}

struct Individual {
    log_x: Vec<f64>,
    sigma: f64,
    fitness: f64,
}

/// Returns the best parameter vector found and the generation count.
pub(super) fn search(fwd: &mut Forward, settings: &EsSettings, horizon: usize) -> Result<(Vec<f64>, usize)> {
    if settings.mu == 0 || settings.lambda == 0 || !(settings.sigma0 > 0.0) {
        return Err(Error::config("evolution strategy needs mu, lambda, sigma0 > 0"));
    }
    let n = fwd.dim();
    let tau = 1.0 / (n as f64).sqrt().max(1.0);
    let mut r = rng::seeded(settings.seed);

    let evaluate = |fwd: &mut Forward, log_x: &[f64]| -> Result<f64> {
        let x: Vec<f64> = log_x.iter().map(|v| v.exp()).collect();
        match fwd.objective(&x, horizon) {
            Ok(f) if f.is_finite() => Ok(f),
            Ok(_) | Err(Error::Numerical { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let mut pop = Vec::with_capacity(settings.mu + settings.lambda);
    for i in 0..settings.mu {
        let log_x: Vec<f64> = (0..n)
            .map(|j| {
                if i == 0 {
                    0.0
                } else {
                    let (lo, hi) = fwd.bounds(j);
                    r.random_range(lo.ln()..=hi.ln())
                }
            })
            .collect();
        let fitness = evaluate(fwd, &log_x)?;
        pop.push(Individual {
            log_x,
            sigma: settings.sigma0,
            fitness,
        });
    }

    for _ in 0..settings.generations {
        for _ in 0..settings.lambda {
            let parent = &pop[r.random_range(0..settings.mu)];
            let z: f64 = r.sample(StandardNormal);
            let sigma = parent.sigma * (tau * z).exp();
            let log_x: Vec<f64> = parent
                .log_x
                .clone()
                .into_iter()
                .enumerate()
                .map(|(j, v)| {
                    let step: f64 = r.sample(StandardNormal);
                    let (lo, hi) = fwd.bounds(j);
                    (v + sigma * step).clamp(lo.ln(), hi.ln())
                })
                .collect();
            let fitness = evaluate(fwd, &log_x)?;
            pop.push(Individual { log_x, sigma, fitness });
        }
        pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        pop.truncate(settings.mu);
    }
    let best = pop
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("population is never empty");
    Ok((best.log_x.iter().map(|v| v.exp()).collect(), settings.generations))
}
