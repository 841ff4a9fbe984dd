//! Monte Carlo and cross-check experiments built on [`Simulation`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{BoundParams, SelfNormTrace};
use crate::error::{Error, Result};
use crate::estimator::centralized_estimate;
use crate::protocol::Aggregate;
use crate::rng::mix;
use crate::AgentId;

use super::config::SimConfig;
use super::sim::{l2_distance, Simulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicas: usize,
    /// Replicas whose final estimate fell outside its error radius.
    pub violations: usize,
    /// Replicas that produced a finite radius at all.
    pub informative: usize,
    pub rate: f64,
}

/// Runs `replicas` independent copies of `cfg` (seeds derived from the
/// master seed) and counts how often `agent`'s final estimate at `x_index`
/// misses the truth by more than its error radius. Replicas without an
/// estimate count as covered.
pub fn coverage_experiment(
    cfg: &SimConfig,
    replicas: usize,
    x_index: usize,
    agent: AgentId,
) -> Result<CoverageReport> {
    if replicas == 0 {
        return Err(Error::param("replicas", "must be >= 1"));
    }
    let probe = cfg.resolve()?;
    if x_index >= probe.scenario.grid.len() {
        return Err(Error::param(
            "x_index",
            format!("{x_index} is outside the {}-point grid", probe.scenario.grid.len()),
        ));
    }
    if agent >= cfg.agents {
        return Err(Error::UnknownAgent {
            agent,
            agents: cfg.agents,
        });
    }

    let outcomes = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sim = Simulation::from_config(&cfg.with_seed(mix(cfg.seed, r as u64)))?;
            sim.run_to(cfg.horizon)?;
            let setup = sim.setup();
            let truth = setup.scenario.phenomenon.eval(setup.scenario.grid.point(x_index));
            let Aggregate { estimate, beta, .. } = sim.aggregate(agent, x_index);
            Ok(match estimate {
                Some(est) => (true, l2_distance(&est, &truth) > beta),
                None => (false, false),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let violations = outcomes.iter().filter(|o| o.1).count();
    Ok(CoverageReport {
        replicas,
        violations,
        informative: outcomes.iter().filter(|o| o.0).count(),
        rate: violations as f64 / replicas as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Largest relative difference between an aggregated estimate (or its
    /// kernel mass) and the pooled raw-data estimate over the same data.
    pub max_rel_discrepancy: f64,
    /// `(agent, grid point)` pairs compared.
    pub compared: usize,
    /// Pairs where exactly one side had an estimate.
    pub support_mismatches: usize,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Runs `cfg` to its horizon and, for every agent and grid point, compares
/// the aggregated estimate with the pooled estimate over exactly the raw
/// observations summarized by the agent's tuples (each origin's log cut
/// at the tuple's stamp).
pub fn central_compare(cfg: &SimConfig) -> Result<CompareReport> {
    let mut sim = Simulation::from_config(cfg)?.keep_log();
    sim.run_to(cfg.horizon)?;
    let setup = sim.setup();
    let log = sim.log().expect("log enabled");
    let grid = &setup.scenario.grid;

    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut mismatches = 0;
    for (k, agent) in sim.agents().iter().enumerate() {
        let aggs = sim.aggregate_all(k);
        for (x, agg) in aggs.iter().enumerate() {
            let pool = agent
                .contributions(x, sim.time())
                .into_iter()
                .flat_map(|(origin, stamp)| log[origin].iter().take_while(move |o| o.t <= stamp));
            let pooled = centralized_estimate(pool, grid.point(x), &setup.kernel)?;
            compared += 1;
            worst = worst.max(rel_diff(agg.kappa, pooled.kappa));
            match (&agg.estimate, &pooled.estimate) {
                (Some(a), Some(b)) => {
                    for (u, v) in a.iter().zip(b) {
                        worst = worst.max(rel_diff(*u, *v));
                    }
                }
                (None, None) => {}
                _ => {
                    mismatches += 1;
                    worst = f64::INFINITY;
                }
            }
        }
    }
    Ok(CompareReport {
        max_rel_discrepancy: worst,
        compared,
        support_mismatches: mismatches,
    })
}

/// Distribution of the weights `v_n` in the self-normalized experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    Uniform { low: f64, high: f64 },
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `eta ~ N(0, sigma^2 I)`, which is sigma-sub-Gaussian.
    #[default]
    Gaussian,
    /// `eta = 0`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfNormSetup {
    pub params: BoundParams,
    pub replicas: usize,
    pub steps: u64,
    pub weights: WeightDist,
    pub noise: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfNormReport {
    pub replicas: usize,
    pub violations: usize,
    pub rate: f64,
}

/// Fraction of simulated `(S, V)` traces that break the self-normalized
/// inequality at their final step.
pub fn selfnorm_experiment(setup: &SelfNormSetup) -> Result<SelfNormReport> {
    setup.params.validate()?;
    if setup.replicas == 0 {
        return Err(Error::param("replicas", "must be >= 1"));
    }
    if let WeightDist::Uniform { low, high } = setup.weights {
        if !(low < high && low.is_finite() && high.is_finite()) {
            return Err(Error::param("weights", format!("empty range [{low}, {high})")));
        }
    }
    let d = setup.params.dim;
    let sigma = setup.params.sigma;
    let violations = (0..setup.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(setup.seed, r as u64));
            let mut trace = SelfNormTrace::new(d);
            let mut eta = vec![0.0; d];
            for _ in 0..setup.steps {
                let v = match setup.weights {
                    WeightDist::Uniform { low, high } => rng.random_range(low..high),
                    WeightDist::Constant(c) => c,
                };
                for e in &mut eta {
                    *e = match setup.noise {
                        NoiseKind::Gaussian => {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            sigma * z
                        }
                        NoiseKind::Zero => 0.0,
                    };
                }
                trace.push(v, &eta).expect("matching dimension");
            }
            trace.violated(&setup.params)
        })
        .filter(|v| *v)
        .count();
    Ok(SelfNormReport {
        replicas: setup.replicas,
        violations,
        rate: violations as f64 / setup.replicas as f64,
    })
}

/// Root-mean-square error of a whole-grid model. Points without an
/// estimate count as predicting zero.
pub fn grid_rmse(aggs: &[Aggregate], truth: &[Vec<f64>]) -> f64 {
    let n = aggs.len().max(1) as f64;
    let sum: f64 = aggs
        .iter()
        .zip(truth)
        .map(|(a, t)| match &a.estimate {
            Some(e) => l2_distance(e, t).powi(2),
            None => t.iter().map(|v| v * v).sum(),
        })
        .sum();
    (sum / n).sqrt()
}
