use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::Observation;
use crate::protocol::{Aggregate, AgentState, Message};
use crate::rng::{self, Purpose};
use crate::AgentId;

use super::config::{SimConfig, Setup};

/// One row of simulation output: what `agent` believes at grid point
/// `x_index` after round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub t: u64,
    pub agent: AgentId,
    pub x_index: usize,
    pub x: Vec<f64>,
    pub estimate: Option<Vec<f64>>,
    #[serde(with = "inf_as_str")]
    pub beta: f64,
    pub kappa: f64,
    pub truth: Vec<f64>,
    pub abs_error: Option<f64>,
}

/// JSON has no infinity; an absent bound is written as the string `"inf"`.
mod inf_as_str {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Synchronous round-based network simulation. Messages broadcast in round
/// `t` reach every neighbour's inbox at round `t + 1`.
pub struct Simulation {
    setup: Setup,
    agents: Vec<AgentState>,
    xi_rngs: Vec<ChaCha8Rng>,
    eta_rngs: Vec<ChaCha8Rng>,
    pending: Vec<Vec<Message>>,
    t: u64,
    log: Option<Vec<Vec<Observation>>>,
    sent: Option<Vec<(u64, Message)>>,
}

impl Simulation {
    pub fn new(setup: Setup) -> Self {
        let m = setup.topology.agents();
        let points = setup.scenario.grid.len();
        let d = setup.params.dim;
        let seed = setup.seed;
        Simulation {
            agents: (0..m)
                .map(|k| AgentState::new(k, points, d, rng::stream(seed, k, Purpose::Protocol)))
                .collect(),
            xi_rngs: (0..m).map(|k| rng::stream(seed, k, Purpose::Explanatory)).collect(),
            eta_rngs: (0..m).map(|k| rng::stream(seed, k, Purpose::Noise)).collect(),
            pending: vec![Vec::new(); m],
            t: 0,
            log: None,
            sent: None,
            setup,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Ok(Self::new(cfg.resolve()?))
    }

    /// Keep every raw observation, for checks against the pooled estimate.
    pub fn keep_log(mut self) -> Self {
        self.log = Some(vec![Vec::new(); self.agents.len()]);
        self
    }

    /// Keep every broadcast message together with its round.
    pub fn keep_messages(mut self) -> Self {
        self.sent = Some(Vec::new());
        self
    }

    pub fn setup(&self) -> &Setup {
        &self.setup
    }

    /// Last completed round.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn log(&self) -> Option<&[Vec<Observation>]> {
        self.log.as_deref()
    }

    pub fn messages(&self) -> Option<&[(u64, Message)]> {
        self.sent.as_deref()
    }

    pub fn step(&mut self) -> Result<()> {
        self.t += 1;
        let t = self.t;
        let inboxes = std::mem::replace(&mut self.pending, vec![Vec::new(); self.agents.len()]);
        let Setup {
            topology,
            scenario,
            kernel,
            policy,
            ..
        } = &self.setup;

        let mut outgoing = Vec::with_capacity(self.agents.len());
        for (k, agent) in self.agents.iter_mut().enumerate() {
            let obs = scenario.samplers[k].sample(
                &scenario.phenomenon,
                &mut self.xi_rngs[k],
                &mut self.eta_rngs[k],
                k,
                t,
            );
            let out = agent.round(&scenario.grid, kernel, &obs, &inboxes[k], policy, t)?;
            if let Some(log) = &mut self.log {
                log[k].push(obs);
            }
            outgoing.push(out);
        }

        for (k, msg) in outgoing.into_iter().enumerate() {
            let Some(msg) = msg else { continue };
            for &j in topology.neighbors(k)? {
                self.pending[j].push(msg.clone());
            }
            if let Some(sent) = &mut self.sent {
                sent.push((t, msg));
            }
        }
        Ok(())
    }

    pub fn run_to(&mut self, horizon: u64) -> Result<()> {
        while self.t < horizon {
            self.step()?;
        }
        Ok(())
    }

    pub fn aggregate(&self, agent: AgentId, x_index: usize) -> Aggregate {
        self.agents[agent].aggregate(x_index, &self.setup.params, self.setup.kernel.bandwidth)
    }

    pub fn aggregate_all(&self, agent: AgentId) -> Vec<Aggregate> {
        self.agents[agent].aggregate_all(&self.setup.params, self.setup.kernel.bandwidth)
    }

    fn is_snapshot(&self) -> bool {
        self.t.is_multiple_of(self.setup.every) || self.t == self.setup.horizon
    }

    /// Records for the configured agents and grid points at the current time.
    pub fn snapshot(&self) -> Vec<EstimateRecord> {
        let grid = &self.setup.scenario.grid;
        let ph = &self.setup.scenario.phenomenon;
        let truth: Vec<Vec<f64>> = self
            .setup
            .record_points
            .iter()
            .map(|&x| ph.eval(grid.point(x)))
            .collect();
        let mut out = Vec::new();
        for &agent in &self.setup.record_agents {
            let aggs = self.aggregate_all(agent);
            for (&x, truth) in self.setup.record_points.iter().zip(&truth) {
                let a = &aggs[x];
                out.push(EstimateRecord {
                    t: self.t,
                    agent,
                    x_index: x,
                    x: grid.point(x).coords().to_vec(),
                    abs_error: a.estimate.as_ref().map(|e| l2_distance(e, truth)),
                    estimate: a.estimate.clone(),
                    beta: a.beta,
                    kappa: a.kappa,
                    truth: truth.clone(),
                });
            }
        }
        out
    }

    /// Runs to the horizon, handing snapshot records to `sink` as they are
    /// produced.
    pub fn run_with<F: FnMut(Vec<EstimateRecord>) -> Result<()>>(&mut self, mut sink: F) -> Result<()> {
        while self.t < self.setup.horizon {
            self.step()?;
            if self.is_snapshot() {
                sink(self.snapshot())?;
            }
        }
        Ok(())
    }
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Runs the configured experiment and collects every snapshot record.
pub fn run_simulation(cfg: &SimConfig) -> Result<Vec<EstimateRecord>> {
    let mut sim = Simulation::from_config(cfg)?;
    let mut records = Vec::new();
    sim.run_with(|batch| {
        records.extend(batch);
        Ok(())
    })?;
    Ok(records)
}
