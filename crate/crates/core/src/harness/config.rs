use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confidence::BoundParams;
use crate::error::{Error, Result};
use crate::estimator::KernelSpec;
use crate::protocol::SendPolicy;
use crate::rng::{self, Purpose};
use crate::scenario::{Scenario, ScenarioConfig, MIXTURE_PRESET};
use crate::topology::{self, Topology};
use crate::AgentId;

/// A complete experiment description, loaded from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub agents: usize,
    pub topology: TopologyConfig,
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioConfig,
    pub kernel: KernelSpec,
    pub bounds: BoundsConfig,
    pub policy: SendPolicy,
    /// Number of synchronous rounds `T`.
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub record: RecordConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::preset(MIXTURE_PRESET)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    /// Connected Erdős–Rényi draw. Without an explicit seed, the topology
    /// seed is derived from the run's master seed.
    Random {
        edge_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Complete,
    Edges(Vec<(AgentId, AgentId)>),
    /// Path to an edge-list file.
    EdgeList(PathBuf),
}

/// `lipschitz` defaults to the phenomenon's declared constant and `sigma`
/// to the generator's noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub delta: f64,
}

/// Which estimates end up in the record stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordConfig {
    /// Snapshot cadence in rounds; defaults to `ceil(T / 100)`. The final
    /// round is always recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<u64>,
    /// Defaults to every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentId>>,
    /// Grid indices; defaults to the whole grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
}

/// A validated, fully resolved configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: Topology,
    pub scenario: Scenario,
    pub kernel: KernelSpec,
    pub params: BoundParams,
    pub policy: SendPolicy,
    pub horizon: u64,
    pub seed: u64,
    pub every: u64,
    pub record_agents: Vec<AgentId>,
    pub record_points: Vec<usize>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. A relative `edge_list` path is taken relative
    /// to the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let TopologyConfig::EdgeList(p) = &mut cfg.topology {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// The same experiment under another master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    /// Validates everything and builds the topology and scenario. Nothing
    /// is simulated until this succeeds.
    pub fn resolve(&self) -> Result<Setup> {
        if self.agents == 0 {
            return Err(Error::Config("`agents` must be >= 1".into()));
        }
        let topology = match &self.topology {
            TopologyConfig::Random { edge_prob, seed } => {
                let seed = seed.unwrap_or_else(|| {
                    rand::Rng::random(&mut rng::stream(self.seed, 0, Purpose::Topology))
                });
                topology::random_connected(self.agents, *edge_prob, seed)?
            }
            TopologyConfig::Complete => Topology::complete(self.agents)?,
            TopologyConfig::Edges(edges) => Topology::from_edges(self.agents, edges.iter().copied())?,
            TopologyConfig::EdgeList(path) => Topology::load(path)?,
        };
        if topology.agents() != self.agents {
            return Err(Error::Config(format!(
                "topology has {} agents but the config declares {}",
                topology.agents(),
                self.agents
            )));
        }
        if !topology.is_connected() {
            return Err(Error::Config("communication graph must be connected".into()));
        }

        let scenario = self.scenario.build(self.agents, self.seed)?;
        self.kernel.validate()?;
        let params = BoundParams::new(
            self.bounds.lipschitz.unwrap_or(scenario.phenomenon.lipschitz),
            self.bounds.sigma.unwrap_or(scenario.noise_std),
            self.bounds.delta,
            scenario.phenomenon.out_dim(),
        )?;
        self.policy.validate()?;

        let every = match self.record.every {
            Some(0) => return Err(Error::Config("`record.every` must be >= 1".into())),
            Some(e) => e,
            None => self.horizon.div_ceil(100).max(1),
        };
        let record_agents = match &self.record.agents {
            Some(list) => {
                if let Some(&a) = list.iter().find(|&&a| a >= self.agents) {
                    return Err(Error::UnknownAgent {
                        agent: a,
                        agents: self.agents,
                    });
                }
                list.clone()
            }
            None => (0..self.agents).collect(),
        };
        let record_points = match &self.record.points {
            Some(list) => {
                if let Some(&x) = list.iter().find(|&&x| x >= scenario.grid.len()) {
                    return Err(Error::Config(format!(
                        "record point {x} is outside the {}-point grid",
                        scenario.grid.len()
                    )));
                }
                list.clone()
            }
            None => (0..scenario.grid.len()).collect(),
        };

        Ok(Setup {
            topology,
            scenario,
            kernel: self.kernel,
            params,
            policy: self.policy,
            horizon: self.horizon,
            seed: self.seed,
            every,
            record_agents,
            record_points,
        })
    }

    /// Desk-scale version of the 25-agent Gaussian-mixture experiment.
    pub fn mixture_preset() -> Self {
        SimConfig {
            agents: 25,
            topology: TopologyConfig::Random {
                edge_prob: 0.3,
                seed: None,
            },
            scenario: default_scenario(),
            kernel: KernelSpec {
                kind: Default::default(),
                bandwidth: 0.15,
            },
            bounds: BoundsConfig {
                lipschitz: None,
                sigma: None,
                delta: 0.001,
            },
            policy: SendPolicy {
                p_local: 0.2,
                p_acquired: 1.0,
                selector: Default::default(),
            },
            horizon: 1000,
            seed: 13,
            record: RecordConfig::default(),
            output_dir: None,
        }
    }
}
