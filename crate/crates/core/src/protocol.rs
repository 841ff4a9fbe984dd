//! Summary-tuple gossip.
//!
//! Agents never ship raw observations. They broadcast `(psi, kappa, x)`
//! snapshots of their kernel sums, tagged with origin and freeze time, and
//! keep the newest tuple per `(origin, x)`. Because kernel sums are
//! additive, summing the stored numerators and denominators gives exactly
//! the kernel estimate over the union of the observations the tuples
//! summarize, so the usual error radius applies to the pooled mass.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{beta, BoundParams};
use crate::error::{Error, Result};
use crate::estimator::{ratio, KernelSpec, LocalStats, Observation};
use crate::scenario::Grid;
use crate::AgentId;

/// Frozen kernel sums of one agent at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTuple {
    pub origin: AgentId,
    pub x_index: usize,
    /// Origin's local time when the sums were frozen.
    pub stamp: u64,
    pub kappa: f64,
    pub psi: Vec<f64>,
}

/// A tuple on the wire, as broadcast by `sender` to all of its neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    #[serde(flatten)]
    pub tuple: SummaryTuple,
}

/// Newest tuple per `(origin, x_index)`. Iteration order is first-insertion
/// order, which keeps uniform relay selection reproducible. Serializes as
/// the list of held tuples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<SummaryTuple>", into = "Vec<SummaryTuple>")]
pub struct TupleStore {
    entries: IndexMap<(AgentId, usize), SummaryTuple>,
}

impl TupleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `tuple` unless the stored tuple for its key is strictly
    /// newer. Returns whether the store now holds the incoming tuple.
    pub fn ingest(&mut self, tuple: SummaryTuple) -> bool {
        let key = (tuple.origin, tuple.x_index);
        match self.entries.get_mut(&key) {
            Some(held) if held.stamp > tuple.stamp => false,
            Some(held) => {
                *held = tuple;
                true
            }
            None => {
                self.entries.insert(key, tuple);
                true
            }
        }
    }

    pub fn get(&self, origin: AgentId, x_index: usize) -> Option<&SummaryTuple> {
        self.entries.get(&(origin, x_index))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SummaryTuple> {
        self.entries.values()
    }

    fn choose<R: Rng>(&self, rng: &mut R) -> Option<&SummaryTuple> {
        if self.entries.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.entries.len());
        self.entries.get_index(i).map(|(_, t)| t)
    }
}

impl From<Vec<SummaryTuple>> for TupleStore {
    fn from(tuples: Vec<SummaryTuple>) -> Self {
        let mut store = TupleStore::new();
        for t in tuples {
            store.ingest(t);
        }
        store
    }
}

impl From<TupleStore> for Vec<SummaryTuple> {
    fn from(store: TupleStore) -> Self {
        store.entries.into_values().collect()
    }
}

/// How a local tuple's grid point is chosen. Both selectors only consider
/// points where the agent holds data, and fall back to the whole grid while
/// it holds none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSelector {
    #[default]
    RoundRobin,
    Uniform,
}

/// Per-round send flags. Each round an agent first flips a `p_local` coin
/// to send a fresh local tuple; failing that, a `p_acquired` coin to relay
/// a stored one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SendPolicy {
    pub p_local: f64,
    pub p_acquired: f64,
    #[serde(default)]
    pub selector: PointSelector,
}

impl SendPolicy {
    pub const SILENT: SendPolicy = SendPolicy {
        p_local: 0.0,
        p_acquired: 0.0,
        selector: PointSelector::RoundRobin,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_local", self.p_local), ("p_acquired", self.p_acquired)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Network estimate held by one agent at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub estimate: Option<Vec<f64>>,
    /// Error radius; infinite without kernel mass.
    pub beta: f64,
    /// Pooled kernel mass.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    id: AgentId,
    stats: LocalStats,
    store: TupleStore,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl AgentState {
    pub fn new(id: AgentId, points: usize, out_dim: usize, rng: ChaCha8Rng) -> Self {
        AgentState {
            id,
            stats: LocalStats::new(points, out_dim),
            store: TupleStore::new(),
            rng,
            cursor: 0,
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn stats(&self) -> &LocalStats {
        &self.stats
    }

    pub fn store(&self) -> &TupleStore {
        &self.store
    }

    /// Snapshot of the live local sums at `x_index`.
    pub fn make_tuple(&self, x_index: usize, t: u64) -> SummaryTuple {
        SummaryTuple {
            origin: self.id,
            x_index,
            stamp: t,
            kappa: self.stats.kappa(x_index),
            psi: self.stats.psi(x_index).to_vec(),
        }
    }

    /// Folds an observation into the local sums and refreshes the agent's
    /// own stored tuples at every touched point.
    pub fn observe(&mut self, grid: &Grid, kernel: &KernelSpec, obs: &Observation) -> Result<()> {
        for x in self.stats.update(grid, kernel, obs)? {
            let own = self.make_tuple(x, obs.t);
            self.store.ingest(own);
        }
        Ok(())
    }

    /// Stores the carried tuple; the key is the tuple's origin, never the sender.
    pub fn ingest(&mut self, msg: &Message) -> bool {
        self.store.ingest(msg.tuple.clone())
    }

    /// At most one outgoing message for round `t`.
    pub fn select_broadcast(&mut self, policy: &SendPolicy, t: u64) -> Option<Message> {
        let points = self.stats.points();
        if points > 0 && self.rng.random_bool(policy.p_local) {
            let x = match policy.selector {
                PointSelector::RoundRobin => {
                    let x = (0..points)
                        .map(|i| (self.cursor + i) % points)
                        .find(|&x| self.stats.kappa(x) > 0.0)
                        .unwrap_or(self.cursor);
                    self.cursor = (x + 1) % points;
                    x
                }
                PointSelector::Uniform => {
                    let held: Vec<usize> = (0..points).filter(|&x| self.stats.kappa(x) > 0.0).collect();
                    if held.is_empty() {
                        self.rng.random_range(0..points)
                    } else {
                        held[self.rng.random_range(0..held.len())]
                    }
                }
            };
            let tuple = self.make_tuple(x, t);
            self.store.ingest(tuple.clone());
            return Some(Message {
                sender: self.id,
                tuple,
            });
        }
        if self.rng.random_bool(policy.p_acquired) {
            return self.store.choose(&mut self.rng).map(|tuple| Message {
                sender: self.id,
                tuple: tuple.clone(),
            });
        }
        None
    }

    /// One iteration of the exchange loop: take the local measurement, absorb
    /// the inbox, then pick what to broadcast.
    #[allow(clippy::too_many_arguments)]
    pub fn round(
        &mut self,
        grid: &Grid,
        kernel: &KernelSpec,
        obs: &Observation,
        inbox: &[Message],
        policy: &SendPolicy,
        t: u64,
    ) -> Result<Option<Message>> {
        self.observe(grid, kernel, obs)?;
        for msg in inbox {
            self.ingest(msg);
        }
        Ok(self.select_broadcast(policy, t))
    }

    /// Pooled estimate at `x_index`: live local sums plus every stored
    /// tuple at `x_index` from other origins.
    pub fn aggregate(&self, x_index: usize, params: &BoundParams, bandwidth: f64) -> Aggregate {
        let mut psi = self.stats.psi(x_index).to_vec();
        let mut kappa = self.stats.kappa(x_index);
        for t in self.store.iter() {
            if t.x_index == x_index && t.origin != self.id {
                kappa += t.kappa;
                for (acc, p) in psi.iter_mut().zip(&t.psi) {
                    *acc += p;
                }
            }
        }
        finish(psi, kappa, params, bandwidth)
    }

    /// [`AgentState::aggregate`] for every grid point in one pass over the store.
    pub fn aggregate_all(&self, params: &BoundParams, bandwidth: f64) -> Vec<Aggregate> {
        let d = self.stats.out_dim();
        let n = self.stats.points();
        let mut psi: Vec<f64> = (0..n).flat_map(|x| self.stats.psi(x).to_vec()).collect();
        let mut kappa: Vec<f64> = (0..n).map(|x| self.stats.kappa(x)).collect();
        for t in self.store.iter() {
            if t.origin != self.id {
                kappa[t.x_index] += t.kappa;
                for (acc, p) in psi[t.x_index * d..(t.x_index + 1) * d].iter_mut().zip(&t.psi) {
                    *acc += p;
                }
            }
        }
        (0..n)
            .map(|x| finish(psi[x * d..(x + 1) * d].to_vec(), kappa[x], params, bandwidth))
            .collect()
    }

    /// Which observations the aggregate at `x_index` summarizes, as
    /// `(origin, last time included)` pairs. The agent's own entry covers
    /// everything up to `now`.
    pub fn contributions(&self, x_index: usize, now: u64) -> Vec<(AgentId, u64)> {
        let mut out = vec![(self.id, now)];
        out.extend(
            self.store
                .iter()
                .filter(|t| t.x_index == x_index && t.origin != self.id)
                .map(|t| (t.origin, t.stamp)),
        );
        out
    }
}

fn finish(psi: Vec<f64>, kappa: f64, params: &BoundParams, bandwidth: f64) -> Aggregate {
    Aggregate {
        estimate: ratio(&psi, kappa),
        beta: beta(params, bandwidth, kappa),
        kappa,
    }
}
