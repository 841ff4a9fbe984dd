//! Undirected communication graphs over agents `0..m`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::AgentId;

/// Redraws allowed before [`random_connected`] gives up.
pub const MAX_REDRAWS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    agents: usize,
    /// Normalized `(low, high)` pairs.
    edges: BTreeSet<(AgentId, AgentId)>,
    adjacency: Vec<Vec<AgentId>>,
}

impl Topology {
    /// Builds a graph from an edge list. Rejects self-loops and unknown
    /// agents; duplicate and reversed pairs collapse. Connectivity is not
    /// checked here, see [`Topology::connected`].
    pub fn from_edges<I>(agents: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (AgentId, AgentId)>,
    {
        if agents == 0 {
            return Err(Error::Topology("a network needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= agents || b >= agents {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) references an agent outside 0..{agents}"
                )));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop on agent {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); agents];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Topology {
            agents,
            edges: set,
            adjacency,
        })
    }

    /// Like [`Topology::from_edges`] but also requires connectivity.
    pub fn connected<I>(agents: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (AgentId, AgentId)>,
    {
        let top = Self::from_edges(agents, edges)?;
        if !top.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(top)
    }

    pub fn complete(agents: usize) -> Result<Self> {
        Self::from_edges(
            agents,
            (0..agents).flat_map(|a| (a + 1..agents).map(move |b| (a, b))),
        )
    }

    pub fn path(agents: usize) -> Result<Self> {
        Self::from_edges(agents, (1..agents).map(|a| (a - 1, a)))
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbours of `agent`.
    pub fn neighbors(&self, agent: AgentId) -> Result<&[AgentId]> {
        self.adjacency
            .get(agent)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownAgent {
                agent,
                agents: self.agents,
            })
    }

    /// Breadth-first reachability from agent 0. A single agent is connected.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(a) = queue.pop_front() {
            for &b in &self.adjacency[a] {
                if !seen[b] {
                    seen[b] = true;
                    reached += 1;
                    queue.push_back(b);
                }
            }
        }
        reached == self.agents
    }

    /// One `i j` pair per line, preceded by an `# agents M` header so
    /// isolated trailing agents survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# agents {}\n", self.agents);
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    /// Parses the edge-list format. Without an `# agents M` header the agent
    /// count is one past the largest id. Other `#` lines are comments.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut agents = None;
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut words = rest.split_whitespace();
                if words.next() == Some("agents") {
                    let m = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| {
                        Error::Topology(format!("line {}: malformed agents header", n + 1))
                    })?;
                    agents = Some(m);
                }
                continue;
            }
            let ids: Vec<_> = line.split_whitespace().map(str::parse::<usize>).collect();
            match ids.as_slice() {
                [Ok(a), Ok(b)] => edges.push((*a, *b)),
                _ => {
                    return Err(Error::Topology(format!(
                        "line {}: expected two agent ids, got `{line}`",
                        n + 1
                    )))
                }
            }
        }
        let agents = agents.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(a, b)| a.max(b) + 1)
                .max()
                .unwrap_or(1)
        });
        Self::from_edges(agents, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Erdős–Rényi `G(m, p)` conditioned on connectivity. Attempt `i` draws from
/// ChaCha stream `i` of `seed`, so the result depends only on the inputs.
pub fn random_connected(agents: usize, edge_prob: f64, seed: u64) -> Result<Topology> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::param(
            "edge_prob",
            format!("must lie in [0, 1], got {edge_prob}"),
        ));
    }
    if agents == 0 {
        return Err(Error::Topology("a network needs at least one agent".into()));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut edges = Vec::new();
        for a in 0..agents {
            for b in a + 1..agents {
                if rng.random_bool(edge_prob) {
                    edges.push((a, b));
                }
            }
        }
        let top = Topology::from_edges(agents, edges)?;
        if top.is_connected() {
            return Ok(top);
        }
    }
    Err(Error::Topology(format!(
        "no connected G({agents}, {edge_prob}) graph after {MAX_REDRAWS} draws"
    )))
}
