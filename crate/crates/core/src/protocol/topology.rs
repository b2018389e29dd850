use super::ProtocolError;
use rand::Rng;
use std::collections::BTreeSet;

/// Undirected, connected communication graph over robots `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, ProtocolError> {
        if n == 0 {
            return Err(ProtocolError::InvalidTopology("no nodes".into()));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(ProtocolError::InvalidTopology(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(ProtocolError::InvalidTopology(format!("self-loop at node {i}")));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        let topo = Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        if !topo.is_connected() {
            return Err(ProtocolError::InvalidTopology("graph is not connected".into()));
        }
        Ok(topo)
    }

    pub fn complete(n: usize) -> Result<Self, ProtocolError> {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self, ProtocolError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self, ProtocolError> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::new(n, &edges)
    }

    /// Erdos-Renyi `G(n, p)` graph, redrawn until connected.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self, ProtocolError> {
        if !(p > 0.0 && p <= 1.0) && n > 1 {
            return Err(ProtocolError::InvalidTopology(format!("edge probability {p} must be in (0, 1]")));
        }
        loop {
            let edges: Vec<_> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|_| rng.random::<f64>() < p)
                .collect();
            if let Ok(t) = Self::new(n, &edges) {
                return Ok(t);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Same graph with nodes renamed `i -> perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut neighbors = vec![Vec::new(); self.len()];
        for (i, ns) in self.neighbors.iter().enumerate() {
            let mut mapped: Vec<usize> = ns.iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            neighbors[perm[i]] = mapped;
        }
        Self { neighbors }
    }
}

/// Links that carry messages in one round: the topology minus dropped edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveLinks {
    neighbors: Vec<Vec<usize>>,
}

impl ActiveLinks {
    pub fn all(topology: &Topology) -> Self {
        Self {
            neighbors: topology.neighbors.clone(),
        }
    }

    /// Drops each undirected edge independently with probability `p`; a
    /// dropped edge is silent in both directions.
    pub fn sample<R: Rng + ?Sized>(topology: &Topology, p: f64, rng: &mut R) -> Self {
        if p <= 0.0 {
            return Self::all(topology);
        }
        let mut neighbors = vec![Vec::new(); topology.len()];
        for (i, j) in topology.edges() {
            if rng.random::<f64>() >= p {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for ns in &mut neighbors {
            ns.sort_unstable();
        }
        Self { neighbors }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}
