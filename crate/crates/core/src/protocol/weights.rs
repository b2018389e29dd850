use super::{ActiveLinks, Topology};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Equal weight on every valid member of the closed neighbourhood.
    #[default]
    UniformClosed,
    /// `1 / (1 + max(d_i, d_j))` per valid neighbour, remainder on self.
    Metropolis,
}

/// Sparse row-stochastic mixing weights for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    /// Non-zero `(j, w_ij)` entries of row `i`, sorted by `j`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Weights over `(N_i ∪ {i}) ∩ S` for every node, using all links.
pub fn compute_weights(topology: &Topology, valid: &[bool], scheme: WeightScheme) -> WeightMatrix {
    compute_weights_on(topology, &ActiveLinks::all(topology), valid, scheme)
}

/// As [`compute_weights`], restricted to the links active this round.
/// Metropolis weights still use the degrees of the full topology.
pub fn compute_weights_on(
    topology: &Topology,
    links: &ActiveLinks,
    valid: &[bool],
    scheme: WeightScheme,
) -> WeightMatrix {
    let n = topology.len();
    let rows = (0..n)
        .map(|i| {
            let mut members: Vec<usize> = links.neighbors(i).iter().copied().filter(|&j| valid[j]).collect();
            match scheme {
                WeightScheme::UniformClosed => {
                    if valid[i] {
                        members.push(i);
                        members.sort_unstable();
                    }
                    let w = 1.0 / members.len() as f64;
                    members.into_iter().map(|j| (j, w)).collect()
                }
                WeightScheme::Metropolis => {
                    let di = topology.degree(i);
                    let mut row: Vec<(usize, f64)> = members
                        .iter()
                        .map(|&j| (j, 1.0 / (1 + di.max(topology.degree(j))) as f64))
                        .collect();
                    let total: f64 = row.iter().map(|e| e.1).sum();
                    if valid[i] {
                        row.push((i, 1.0 - total));
                        row.sort_unstable_by_key(|e| e.0);
                    } else if total > 0.0 {
                        for e in &mut row {
                            e.1 /= total;
                        }
                    }
                    row
                }
            }
        })
        .collect();
    WeightMatrix { rows }
}
