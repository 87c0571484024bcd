use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::SecAggError;

/// Undirected neighbor graph over clients `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborGraph {
    adjacency: Vec<BTreeSet<u32>>,
}

impl NeighborGraph {
    /// Largest population that gets a complete graph by default.
    pub const COMPLETE_UP_TO: u32 = 100;

    pub fn complete(n: u32) -> Result<Self, SecAggError> {
        if n < 2 {
            return Err(SecAggError::Params(format!("need at least 2 clients, got {n}")));
        }
        let adjacency = (1..=n)
            .map(|i| (1..=n).filter(|&j| j != i).collect())
            .collect();
        Ok(Self { adjacency })
    }

    /// Harary graph `H_{k,n}`: `k`-regular (for even `k`, or odd `k` with
    /// even `n`) and `k`-connected.
    pub fn harary(n: u32, degree: u32) -> Result<Self, SecAggError> {
        if degree == 0 || degree >= n {
            return Err(SecAggError::Params(format!(
                "degree {degree} must lie in 1..{n}"
            )));
        }
        if degree == n - 1 {
            return Self::complete(n);
        }
        if degree % 2 == 1 && n % 2 == 1 {
            return Err(SecAggError::Params(format!(
                "odd degree {degree} needs an even client count, got {n}"
            )));
        }
        let mut adjacency = vec![BTreeSet::new(); n as usize];
        let mut link = |a: u32, b: u32| {
            adjacency[a as usize].insert(b + 1);
            adjacency[b as usize].insert(a + 1);
        };
        for i in 0..n {
            for step in 1..=degree / 2 {
                link(i, (i + step) % n);
            }
            if degree % 2 == 1 {
                link(i, (i + n / 2) % n);
            }
        }
        Ok(Self { adjacency })
    }

    /// Complete graph up to [`Self::COMPLETE_UP_TO`] clients, otherwise a
    /// Harary graph of degree `min(n-1, 2·ceil(log2 n) + 2)`.
    pub fn default_for(n: u32) -> Result<Self, SecAggError> {
        if n <= Self::COMPLETE_UP_TO {
            Self::complete(n)
        } else {
            let log = 32 - (n - 1).leading_zeros();
            Self::harary(n, (n - 1).min(2 * log + 2))
        }
    }

    pub fn len(&self) -> u32 {
        self.adjacency.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency
            .get((i as usize).wrapping_sub(1))
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn are_neighbors(&self, i: u32, j: u32) -> bool {
        self.adjacency
            .get((i as usize).wrapping_sub(1))
            .is_some_and(|s| s.contains(&j))
    }

    pub fn min_degree(&self) -> u32 {
        self.adjacency.iter().map(|s| s.len() as u32).min().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::from([1u32]);
        let mut queue = VecDeque::from([1u32]);
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen.len() == self.adjacency.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_degrees() {
        let g = NeighborGraph::complete(4).unwrap();
        assert_eq!(g.min_degree(), 3);
        assert_eq!(g.neighbors(2).collect::<Vec<_>>(), [1, 3, 4]);
        assert!(g.is_connected());
    }

    #[test]
    fn harary_is_regular_and_connected() {
        for (n, k) in [(10, 4), (10, 3), (128, 16), (11, 6)] {
            let g = NeighborGraph::harary(n, k).unwrap();
            assert!((1..=n).all(|i| g.neighbors(i).count() as u32 == k), "n={n} k={k}");
            assert!((1..=n).all(|i| g.neighbors(i).all(|j| g.are_neighbors(j, i))));
            assert!(g.is_connected());
        }
        assert!(NeighborGraph::harary(11, 3).is_err());
        assert!(NeighborGraph::harary(5, 5).is_err());
    }

    #[test]
    fn default_switches_to_sparse_above_cutoff() {
        assert_eq!(NeighborGraph::default_for(100).unwrap().min_degree(), 99);
        // ceil(log2 200) = 8
        assert_eq!(NeighborGraph::default_for(200).unwrap().min_degree(), 18);
    }
}
