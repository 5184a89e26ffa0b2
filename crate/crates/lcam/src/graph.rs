//! Compact undirected graph storage shared by the realizer, the exact
//! matcher, and the oracle.

use serde::{Deserialize, Serialize};

/// CSR adjacency. Neighbor lists are kept sorted so serialized instances
/// are canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjGraph {
    offsets: Vec<usize>,
    adj: Vec<u32>,
}

impl AdjGraph {
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> AdjGraph {
        let mut deg = vec![0usize; n];
        for &(u, v) in edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for d in &deg {
            acc += d;
            offsets.push(acc);
        }
        let mut cursor = offsets.clone();
        let mut adj = vec![0u32; 2 * edges.len()];
        for &(u, v) in edges {
            adj[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            adj[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        let mut g = AdjGraph { offsets, adj };
        g.sort_lists();
        g
    }

    pub fn from_parts(offsets: Vec<usize>, adj: Vec<u32>) -> AdjGraph {
        AdjGraph { offsets, adj }
    }

    fn sort_lists(&mut self) {
        for v in 0..self.n() {
            let (lo, hi) = (self.offsets[v], self.offsets[v + 1]);
            self.adj[lo..hi].sort_unstable();
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.adj.len() / 2
    }

    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n() as u32)
            .flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u, v)))
            .filter(|&(u, v)| u < v)
    }

    /// Self-loops or repeated neighbors disqualify a simple graph. Lists
    /// are sorted, so duplicates are adjacent.
    pub fn simplicity_violations(&self) -> Vec<(u32, u32)> {
        let mut bad = Vec::new();
        for v in 0..self.n() as u32 {
            let ns = self.neighbors(v);
            for (i, &u) in ns.iter().enumerate() {
                if u == v {
                    bad.push((v, u));
                } else if i > 0 && ns[i - 1] == u {
                    bad.push((v, u));
                }
            }
        }
        bad
    }

    /// Proper 2-coloring by BFS, or None when an odd cycle exists.
    pub fn two_color(&self) -> Option<Vec<u8>> {
        let n = self.n();
        let mut color = vec![u8::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n as u32 {
            if color[start as usize] != u8::MAX {
                continue;
            }
            color[start as usize] = 0;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                let c = color[v as usize];
                for &u in self.neighbors(v) {
                    if color[u as usize] == u8::MAX {
                        color[u as usize] = 1 - c;
                        queue.push_back(u);
                    } else if color[u as usize] == c {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }
}
