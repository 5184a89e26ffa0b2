//! Ground truth: exact maximum matching with a König cover certificate,
//! a brute-force oracle for tiny graphs, and the YES/NO matching-gap
//! experiment.

use crate::construction::{rat, ConstructionParams, Rat, World};
use crate::graph::AdjGraph;
use crate::realizer::{assemble_instance, RealizeError};
use crate::report::{round_sig, Csv};
use crate::rng;
use num::rational::Ratio;
use num::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

const UNMATCHED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExactError {
    #[error("graph contains an odd cycle")]
    NotBipartite,
    #[error("graph has {n} vertices; brute force is capped at {cap}")]
    TooLarge { n: usize, cap: usize },
}

#[derive(Debug, Clone)]
pub struct MatchingResult {
    /// Matched pairs as (color-0 vertex, color-1 vertex).
    pub matching: Vec<(u32, u32)>,
    pub size: usize,
    /// König certificate: a vertex cover of the same size.
    pub cover: Vec<u32>,
}

/// Maximum bipartite matching via Hopcroft–Karp, plus the König cover read
/// off the final alternating-reachability partition. The cover is checked
/// against the matching on every call.
pub fn hopcroft_karp(g: &AdjGraph) -> Result<MatchingResult, ExactError> {
    let color = g.two_color().ok_or(ExactError::NotBipartite)?;
    let n = g.n();
    let left: Vec<u32> = (0..n as u32).filter(|&v| color[v as usize] == 0).collect();

    let mut pair = vec![UNMATCHED; n];
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();

    loop {
        // BFS phase: layer left vertices by alternating distance from the
        // free ones.
        queue.clear();
        for &u in &left {
            if pair[u as usize] == UNMATCHED {
                dist[u as usize] = 0;
                queue.push_back(u);
            } else {
                dist[u as usize] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                let w = pair[v as usize];
                if w == UNMATCHED {
                    found = true;
                } else if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        for &u in &left {
            if pair[u as usize] == UNMATCHED {
                augment(g, u, &mut pair, &mut dist);
            }
        }
    }

    // Alternating reachability from free left vertices; at termination
    // there is no augmenting path, so Z yields a König cover.
    let mut in_z = vec![false; n];
    queue.clear();
    for &u in &left {
        if pair[u as usize] == UNMATCHED {
            in_z[u as usize] = true;
            queue.push_back(u);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !in_z[v as usize] {
                in_z[v as usize] = true;
                let w = pair[v as usize];
                if w != UNMATCHED && !in_z[w as usize] {
                    in_z[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let mut cover: Vec<u32> = Vec::new();
    for v in 0..n as u32 {
        let is_left = color[v as usize] == 0;
        if (is_left && !in_z[v as usize] && g.degree(v) > 0)
            || (!is_left && in_z[v as usize])
        {
            cover.push(v);
        }
    }

    let matching: Vec<(u32, u32)> = left
        .iter()
        .filter(|&&u| pair[u as usize] != UNMATCHED)
        .map(|&u| (u, pair[u as usize]))
        .collect();
    let size = matching.len();

    assert_eq!(cover.len(), size, "König certificate size mismatch");
    let in_cover: std::collections::HashSet<u32> = cover.iter().copied().collect();
    for (u, v) in g.edges() {
        assert!(
            in_cover.contains(&u) || in_cover.contains(&v),
            "edge ({u},{v}) not covered"
        );
    }

    Ok(MatchingResult {
        matching,
        size,
        cover,
    })
}

fn augment(g: &AdjGraph, u: u32, pair: &mut [u32], dist: &mut [u32]) -> bool {
    for &v in g.neighbors(u) {
        let w = pair[v as usize];
        if w == UNMATCHED
            || (dist[w as usize] == dist[u as usize] + 1 && augment(g, w, pair, dist))
        {
            pair[v as usize] = u;
            pair[u as usize] = v;
            return true;
        }
    }
    dist[u as usize] = u32::MAX;
    false
}

pub const BRUTE_FORCE_CAP: usize = 16;

/// Exact matching number by memoized enumeration; the independent oracle
/// for `hopcroft_karp` on tiny graphs.
pub fn brute_force_matching(g: &AdjGraph) -> Result<usize, ExactError> {
    let n = g.n();
    if n > BRUTE_FORCE_CAP {
        return Err(ExactError::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let mut memo = vec![u8::MAX; 1usize << n];
    Ok(solve(g, (1u32 << n) - 1, &mut memo) as usize)
}

fn solve(g: &AdjGraph, mask: u32, memo: &mut [u8]) -> u8 {
    if mask == 0 {
        return 0;
    }
    if memo[mask as usize] != u8::MAX {
        return memo[mask as usize];
    }
    let v = mask.trailing_zeros();
    let rest = mask & !(1 << v);
    // Either v stays unmatched, or it pairs with one available neighbor.
    let mut best = solve(g, rest, memo);
    for &u in g.neighbors(v) {
        if mask & (1 << u) != 0 {
            best = best.max(1 + solve(g, rest & !(1 << u), memo));
        }
    }
    memo[mask as usize] = best;
    best
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GapError {
    #[error("gap experiment requires k >= 8, got k={0}")]
    EpsilonTooLarge(u32),
    #[error(transparent)]
    Realize(#[from] RealizeError),
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct GapRow {
    pub trial: u64,
    pub world: World,
    pub mu: usize,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct GapReport {
    pub trials: u64,
    pub yes_lower_bound: f64,
    pub no_upper_bound: f64,
    pub nominal_gap: f64,
    pub min_yes: usize,
    pub max_no: usize,
    pub no_bound_violations: u64,
    pub rows: Vec<GapRow>,
}

/// The YES lower bound (2/eps + 1 - 4 eps^2) N/4.
pub fn yes_matching_bound(params: &ConstructionParams) -> Rat {
    let k = params.k as i64;
    (rat(2 * k) + rat(1) - Ratio::new(4, k * k)) * Ratio::new(params.n_scale as i64, 4)
}

/// The NO upper bound (2/eps + 4 eps) N/4, which the König argument makes
/// deterministic: every NO-world edge touches a B or D vertex.
pub fn no_matching_bound(params: &ConstructionParams) -> Rat {
    let k = params.k as i64;
    (rat(2 * k) + Ratio::new(4, k)) * Ratio::new(params.n_scale as i64, 4)
}

/// Generates fresh YES and NO instances and compares their exact matching
/// sizes against the two bounds.
pub fn matching_gap_experiment(
    params: &ConstructionParams,
    trials: u64,
    master_seed: u64,
) -> Result<GapReport, GapError> {
    if params.k < 8 {
        return Err(GapError::EpsilonTooLarge(params.k));
    }
    let yes_bound = yes_matching_bound(params).to_f64().unwrap();
    let no_bound = no_matching_bound(params).to_f64().unwrap();

    let jobs: Vec<(u64, World)> = (0..trials)
        .flat_map(|t| [(t, World::Yes), (t, World::No)])
        .collect();
    let mut rows: Vec<GapRow> = jobs
        .into_par_iter()
        .map(|(trial, world)| {
            let domain = match world {
                World::Yes => "gap-yes",
                World::No => "gap-no",
            };
            let seed = rng::seed_to_u64(rng::derive_seed(master_seed, domain, trial));
            let p = params.with_world(world).with_seed(seed);
            let inst = assemble_instance(&p)?;
            let mu = hopcroft_karp(inst.graph())
                .expect("generated instances are bipartite")
                .size;
            let (bound, slack) = match world {
                World::Yes => (yes_bound, mu as f64 - yes_bound),
                World::No => (no_bound, no_bound - mu as f64),
            };
            Ok(GapRow {
                trial,
                world,
                mu,
                bound: round_sig(bound, 12),
                slack: round_sig(slack, 12),
            })
        })
        .collect::<Result<Vec<_>, GapError>>()?;
    rows.sort_by_key(|r| (r.trial, r.world != World::Yes));

    let min_yes = rows
        .iter()
        .filter(|r| r.world == World::Yes)
        .map(|r| r.mu)
        .min()
        .unwrap_or(0);
    let max_no = rows
        .iter()
        .filter(|r| r.world == World::No)
        .map(|r| r.mu)
        .max()
        .unwrap_or(0);
    let no_bound_violations = rows
        .iter()
        .filter(|r| r.world == World::No && (r.mu as f64) > no_bound)
        .count() as u64;

    Ok(GapReport {
        trials,
        yes_lower_bound: round_sig(yes_bound, 12),
        no_upper_bound: round_sig(no_bound, 12),
        nominal_gap: round_sig(yes_bound - no_bound, 12),
        min_yes,
        max_no,
        no_bound_violations,
        rows,
    })
}

impl GapReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["trial", "world", "mu", "bound", "slack"]);
        for r in &self.rows {
            csv.row(vec![
                r.trial.to_string(),
                format!("{:?}", r.world).to_lowercase(),
                r.mu.to_string(),
                crate::report::fmt_sig(r.bound),
                crate::report::fmt_sig(r.slack),
            ]);
        }
        csv
    }
}
