//! Turns sampled per-block degree demands into an actual simple bipartite
//! labeled graph: demand drawing, degree repair, Gale–Ryser feasibility,
//! constructive realization, 2-switch randomization, and broken-vertex
//! bookkeeping.

use crate::construction::{
    block_sizes, transition_table, BlockLabel, BlockSizes, ConstructionParams, Rat, TableError,
    TransitionTable, World,
};
use crate::graph::AdjGraph;
use crate::rng::{derive_rng, seed_to_u64};
use num::ToPrimitive;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RealizeError {
    #[error("bad input sequences: {0}")]
    Input(String),
    #[error("repaired demands for pair {pair} still fail Gale–Ryser")]
    InfeasibleAfterRepair { pair: String },
    #[error("greedy realization stalled: {0}")]
    Realization(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("instance container: {0}")]
    Container(String),
}

/// Per-vertex demands across one unordered block pair, both directions.
#[derive(Debug, Clone)]
pub struct DegreeDemand {
    pub block_pair: (BlockLabel, BlockLabel),
    /// Demands of `block_pair.0` vertices toward `block_pair.1`.
    pub a: Vec<u32>,
    /// Demands of `block_pair.1` vertices toward `block_pair.0`.
    pub b: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    /// The repaired sequence, sorted non-increasing.
    pub a_prime: Vec<u32>,
    /// Indices (into the original `a`) whose demand was decremented.
    pub broken: Vec<u32>,
    pub total_decrement: u64,
}

/// Gale–Ryser feasibility. `a` must be sorted non-increasing.
pub fn check_bigraphic(a: &[u32], b: &[u32]) -> Result<bool, RealizeError> {
    if a.windows(2).any(|w| w[0] < w[1]) {
        return Err(RealizeError::Input(
            "first sequence must be sorted non-increasing".into(),
        ));
    }
    let sum_a: u64 = a.iter().map(|&x| x as u64).sum();
    let sum_b: u64 = b.iter().map(|&x| x as u64).sum();
    if sum_a != sum_b {
        return Ok(false);
    }
    let mut b_sorted: Vec<u32> = b.to_vec();
    b_sorted.sort_unstable_by(|x, y| y.cmp(x));
    // suffix[j] = sum of b_sorted[j..]
    let mut suffix: Vec<u64> = vec![0; b_sorted.len() + 1];
    for j in (0..b_sorted.len()).rev() {
        suffix[j] = suffix[j + 1] + b_sorted[j] as u64;
    }
    let mut prefix_a = 0u64;
    let mut cut = 0usize; // number of b_j >= r
    for r in 1..=a.len() {
        prefix_a += a[r - 1] as u64;
        // b_sorted is non-increasing: entries >= r form a prefix.
        while cut < b_sorted.len() && b_sorted[cut] >= r as u32 {
            cut += 1;
        }
        // As r grows the prefix can only shrink; recompute from scratch.
        let mut hi = cut;
        while hi > 0 && b_sorted[hi - 1] < r as u32 {
            hi -= 1;
        }
        cut = hi;
        let rhs = (cut as u64) * (r as u64) + suffix[cut];
        if prefix_a > rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The degree-repair step: decrement the running maximum of `a` exactly
/// `sum(a) - sum(b)` times (ties broken toward the smallest index), sort,
/// and verify Gale–Ryser.
pub fn repair_degrees(a: &[u32], b: &[u32]) -> Result<RepairOutcome, RealizeError> {
    let sum_a: u64 = a.iter().map(|&x| x as u64).sum();
    let sum_b: u64 = b.iter().map(|&x| x as u64).sum();
    if sum_a < sum_b {
        return Err(RealizeError::Input(
            "sum(a) must be at least sum(b); swap the roles".into(),
        ));
    }
    let mut work = a.to_vec();
    let decrements = sum_a - sum_b;
    let touched = decrement_maxima(&mut work, decrements);

    let mut a_prime = work.clone();
    a_prime.sort_unstable_by(|x, y| y.cmp(x));
    if !check_bigraphic(&a_prime, b)? {
        return Err(RealizeError::InfeasibleAfterRepair {
            pair: "(unnamed)".into(),
        });
    }
    let mut broken: Vec<u32> = touched.into_iter().collect();
    broken.sort_unstable();
    Ok(RepairOutcome {
        a_prime,
        broken,
        total_decrement: decrements,
    })
}

/// Decrements the current maximum `count` times, smallest index first on
/// ties. Returns the set of touched indices.
fn decrement_maxima(values: &mut [u32], count: u64) -> HashSet<u32> {
    let mut heap: BinaryHeap<(u32, Reverse<u32>)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, Reverse(i as u32)))
        .collect();
    let mut touched = HashSet::new();
    for _ in 0..count {
        let Some((v, Reverse(i))) = heap.pop() else {
            break;
        };
        if v == 0 {
            break;
        }
        values[i as usize] = v - 1;
        touched.insert(i);
        heap.push((v - 1, Reverse(i)));
    }
    touched
}

/// Repairs both directions of a pair in place: first the lemma's
/// sum-equalization on the larger side, then, if the pair is still not
/// bigraphic (delusive blocks smaller than their internal degree do this
/// at desk scale), keeps decrementing the maxima of both sides together
/// until Gale–Ryser holds.
fn pair_repair(a: &mut [u32], b: &mut [u32]) -> (Vec<u32>, Vec<u32>) {
    let sum = |v: &[u32]| v.iter().map(|&x| x as u64).sum::<u64>();
    let mut broken_a = HashSet::new();
    let mut broken_b = HashSet::new();

    let (sa, sb) = (sum(a), sum(b));
    if sa > sb {
        broken_a.extend(decrement_maxima(a, sa - sb));
    } else if sb > sa {
        broken_b.extend(decrement_maxima(b, sb - sa));
    }

    loop {
        let mut a_sorted = a.to_vec();
        a_sorted.sort_unstable_by(|x, y| y.cmp(x));
        if check_bigraphic(&a_sorted, b).unwrap_or(false) {
            break;
        }
        if sum(a) == 0 {
            break;
        }
        broken_a.extend(decrement_maxima(a, 1));
        broken_b.extend(decrement_maxima(b, 1));
    }

    let mut ba: Vec<u32> = broken_a.into_iter().collect();
    let mut bb: Vec<u32> = broken_b.into_iter().collect();
    ba.sort_unstable();
    bb.sort_unstable();
    (ba, bb)
}

/// Builds a simple bipartite graph with degrees exactly `(a, b)` (greedy
/// largest-first fill), then randomizes it with `10 m ln(m+2)` uniform
/// 2-switches. Edges are (left index, right index) pairs.
pub fn realize_bipartite(
    a: &[u32],
    b: &[u32],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(u32, u32)>, RealizeError> {
    let m: u64 = a.iter().map(|&x| x as u64).sum();
    if m != b.iter().map(|&x| x as u64).sum::<u64>() {
        return Err(RealizeError::Realization("degree sums differ".into()));
    }
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(m as usize);

    // Greedy fill: take left vertices by descending residual, satisfy each
    // from the currently largest right residuals.
    let mut left_order: Vec<u32> = (0..a.len() as u32).collect();
    left_order.sort_by_key(|&i| Reverse(a[i as usize]));
    let mut right: BinaryHeap<(u32, Reverse<u32>)> = b
        .iter()
        .enumerate()
        .map(|(j, &v)| (v, Reverse(j as u32)))
        .collect();
    let mut stash = Vec::new();
    for &i in &left_order {
        let need = a[i as usize];
        stash.clear();
        for _ in 0..need {
            let Some((res, Reverse(j))) = right.pop() else {
                return Err(RealizeError::Realization("ran out of right residuals".into()));
            };
            if res == 0 {
                return Err(RealizeError::Realization(
                    "right residual exhausted; pair not bigraphic".into(),
                ));
            }
            edges.push((i, j));
            stash.push((res - 1, Reverse(j)));
        }
        for &e in &stash {
            right.push(e);
        }
    }

    switch_randomize(&mut edges, a.len(), b.len(), rng);
    Ok(edges)
}

enum Membership {
    Bits { words: Vec<u64>, width: usize },
    Set(HashSet<u64>),
}

impl Membership {
    fn new(na: usize, nb: usize, edges: &[(u32, u32)]) -> Membership {
        let product = na.saturating_mul(nb);
        if product <= 1 << 27 {
            let mut words = vec![0u64; (product + 63) / 64];
            for &(u, v) in edges {
                let key = u as usize * nb + v as usize;
                words[key >> 6] |= 1 << (key & 63);
            }
            Membership::Bits { words, width: nb }
        } else {
            Membership::Set(edges.iter().map(|&(u, v)| pack(u, v)).collect())
        }
    }

    #[inline]
    fn has(&self, u: u32, v: u32) -> bool {
        match self {
            Membership::Bits { words, width } => {
                let key = u as usize * width + v as usize;
                words[key >> 6] & (1 << (key & 63)) != 0
            }
            Membership::Set(s) => s.contains(&pack(u, v)),
        }
    }

    #[inline]
    fn set(&mut self, u: u32, v: u32, on: bool) {
        match self {
            Membership::Bits { words, width } => {
                let key = u as usize * *width + v as usize;
                if on {
                    words[key >> 6] |= 1 << (key & 63);
                } else {
                    words[key >> 6] &= !(1 << (key & 63));
                }
            }
            Membership::Set(s) => {
                if on {
                    s.insert(pack(u, v));
                } else {
                    s.remove(&pack(u, v));
                }
            }
        }
    }
}

#[inline]
fn pack(u: u32, v: u32) -> u64 {
    ((u as u64) << 32) | v as u64
}

/// The 2-switch walk: remove {(u,v),(x,y)}, add {(u,y),(x,v)} whenever the
/// result stays simple.
fn switch_randomize(edges: &mut [(u32, u32)], na: usize, nb: usize, rng: &mut ChaCha8Rng) {
    let m = edges.len();
    if m < 2 {
        return;
    }
    let mut member = Membership::new(na, nb, edges);
    let t = (10.0 * m as f64 * ((m + 2) as f64).ln()).ceil() as u64;
    for _ in 0..t {
        let i = rng.gen_range(0..m);
        let j = rng.gen_range(0..m);
        let (u, v) = edges[i];
        let (x, y) = edges[j];
        if u == x || v == y || member.has(u, y) || member.has(x, v) {
            continue;
        }
        member.set(u, v, false);
        member.set(x, y, false);
        member.set(u, y, true);
        member.set(x, v, true);
        edges[i] = (u, y);
        edges[j] = (x, v);
    }
}

/// Vertex layout: blocks in label order, each holding a contiguous id range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockLayout {
    pub blocks: Vec<(BlockLabel, u32, u32)>, // (label, start, size)
}

impl BlockLayout {
    pub fn of(sizes: &BlockSizes) -> BlockLayout {
        let mut blocks = Vec::with_capacity(sizes.sizes.len());
        let mut start = 0u32;
        for &(label, count) in &sizes.sizes {
            blocks.push((label, start, count as u32));
            start += count as u32;
        }
        BlockLayout { blocks }
    }

    pub fn n(&self) -> u32 {
        self.blocks.last().map(|&(_, s, c)| s + c).unwrap_or(0)
    }

    pub fn label_of(&self, v: u32) -> BlockLabel {
        let idx = self
            .blocks
            .partition_point(|&(_, start, _)| start <= v)
            .saturating_sub(1);
        self.blocks[idx].0
    }

    pub fn index_of_label(&self, label: BlockLabel) -> Option<usize> {
        self.blocks.iter().position(|&(l, _, _)| l == label)
    }

    pub fn range(&self, label: BlockLabel) -> Option<std::ops::Range<u32>> {
        self.index_of_label(label).map(|i| {
            let (_, start, size) = self.blocks[i];
            start..start + size
        })
    }
}

/// A realized labeled instance. Labels, the world flag, and the broken set
/// are referee data; attackers only ever see the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub params: ConstructionParams,
    layout: BlockLayout,
    graph: AdjGraph,
    broken: Vec<u32>,
}

impl Instance {
    pub fn n(&self) -> u32 {
        self.layout.n()
    }

    pub fn graph(&self) -> &AdjGraph {
        &self.graph
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn label_of(&self, v: u32) -> BlockLabel {
        self.layout.label_of(v)
    }

    pub fn world(&self) -> World {
        self.params.world
    }

    pub fn broken(&self) -> &[u32] {
        &self.broken
    }

    pub fn is_broken(&self, v: u32) -> bool {
        self.broken.binary_search(&v).is_ok()
    }

    /// Drawn slot count for a vertex: s for S vertices, floor(d') plus a
    /// possible global parity bump otherwise.
    pub fn slots_of(&self, v: u32) -> u32 {
        slots_of(&self.params, &self.layout, v)
    }
}

fn slots_of(params: &ConstructionParams, layout: &BlockLayout, v: u32) -> u32 {
    let base = if layout.label_of(v).is_s() {
        params.s
    } else {
        params.slots()
    };
    match parity_bump_vertex(params, layout) {
        Some(designated) if designated == v => base + 1,
        _ => base,
    }
}

/// If the total slot count would be odd, one designated delusive vertex
/// (or the first top-level A vertex when the variant has no delusive
/// blocks) absorbs one extra slot.
fn parity_bump_vertex(params: &ConstructionParams, layout: &BlockLayout) -> Option<u32> {
    let mut total: u64 = 0;
    for &(label, _, size) in &layout.blocks {
        let base = if label.is_s() { params.s } else { params.slots() };
        total += base as u64 * size as u64;
    }
    if total % 2 == 0 {
        return None;
    }
    let top_d = layout
        .blocks
        .iter()
        .filter(|(l, _, _)| l.is_d())
        .map(|&(l, start, _)| (l.level().unwrap(), start))
        .max_by_key(|&(level, _)| level)
        .map(|(_, start)| start);
    top_d.or_else(|| {
        layout
            .range(BlockLabel::A {
                level: params.k,
                side: crate::construction::Side::One,
            })
            .map(|r| r.start)
    })
}

/// Per-ordered-(source, target) demand vectors, indexed by local vertex
/// position within the source block.
type DemandMap = HashMap<(usize, usize), Vec<u32>>;

fn draw_demand_map(
    params: &ConstructionParams,
    table: &TransitionTable,
    layout: &BlockLayout,
) -> DemandMap {
    let block_results: Vec<(usize, Vec<(usize, Vec<u32>)>)> = layout
        .blocks
        .par_iter()
        .enumerate()
        .map(|(block_idx, &(label, start, size))| {
            let row = table.row(label).unwrap_or(&[]);
            let targets: Vec<usize> = row
                .iter()
                .map(|(t, _)| layout.index_of_label(*t).expect("target block exists"))
                .collect();
            // Cumulative probabilities for slot sampling.
            let total: f64 = row
                .iter()
                .map(|(_, w)| w.to_f64().unwrap())
                .sum();
            let mut cumulative = Vec::with_capacity(row.len());
            let mut acc = 0.0;
            for (_, w) in row {
                acc += w.to_f64().unwrap() / total;
                cumulative.push(acc);
            }
            if let Some(last) = cumulative.last_mut() {
                *last = 1.0;
            }

            let mut counts: Vec<Vec<u32>> = targets.iter().map(|_| vec![0u32; size as usize]).collect();
            let mut rng = derive_rng(params.seed, "demands", block_idx as u64);
            for local in 0..size {
                let v = start + local;
                let slots = slots_of(params, layout, v);
                for _ in 0..slots {
                    let u: f64 = rng.gen();
                    let t = cumulative.partition_point(|&c| c < u).min(cumulative.len() - 1);
                    counts[t][local as usize] += 1;
                }
            }
            (
                block_idx,
                targets.into_iter().zip(counts).collect::<Vec<_>>(),
            )
        })
        .collect();

    let mut map = DemandMap::new();
    for (block_idx, entries) in block_results {
        for (tgt_idx, counts) in entries {
            map.insert((block_idx, tgt_idx), counts);
        }
    }
    map
}

/// Unordered block pairs with any nonzero weight, in deterministic order.
fn pair_list(table: &TransitionTable, layout: &BlockLayout) -> Vec<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for (src, row) in &table.rows {
        let si = layout.index_of_label(*src).expect("source block exists");
        for (tgt, _) in row {
            let ti = layout.index_of_label(*tgt).expect("target block exists");
            pairs.insert((si.min(ti), si.max(ti)));
        }
    }
    pairs.into_iter().collect()
}

/// Draws every vertex's slot targets and reports per-pair demands, both
/// directions of every unordered pair.
pub fn draw_degree_demands(
    params: &ConstructionParams,
    table: &TransitionTable,
) -> Vec<DegreeDemand> {
    let layout = BlockLayout::of(&block_sizes(params));
    let map = draw_demand_map(params, table, &layout);
    let zero_for = |idx: usize| vec![0u32; layout.blocks[idx].2 as usize];
    pair_list(table, &layout)
        .into_iter()
        .map(|(xi, yi)| DegreeDemand {
            block_pair: (layout.blocks[xi].0, layout.blocks[yi].0),
            a: map.get(&(xi, yi)).cloned().unwrap_or_else(|| zero_for(xi)),
            b: map.get(&(yi, xi)).cloned().unwrap_or_else(|| zero_for(yi)),
        })
        .collect()
}

/// Generates the full labeled instance for `params` (seed included).
pub fn assemble_instance(params: &ConstructionParams) -> Result<Instance, RealizeError> {
    let table = transition_table(params)?;
    let layout = BlockLayout::of(&block_sizes(params));
    let demands = draw_demand_map(params, &table, &layout);
    let pairs = pair_list(&table, &layout);

    let results: Vec<(Vec<(u32, u32)>, Vec<u32>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(pair_idx, &(xi, yi))| {
            let (x_label, x_start, x_size) = layout.blocks[xi];
            let (y_label, y_start, y_size) = layout.blocks[yi];
            let mut a = demands
                .get(&(xi, yi))
                .cloned()
                .unwrap_or_else(|| vec![0u32; x_size as usize]);
            let mut b = demands
                .get(&(yi, xi))
                .cloned()
                .unwrap_or_else(|| vec![0u32; y_size as usize]);
            let (broken_a, broken_b) = pair_repair(&mut a, &mut b);

            let mut rng = derive_rng(params.seed, "realize", pair_idx as u64);
            let local = realize_bipartite(&a, &b, &mut rng).map_err(|e| match e {
                RealizeError::Realization(msg) => RealizeError::Realization(format!(
                    "pair ({x_label}, {y_label}): {msg}"
                )),
                other => other,
            })?;
            let edges: Vec<(u32, u32)> = local
                .into_iter()
                .map(|(i, j)| (x_start + i, y_start + j))
                .collect();
            let mut broken: Vec<u32> = broken_a.iter().map(|&i| x_start + i).collect();
            broken.extend(broken_b.iter().map(|&j| y_start + j));
            Ok((edges, broken))
        })
        .collect::<Result<Vec<_>, RealizeError>>()?;

    let mut all_edges = Vec::new();
    let mut broken = Vec::new();
    for (edges, b) in results {
        all_edges.extend(edges);
        broken.extend(b);
    }
    broken.sort_unstable();
    broken.dedup();

    let graph = AdjGraph::from_edges(layout.n() as usize, &all_edges);
    Ok(Instance {
        params: *params,
        layout,
        graph,
        broken,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AuditViolation {
    MultiEdgeOrLoop { u: u32, v: u32 },
    NotBipartite { u: u32, v: u32 },
    IllegalBlockPair { u: u32, v: u32, pair: String },
    DegreeMismatch { v: u32, degree: u32, slots: u32 },
    BrokenVertexBound { count: u64, bound: f64 },
    PairCountOutOfBand { pair: String, observed: u64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub n: u32,
    pub edges: u64,
    pub broken_count: u64,
    pub broken_bound: f64,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The broken-vertex budget 12 sqrt(n d') ln n with the desk-scale
/// constant.
pub fn broken_bound(params: &ConstructionParams, n: u32) -> f64 {
    let dp = params.d_prime().to_f64().unwrap();
    12.0 * ((n as f64) * dp).sqrt() * (n as f64).ln()
}

/// Structure audit: simplicity, bipartiteness, block-pair legality, degree
/// accounting against the broken set, pair-count bands, and the broken
/// bound. Report-only; never panics.
pub fn audit_instance(inst: &Instance) -> AuditReport {
    let mut violations = Vec::new();
    let g = inst.graph();
    let table = transition_table(&inst.params).expect("instance params build a table");

    for (u, v) in g.simplicity_violations() {
        violations.push(AuditViolation::MultiEdgeOrLoop { u, v });
    }

    let mut pair_counts: BTreeMap<(BlockLabel, BlockLabel), u64> = BTreeMap::new();
    for (u, v) in g.edges() {
        let (lu, lv) = (inst.label_of(u), inst.label_of(v));
        if lu.color() == lv.color() {
            violations.push(AuditViolation::NotBipartite { u, v });
        }
        let w_uv = table.weight(lu, lv);
        let w_vu = table.weight(lv, lu);
        if w_uv == Rat::from_integer(0) && w_vu == Rat::from_integer(0) {
            violations.push(AuditViolation::IllegalBlockPair {
                u,
                v,
                pair: format!("{lu}-{lv}"),
            });
        }
        let key = if lu <= lv { (lu, lv) } else { (lv, lu) };
        *pair_counts.entry(key).or_insert(0) += 1;
    }

    // A vertex is broken exactly when its realized degree differs from its
    // drawn slot count.
    for v in 0..inst.n() {
        let deg = g.degree(v) as u32;
        let slots = inst.slots_of(v);
        let mismatch = deg != slots;
        if mismatch != inst.is_broken(v) {
            violations.push(AuditViolation::DegreeMismatch { v, degree: deg, slots });
        }
    }

    let bound = broken_bound(&inst.params, inst.n());
    if (inst.broken.len() as f64) > bound {
        violations.push(AuditViolation::BrokenVertexBound {
            count: inst.broken.len() as u64,
            bound,
        });
    }

    // Coarse per-pair count bands: catches grossly misshapen blocks while
    // tolerating repair caps on tight delusive blocks.
    let layout = inst.layout();
    let dp = inst.params.d_prime().to_f64().unwrap();
    let slots_frac = inst.params.slots() as f64 / dp;
    for (&(x, y), &observed) in &pair_counts {
        let wx = table.weight(x, y).to_f64().unwrap();
        let wy = table.weight(y, x).to_f64().unwrap();
        let sx = layout.range(x).map(|r| r.len() as f64).unwrap_or(0.0);
        let sy = layout.range(y).map(|r| r.len() as f64).unwrap_or(0.0);
        let exp_x = if x.is_s() { wx * sx } else { wx * sx * slots_frac };
        let exp_y = if y.is_s() { wy * sy } else { wy * sy * slots_frac };
        let cap = sx * sy;
        let lo = (0.4 * exp_x.min(exp_y).min(cap) - 25.0).max(0.0);
        let hi = 1.1 * exp_x.max(exp_y).min(cap) + 25.0;
        if (observed as f64) < lo || (observed as f64) > hi {
            violations.push(AuditViolation::PairCountOutOfBand {
                pair: format!("{x}-{y}"),
                observed,
                lo,
                hi,
            });
        }
    }

    AuditReport {
        n: inst.n(),
        edges: g.edge_count() as u64,
        broken_count: inst.broken.len() as u64,
        broken_bound: bound,
        violations,
    }
}

// --- binary container -------------------------------------------------

const MAGIC: &[u8; 4] = b"LCAM";
const VERSION: u16 = 1;

fn label_code(label: BlockLabel) -> u32 {
    use crate::construction::{Part, Side};
    match label {
        BlockLabel::S { side } => (side == Side::Two) as u32,
        BlockLabel::A { level, side } => 0x100 | ((side == Side::Two) as u32) << 8 | level << 16,
        BlockLabel::B { level, side } => 0x200 | ((side == Side::Two) as u32) << 8 | level << 16,
        BlockLabel::D { level, part } => 0x400 | ((part == Part::R) as u32) << 8 | level << 16,
    }
}

impl Instance {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let p = &self.params;
        w.write_all(&p.n_scale.to_le_bytes())?;
        w.write_all(&p.k.to_le_bytes())?;
        w.write_all(&p.d.to_le_bytes())?;
        w.write_all(&p.s.to_le_bytes())?;
        let variant = match p.variant {
            crate::construction::Variant::CoreOnly => 0u8,
            crate::construction::Variant::SingleDelusive => 1,
            crate::construction::Variant::FullHierarchy => 2,
        };
        w.write_all(&[variant, (p.world == World::No) as u8])?;
        w.write_all(&p.seed.to_le_bytes())?;

        let n = self.n();
        w.write_all(&n.to_le_bytes())?;
        for v in 0..n {
            w.write_all(&label_code(self.label_of(v)).to_le_bytes())?;
        }
        let g = self.graph();
        let m2 = (g.edge_count() * 2) as u64;
        w.write_all(&m2.to_le_bytes())?;
        for v in 0..n {
            w.write_all(&(g.degree(v) as u32).to_le_bytes())?;
        }
        for v in 0..n {
            for &u in g.neighbors(v) {
                w.write_all(&u.to_le_bytes())?;
            }
        }
        w.write_all(&(self.broken.len() as u32).to_le_bytes())?;
        for &v in &self.broken {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Instance, RealizeError> {
        fn io_err(e: std::io::Error) -> RealizeError {
            RealizeError::Container(e.to_string())
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(RealizeError::Container("bad magic".into()));
        }
        let version = read_u16(r).map_err(io_err)?;
        if version != VERSION {
            return Err(RealizeError::Container(format!(
                "unsupported version {version}"
            )));
        }
        let n_scale = read_u64(r).map_err(io_err)?;
        let k = read_u32(r).map_err(io_err)?;
        let d = read_u32(r).map_err(io_err)?;
        let s = read_u32(r).map_err(io_err)?;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags).map_err(io_err)?;
        let variant = match flags[0] {
            0 => crate::construction::Variant::CoreOnly,
            1 => crate::construction::Variant::SingleDelusive,
            2 => crate::construction::Variant::FullHierarchy,
            other => {
                return Err(RealizeError::Container(format!("bad variant {other}")))
            }
        };
        let world = if flags[1] == 0 { World::Yes } else { World::No };
        let seed = read_u64(r).map_err(io_err)?;
        let params = ConstructionParams {
            n_scale,
            k,
            d,
            s,
            variant,
            world,
            seed,
        };
        let layout = BlockLayout::of(&block_sizes(&params));

        let n = read_u32(r).map_err(io_err)?;
        if n != layout.n() {
            return Err(RealizeError::Container(format!(
                "vertex count {n} does not match params ({})",
                layout.n()
            )));
        }
        for v in 0..n {
            let code = read_u32(r).map_err(io_err)?;
            if code != label_code(layout.label_of(v)) {
                return Err(RealizeError::Container(format!(
                    "label mismatch at vertex {v}"
                )));
            }
        }
        let m2 = read_u64(r).map_err(io_err)? as usize;
        let mut offsets = Vec::with_capacity(n as usize + 1);
        offsets.push(0usize);
        let mut acc = 0usize;
        for _ in 0..n {
            acc += read_u32(r).map_err(io_err)? as usize;
            offsets.push(acc);
        }
        if acc != m2 {
            return Err(RealizeError::Container("degree sum mismatch".into()));
        }
        let mut adj = vec![0u32; m2];
        for slot in adj.iter_mut() {
            *slot = read_u32(r).map_err(io_err)?;
        }
        let broken_len = read_u32(r).map_err(io_err)? as usize;
        let mut broken = vec![0u32; broken_len];
        for slot in broken.iter_mut() {
            *slot = read_u32(r).map_err(io_err)?;
        }
        Ok(Instance {
            params,
            layout,
            graph: AdjGraph::from_parts(offsets, adj),
            broken,
        })
    }

    pub fn read_file(path: &Path) -> Result<Instance, RealizeError> {
        let mut f = std::io::BufReader::new(
            std::fs::File::open(path)
                .map_err(|e| RealizeError::Container(e.to_string()))?,
        );
        Instance::read_from(&mut f)
    }
}

fn read_u16(r: &mut impl Read) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Derives a fresh instance seed for trial-style experiments.
pub fn trial_seed(master: u64, domain: &str, trial: u64) -> u64 {
    seed_to_u64(crate::rng::derive_seed(master, domain, trial))
}
