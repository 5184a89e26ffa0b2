//! The only lens attackers get: randomized vertex IDs, randomly permuted
//! adjacency lists, per-query accounting, and transcript-level structure
//! checks.
//!
//! Instrumentation that reveals ground truth (labels, the world flag, the
//! broken set) lives on `Referee`, a separate handle the experiment
//! harness keeps to itself.

use crate::construction::{BlockLabel, ConstructionParams, World};
use crate::realizer::Instance;
use crate::rng::derive_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PublicId(pub u32);

impl std::fmt::Display for PublicId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("id {0} was never issued")]
    UnknownId(u32),
    #[error("adjacency index must be at least 1")]
    BadIndex,
}

/// One oracle interaction. `index == 0` marks a random-vertex draw, whose
/// answer is the drawn id; positive indices are adjacency queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub step: u64,
    pub queried_id: u32,
    pub index: u32,
    pub answer: Option<u32>,
}

pub struct Oracle {
    inst: Arc<Instance>,
    seed: u64,
    int_of_pub: Vec<u32>,
    pub_of_int: Vec<u32>,
    list_perms: Vec<Option<Box<[u32]>>>,
    query_count: u64,
    transcript: Vec<TranscriptEntry>,
    recording: bool,
    draw_rng: ChaCha8Rng,
    draw_index: u64,
    touched_broken: bool,
}

/// Referee capability over the same instance: label and broken-set access
/// for experiment bookkeeping. Never hand this to attacker code.
pub struct Referee {
    inst: Arc<Instance>,
}

pub fn new_oracle(inst: &Arc<Instance>, seed: u64) -> (Oracle, Referee) {
    let n = inst.n() as usize;
    let mut pub_of_int: Vec<u32> = (0..n as u32).collect();
    let mut rng = derive_rng(seed, "oracle-ids", 0);
    pub_of_int.shuffle(&mut rng);
    let mut int_of_pub = vec![0u32; n];
    for (internal, &public) in pub_of_int.iter().enumerate() {
        int_of_pub[public as usize] = internal as u32;
    }
    let oracle = Oracle {
        inst: Arc::clone(inst),
        seed,
        int_of_pub,
        pub_of_int,
        list_perms: vec![None; n],
        query_count: 0,
        transcript: Vec::new(),
        recording: true,
        draw_rng: derive_rng(seed, "oracle-draws", 0),
        draw_index: 0,
        touched_broken: false,
    };
    let referee = Referee {
        inst: Arc::clone(inst),
    };
    (oracle, referee)
}

impl Oracle {
    pub fn vertex_count(&self) -> u32 {
        self.inst.n()
    }

    /// Construction scalars are public knowledge; only the world flag,
    /// labels, and seeds are hidden.
    pub fn public_params(&self) -> PublicParams {
        let p = self.inst.params;
        PublicParams {
            n_scale: p.n_scale,
            k: p.k,
            d: p.d,
            s: p.s,
            variant: p.variant,
            n: self.inst.n(),
            slots: p.slots(),
        }
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Heavy experiments can turn transcript recording off; accounting is
    /// unaffected.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    fn note(&mut self, queried_id: u32, index: u32, answer: Option<u32>) {
        self.query_count += 1;
        if self.recording {
            self.transcript.push(TranscriptEntry {
                step: self.query_count,
                queried_id,
                index,
                answer,
            });
        }
    }

    /// The i-th neighbor of `id` under this oracle's hidden list
    /// permutation, or None once `i` exceeds the degree. Repeat queries
    /// return identical answers and each costs one query.
    pub fn query(&mut self, id: PublicId, i: u32) -> Result<Option<PublicId>, OracleError> {
        let n = self.inst.n();
        if id.0 >= n {
            return Err(OracleError::UnknownId(id.0));
        }
        if i == 0 {
            return Err(OracleError::BadIndex);
        }
        let v = self.int_of_pub[id.0 as usize];
        if self.inst.is_broken(v) {
            self.touched_broken = true;
        }
        let deg = self.inst.graph().degree(v);
        if (i as usize) > deg {
            self.note(id.0, i, None);
            return Ok(None);
        }
        if self.list_perms[v as usize].is_none() {
            let mut perm: Vec<u32> = (0..deg as u32).collect();
            let mut rng = derive_rng(self.seed, "oracle-list", v as u64);
            perm.shuffle(&mut rng);
            self.list_perms[v as usize] = Some(perm.into_boxed_slice());
        }
        let perm = self.list_perms[v as usize].as_ref().unwrap();
        let neighbor = self.inst.graph().neighbors(v)[perm[i as usize - 1] as usize];
        if self.inst.is_broken(neighbor) {
            self.touched_broken = true;
        }
        let answer = self.pub_of_int[neighbor as usize];
        self.note(id.0, i, Some(answer));
        Ok(Some(PublicId(answer)))
    }

    /// Uniform vertex draw; costs one query like any other oracle access.
    pub fn random_vertex(&mut self) -> PublicId {
        let n = self.inst.n();
        let v_pub = self.draw_rng.gen_range(0..n);
        self.draw_index += 1;
        if self.inst.is_broken(self.int_of_pub[v_pub as usize]) {
            self.touched_broken = true;
        }
        self.note(v_pub, 0, Some(v_pub));
        PublicId(v_pub)
    }

    pub(crate) fn internal_of(&self, id: PublicId) -> u32 {
        self.int_of_pub[id.0 as usize]
    }

    pub(crate) fn public_of(&self, internal: u32) -> PublicId {
        PublicId(self.pub_of_int[internal as usize])
    }

    pub(crate) fn touched_broken_flag(&self) -> bool {
        self.touched_broken
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PublicParams {
    pub n_scale: u64,
    pub k: u32,
    pub d: u32,
    pub s: u32,
    pub variant: crate::construction::Variant,
    pub n: u32,
    pub slots: u32,
}

impl Referee {
    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.inst.params
    }

    pub fn world(&self) -> World {
        self.inst.world()
    }

    pub fn label_of(&self, oracle: &Oracle, id: PublicId) -> BlockLabel {
        self.inst.label_of(oracle.internal_of(id))
    }

    pub fn level_of(&self, oracle: &Oracle, id: PublicId) -> Option<u32> {
        self.label_of(oracle, id).level()
    }

    pub fn is_broken(&self, oracle: &Oracle, id: PublicId) -> bool {
        self.inst.is_broken(oracle.internal_of(id))
    }

    pub fn public_of(&self, oracle: &Oracle, internal: u32) -> PublicId {
        oracle.public_of(internal)
    }

    pub fn internal_of(&self, oracle: &Oracle, id: PublicId) -> u32 {
        oracle.internal_of(id)
    }

    /// True iff any queried or answered vertex so far lies in the broken
    /// set. Tracked incrementally, so it works with recording off.
    pub fn touched_broken(&self, oracle: &Oracle) -> bool {
        oracle.touched_broken_flag()
    }
}

pub fn write_transcript_jsonl(
    entries: &[TranscriptEntry],
    w: &mut impl Write,
) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut *w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscoveryReport {
    pub vertex_count: usize,
    pub edge_count: usize,
    /// Steps whose answer vertex was already non-singleton and whose edge
    /// was new: the moments the discovered graph stops being a
    /// leaf-appending rooted forest.
    pub collision_steps: Vec<u64>,
    pub rooted_forest: bool,
}

/// Replays a transcript into the discovered subgraph F_t and flags every
/// collision step.
pub fn discovered_graph(entries: &[TranscriptEntry]) -> DiscoveryReport {
    let mut degree: HashMap<u32, u32> = HashMap::new();
    let mut edges: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    let mut collisions = Vec::new();
    for e in entries {
        if e.index == 0 {
            degree.entry(e.queried_id).or_insert(0);
            continue;
        }
        degree.entry(e.queried_id).or_insert(0);
        let Some(ans) = e.answer else { continue };
        let key = (e.queried_id.min(ans), e.queried_id.max(ans));
        if edges.contains(&key) {
            continue; // re-traversal of a known edge changes nothing
        }
        let ans_deg = degree.get(&ans).copied().unwrap_or(0);
        if ans_deg > 0 {
            collisions.push(e.step);
        }
        edges.insert(key);
        *degree.entry(e.queried_id).or_insert(0) += 1;
        *degree.entry(ans).or_insert(0) += 1;
    }
    DiscoveryReport {
        vertex_count: degree.len(),
        edge_count: edges.len(),
        rooted_forest: collisions.is_empty(),
        collision_steps: collisions,
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct CollisionReport {
    pub qs: Vec<u64>,
    pub trials_per_q: u64,
    pub instances: u64,
    pub nonforest_freqs: Vec<f64>,
    /// Consecutive frequency ratios, the quantity the Q^2 union bound
    /// predicts near 4.
    pub ratios: Vec<f64>,
}

/// Random-walk transcripts of exactly `q` queries each; measures how often
/// the discovered graph stops being a leaf-appending rooted forest.
pub fn collision_experiment(
    params: &ConstructionParams,
    qs: &[u64],
    trials_per_q: u64,
    n_instances: u64,
    master_seed: u64,
) -> Result<CollisionReport, crate::realizer::RealizeError> {
    use rand::Rng as _;
    use rayon::prelude::*;
    let instances: Vec<Arc<crate::realizer::Instance>> = (0..n_instances)
        .into_par_iter()
        .map(|s| {
            crate::realizer::assemble_instance(
                &params.with_seed(crate::realizer::trial_seed(master_seed, "col-inst", s)),
            )
            .map(Arc::new)
        })
        .collect::<Result<_, _>>()?;
    let slots = params.slots();
    let mut freqs = Vec::with_capacity(qs.len());
    for &q in qs {
        let collisions: u64 = (0..trials_per_q)
            .into_par_iter()
            .map(|t| {
                let inst = &instances[(t % n_instances) as usize];
                let (mut oracle, _) = new_oracle(
                    inst,
                    crate::rng::seed_to_u64(crate::rng::derive_seed(
                        master_seed,
                        "col-oracle",
                        t * 1000 + q,
                    )),
                );
                let mut rng = derive_rng(master_seed, "col-walk", t * 1000 + q);
                let mut cur = oracle.random_vertex();
                while oracle.query_count() < q {
                    if let Some(next) = oracle
                        .query(cur, rng.gen_range(1..=slots))
                        .expect("ids stay valid")
                    {
                        cur = next;
                    }
                }
                (!discovered_graph(oracle.transcript()).rooted_forest) as u64
            })
            .sum();
        freqs.push(collisions as f64 / trials_per_q as f64);
    }
    let ratios = freqs.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(CollisionReport {
        qs: qs.to_vec(),
        trials_per_q,
        instances: n_instances,
        nonforest_freqs: freqs,
        ratios,
    })
}
