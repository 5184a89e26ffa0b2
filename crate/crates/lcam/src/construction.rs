//! Parameter validation, block sizes, and the exact categorical
//! neighbor-type tables for both worlds.
//!
//! All weights are exact rationals. A row of the table lists, for a source
//! block, the expected number of neighbors in each target block; every
//! non-S row sums to `d' = d(1 + eps^3) + s` exactly, which is the identity
//! the test suite pins down. Conversion to floating point happens only at
//! sampling time.

use num::rational::Ratio;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub type Rat = Ratio<i64>;

pub fn rat(n: i64) -> Rat {
    Ratio::from_integer(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::One => Side::Two,
            Side::Two => Side::One,
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Side::One => 1,
            Side::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Part {
    L,
    R,
}

impl Part {
    pub fn other(self) -> Part {
        match self {
            Part::L => Part::R,
            Part::R => Part::L,
        }
    }
}

/// One block of the vertex set. Levels run from 1 to k; delusive blocks
/// carry a bipartition part instead of a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockLabel {
    S { side: Side },
    A { level: u32, side: Side },
    B { level: u32, side: Side },
    D { level: u32, part: Part },
}

impl BlockLabel {
    pub fn level(&self) -> Option<u32> {
        match self {
            BlockLabel::S { .. } => None,
            BlockLabel::A { level, .. }
            | BlockLabel::B { level, .. }
            | BlockLabel::D { level, .. } => Some(*level),
        }
    }

    pub fn is_s(&self) -> bool {
        matches!(self, BlockLabel::S { .. })
    }

    pub fn is_d(&self) -> bool {
        matches!(self, BlockLabel::D { .. })
    }

    /// The proper two-coloring: color 0 holds S^1, all A^1, all B^2 and the
    /// L parts; color 1 holds the mirror image. Every legal edge joins the
    /// two colors, which is what makes the whole instance bipartite.
    pub fn color(&self) -> u8 {
        match self {
            BlockLabel::S { side: Side::One } => 0,
            BlockLabel::S { side: Side::Two } => 1,
            BlockLabel::A { side: Side::One, .. } => 0,
            BlockLabel::A { side: Side::Two, .. } => 1,
            BlockLabel::B { side: Side::One, .. } => 1,
            BlockLabel::B { side: Side::Two, .. } => 0,
            BlockLabel::D { part: Part::L, .. } => 0,
            BlockLabel::D { part: Part::R, .. } => 1,
        }
    }

    /// Zero-padded key so lexicographic order matches logical order.
    pub fn canonical_key(&self) -> String {
        match self {
            BlockLabel::S { side } => format!("S^{}", side.index()),
            BlockLabel::A { level, side } => format!("A^{}_{:02}", side.index(), level),
            BlockLabel::B { level, side } => format!("B^{}_{:02}", side.index(), level),
            BlockLabel::D { level, part } => {
                format!("D_{:02}{}", level, if *part == Part::L { "L" } else { "R" })
            }
        }
    }
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockLabel::S { side } => write!(f, "S^{}", side.index()),
            BlockLabel::A { level, side } => write!(f, "A^{}_{}", side.index(), level),
            BlockLabel::B { level, side } => write!(f, "B^{}_{}", side.index(), level),
            BlockLabel::D { level, part } => {
                write!(f, "D_{}{}", level, if *part == Part::L { "L" } else { "R" })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    CoreOnly,
    SingleDelusive,
    FullHierarchy,
}

impl Variant {
    pub fn keeps_d_level(&self, level: u32) -> bool {
        match self {
            Variant::CoreOnly => false,
            Variant::SingleDelusive => level == 1,
            Variant::FullHierarchy => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum World {
    Yes,
    No,
}

/// All scalars defining one instance family. `k = 1/eps`, `s` plays the
/// role the paper gives to `log^4 N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub n_scale: u64,
    pub k: u32,
    pub d: u32,
    pub s: u32,
    pub variant: Variant,
    pub world: World,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamViolation {
    #[error("N={n} is not a positive multiple of 4k^2={modulus}")]
    Divisibility { n: u64, modulus: u64 },
    #[error("{field}={value} out of range: {requirement}")]
    Range {
        field: &'static str,
        value: u64,
        requirement: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid construction parameters: {0:?}")]
pub struct ParamError(pub Vec<ParamViolation>);

/// Soft regime flags: the instance is still generated, but some of the
/// paper's asymptotic assumptions do not hold at these sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeWarning {
    /// s >= eps^2 d; the NO-world cross weight at level k is clamped.
    SpecialScaleLarge { s: u32, eps_sq_d: String },
    /// d < 4 k^4, so eps^4 d < 4 and delusive weights are fractional.
    DegreeBelowRegular { d: u32, four_k4: u64 },
    /// The delusive blocks are smaller than their internal degree and the
    /// realizer will cap those demands.
    DelusiveBlockTight { block_half: u64, d_prime_floor: u32 },
}

pub fn build_params(
    n_scale: u64,
    k: u32,
    d: u32,
    s: u32,
    variant: Variant,
    world: World,
    seed: u64,
) -> Result<ConstructionParams, ParamError> {
    let mut violations = Vec::new();
    if k < 2 {
        violations.push(ParamViolation::Range {
            field: "k",
            value: k as u64,
            requirement: "k >= 2",
        });
    }
    if d < 1 {
        violations.push(ParamViolation::Range {
            field: "d",
            value: d as u64,
            requirement: "d >= 1",
        });
    }
    if s < 1 {
        violations.push(ParamViolation::Range {
            field: "s",
            value: s as u64,
            requirement: "s >= 1",
        });
    }
    if k >= 1 {
        let modulus = 4 * (k as u64) * (k as u64);
        if n_scale == 0 || n_scale % modulus != 0 {
            violations.push(ParamViolation::Divisibility {
                n: n_scale,
                modulus,
            });
        }
    }
    if violations.is_empty() {
        Ok(ConstructionParams {
            n_scale,
            k,
            d,
            s,
            variant,
            world,
            seed,
        })
    } else {
        Err(ParamError(violations))
    }
}

impl ConstructionParams {
    pub fn eps(&self) -> Rat {
        Ratio::new(1, self.k as i64)
    }

    /// d' = d (1 + eps^3) + s, the exact non-S row total.
    pub fn d_prime(&self) -> Rat {
        let d = rat(self.d as i64);
        let e = self.eps();
        d.clone() + d * e.clone() * e.clone() * e + rat(self.s as i64)
    }

    /// Slot count per non-S vertex: floor(d').
    pub fn slots(&self) -> u32 {
        self.d_prime().floor().to_integer() as u32
    }

    pub fn regime_warnings(&self) -> Vec<RegimeWarning> {
        let mut w = Vec::new();
        let e2d = Ratio::new(self.d as i64, (self.k as i64) * (self.k as i64));
        if rat(self.s as i64) >= e2d {
            w.push(RegimeWarning::SpecialScaleLarge {
                s: self.s,
                eps_sq_d: e2d.to_string(),
            });
        }
        let four_k4 = 4u64 * (self.k as u64).pow(4);
        if (self.d as u64) < four_k4 {
            w.push(RegimeWarning::DegreeBelowRegular {
                d: self.d,
                four_k4,
            });
        }
        let half_d = self.n_scale / (2 * (self.k as u64) * (self.k as u64));
        if half_d < self.slots() as u64 {
            w.push(RegimeWarning::DelusiveBlockTight {
                block_half: half_d,
                d_prime_floor: self.slots(),
            });
        }
        w
    }

    pub fn with_world(mut self, world: World) -> Self {
        self.world = world;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `ceil(ln(N)^4)`, the preset for `s` mirroring the paper's scale.
pub fn suggested_s(n_scale: u64) -> u32 {
    (n_scale as f64).ln().powi(4).ceil() as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes {
    pub sizes: Vec<(BlockLabel, u64)>,
}

impl BlockSizes {
    pub fn total(&self) -> u64 {
        self.sizes.iter().map(|(_, c)| *c).sum()
    }

    pub fn get(&self, label: BlockLabel) -> Option<u64> {
        self.sizes
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, c)| *c)
    }
}

pub fn block_sizes(params: &ConstructionParams) -> BlockSizes {
    let n = params.n_scale;
    let k = params.k;
    let quarter = n / 4;
    let a_top = (n - n / ((k as u64) * (k as u64))) / 4; // (1 - eps^2) N / 4
    let d_half = n / (2 * (k as u64) * (k as u64)); // eps^2 N / 2 per part

    let mut sizes = Vec::new();
    for side in [Side::One, Side::Two] {
        sizes.push((BlockLabel::S { side }, quarter));
        for level in 1..=k {
            sizes.push((BlockLabel::B { level, side }, quarter));
            let a_count = if level == k { a_top } else { quarter };
            sizes.push((BlockLabel::A { level, side }, a_count));
        }
    }
    for level in 1..=k {
        if params.variant.keeps_d_level(level) {
            sizes.push((BlockLabel::D { level, part: Part::L }, d_half));
            sizes.push((BlockLabel::D { level, part: Part::R }, d_half));
        }
    }
    sizes.sort_by_key(|(l, _)| *l);
    BlockSizes { sizes }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("negative weight {weight} in row {row} toward {target}")]
    NegativeWeight {
        row: String,
        target: String,
        weight: String,
    },
}

/// Exact per-block categorical neighbor tables for one (world, variant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTable {
    pub world: World,
    pub variant: Variant,
    pub d_prime: Rat,
    /// Row entries sorted by target label; zero weights are dropped.
    pub rows: BTreeMap<BlockLabel, Vec<(BlockLabel, Rat)>>,
    /// True when the NO-world level-k cross weight went negative and was
    /// folded into the same-side A_k weight to keep the row total exact.
    pub clamped: bool,
}

impl TransitionTable {
    pub fn row(&self, label: BlockLabel) -> Option<&[(BlockLabel, Rat)]> {
        self.rows.get(&label).map(|v| v.as_slice())
    }

    pub fn weight(&self, from: BlockLabel, to: BlockLabel) -> Rat {
        self.row(from)
            .and_then(|r| r.iter().find(|(t, _)| *t == to).map(|(_, w)| w.clone()))
            .unwrap_or_else(Rat::zero)
    }

    /// The delusive self-row weight p_i = (1 - 2e + 2ie^2 - 5e^2/2 + 3e^4) d + s,
    /// before any variant renormalization.
    pub fn delusive_self_weight(params: &ConstructionParams, level: u32) -> Rat {
        let e = params.eps();
        let d = rat(params.d as i64);
        let e2 = e.clone() * e.clone();
        let e4 = e2.clone() * e2.clone();
        let coeff = Rat::one() - rat(2) * e + rat(2 * level as i64) * e2.clone()
            - Ratio::new(5, 2) * e2
            + rat(3) * e4;
        coeff * d + rat(params.s as i64)
    }

    /// Serializes with sorted row keys and `num/den` weights, for golden
    /// file comparisons.
    pub fn to_canonical_json(&self) -> String {
        let mut rows = BTreeMap::new();
        for (src, entries) in &self.rows {
            let mut row = BTreeMap::new();
            for (tgt, w) in entries {
                row.insert(tgt.canonical_key(), format!("{}/{}", w.numer(), w.denom()));
            }
            rows.insert(src.canonical_key(), row);
        }
        let doc = CanonicalTable {
            world: self.world,
            variant: self.variant,
            d_prime: format!("{}/{}", self.d_prime.numer(), self.d_prime.denom()),
            clamped: self.clamped,
            rows,
        };
        serde_json::to_string_pretty(&doc).expect("table serialization cannot fail")
    }
}

#[derive(Serialize)]
struct CanonicalTable {
    world: World,
    variant: Variant,
    d_prime: String,
    clamped: bool,
    rows: BTreeMap<String, BTreeMap<String, String>>,
}

/// The delusive part adjacent to a core label under the two-coloring.
fn d_part_for(core: BlockLabel) -> Part {
    if core.color() == 0 {
        Part::R
    } else {
        Part::L
    }
}

/// Which A-side / B-side a delusive part reaches.
fn sides_for_part(part: Part) -> (Side, Side) {
    match part {
        // L has color 0 and reaches color 1: A^2 and B^1.
        Part::L => (Side::Two, Side::One),
        Part::R => (Side::One, Side::Two),
    }
}

pub fn transition_table(params: &ConstructionParams) -> Result<TransitionTable, TableError> {
    let k = params.k;
    let d = rat(params.d as i64);
    let s = rat(params.s as i64);
    let e = params.eps();
    let e2 = e.clone() * e.clone();
    let e3 = e2.clone() * e.clone();
    let e4 = e2.clone() * e2.clone();
    let d_prime = params.d_prime();

    let mut clamped = false;
    let mut rows: BTreeMap<BlockLabel, Vec<(BlockLabel, Rat)>> = BTreeMap::new();

    for side in [Side::One, Side::Two] {
        let j = side;
        let oj = side.other();

        // S^j row: exactly s slots, all toward B^j_1.
        rows.insert(
            BlockLabel::S { side: j },
            vec![(BlockLabel::B { level: 1, side: j }, s.clone())],
        );

        for i in 1..=k {
            let b_label = BlockLabel::B { level: i, side: j };
            let mut row = Vec::new();
            if i == 1 {
                row.push((BlockLabel::S { side: j }, s.clone()));
                row.push((BlockLabel::A { level: 1, side: j }, d.clone()));
                row.push((
                    BlockLabel::D {
                        level: 1,
                        part: d_part_for(b_label),
                    },
                    e3.clone() * d.clone(),
                ));
            } else if i < k {
                row.push((BlockLabel::A { level: i - 1, side: j }, s.clone()));
                row.push((BlockLabel::A { level: i, side: j }, d.clone()));
                row.push((
                    BlockLabel::D {
                        level: i,
                        part: d_part_for(b_label),
                    },
                    rat((k - i + 1) as i64) * e4.clone() * d.clone(),
                ));
                for m in 1..i {
                    row.push((
                        BlockLabel::D {
                            level: m,
                            part: d_part_for(b_label),
                        },
                        e4.clone() * d.clone(),
                    ));
                }
            } else {
                // Level k differs between the worlds.
                row.push((BlockLabel::A { level: k - 1, side: j }, s.clone()));
                match params.world {
                    World::Yes => {
                        row.push((
                            BlockLabel::A { level: k, side: j },
                            (Rat::one() - e2.clone()) * d.clone(),
                        ));
                        row.push((
                            BlockLabel::B { level: k, side: oj },
                            e2.clone() * d.clone(),
                        ));
                    }
                    World::No => {
                        let ds = d.clone() + s.clone();
                        let mut a_w = (Rat::one() - e2.clone()) * ds.clone();
                        let mut cross = e2.clone() * ds - s.clone();
                        if cross < Rat::zero() {
                            // Desk-scale clamp: fold the negative cross mass
                            // into the same-side A_k weight so the row still
                            // sums to d' exactly.
                            a_w += cross.clone();
                            cross = Rat::zero();
                            clamped = true;
                        }
                        row.push((BlockLabel::A { level: k, side: j }, a_w));
                        if !cross.is_zero() {
                            row.push((BlockLabel::B { level: k, side: oj }, cross));
                        }
                    }
                }
                for m in 1..=k {
                    row.push((
                        BlockLabel::D {
                            level: m,
                            part: d_part_for(b_label),
                        },
                        e4.clone() * d.clone(),
                    ));
                }
            }
            rows.insert(b_label, row);

            let a_label = BlockLabel::A { level: i, side: j };
            let mut row = Vec::new();
            if i < k {
                row.push((BlockLabel::B { level: i + 1, side: j }, s.clone()));
                row.push((BlockLabel::B { level: i, side: j }, d.clone()));
                row.push((
                    BlockLabel::D {
                        level: i,
                        part: d_part_for(a_label),
                    },
                    rat((k - i + 1) as i64) * e4.clone() * d.clone(),
                ));
                for m in 1..i {
                    row.push((
                        BlockLabel::D {
                            level: m,
                            part: d_part_for(a_label),
                        },
                        e4.clone() * d.clone(),
                    ));
                }
            } else {
                match params.world {
                    World::Yes => {
                        row.push((BlockLabel::A { level: k, side: oj }, s.clone()));
                        row.push((BlockLabel::B { level: k, side: j }, d.clone()));
                    }
                    World::No => {
                        row.push((BlockLabel::B { level: k, side: j }, d.clone() + s.clone()));
                    }
                }
                for m in 1..=k {
                    row.push((
                        BlockLabel::D {
                            level: m,
                            part: d_part_for(a_label),
                        },
                        e4.clone() * d.clone(),
                    ));
                }
            }
            rows.insert(a_label, row);
        }
    }

    // Delusive rows, with both core sides folded onto the one side each
    // part can reach under the two-coloring.
    for i in 1..=k {
        for part in [Part::L, Part::R] {
            let (a_side, b_side) = sides_for_part(part);
            let mut row = Vec::new();
            row.push((
                BlockLabel::D {
                    level: i,
                    part: part.other(),
                },
                TransitionTable::delusive_self_weight(params, i),
            ));
            for m in 1..=k {
                if m != i {
                    row.push((
                        BlockLabel::D {
                            level: m,
                            part: part.other(),
                        },
                        e4.clone() * d.clone(),
                    ));
                }
            }
            row.push((
                BlockLabel::A { level: k, side: a_side },
                rat(2) * (e2.clone() - e4.clone()) * d.clone(),
            ));
            row.push((
                BlockLabel::B { level: k, side: b_side },
                e2.clone() * d.clone() / rat(2),
            ));
            if i < k {
                let own = rat((k - i + 1) as i64) * e2.clone() * d.clone() / rat(2);
                row.push((BlockLabel::A { level: i, side: a_side }, own.clone()));
                row.push((BlockLabel::B { level: i, side: b_side }, own));
                for mid in (i + 1)..k {
                    let w = e2.clone() * d.clone() / rat(2);
                    row.push((BlockLabel::A { level: mid, side: a_side }, w.clone()));
                    row.push((BlockLabel::B { level: mid, side: b_side }, w));
                }
            }
            rows.insert(BlockLabel::D { level: i, part }, row);
        }
    }

    // Variant filtering: drop out-of-variant delusive rows and columns,
    // then renormalize every non-S row back to d'.
    let keep = |l: &BlockLabel| match l {
        BlockLabel::D { level, .. } => params.variant.keeps_d_level(*level),
        _ => true,
    };
    let mut filtered: BTreeMap<BlockLabel, Vec<(BlockLabel, Rat)>> = BTreeMap::new();
    for (src, row) in rows {
        if !keep(&src) {
            continue;
        }
        let mut row: Vec<(BlockLabel, Rat)> = row
            .into_iter()
            .filter(|(t, w)| keep(t) && !w.is_zero())
            .collect();
        if !src.is_s() {
            let total: Rat = row.iter().map(|(_, w)| w.clone()).sum();
            if total != d_prime && !total.is_zero() {
                let scale = d_prime.clone() / total;
                for (_, w) in row.iter_mut() {
                    *w *= scale.clone();
                }
            }
        }
        row.sort_by_key(|(t, _)| *t);
        filtered.insert(src, row);
    }

    for (src, row) in &filtered {
        for (tgt, w) in row {
            if w.is_negative() {
                return Err(TableError::NegativeWeight {
                    row: src.to_string(),
                    target: tgt.to_string(),
                    weight: w.to_string(),
                });
            }
        }
    }

    Ok(TransitionTable {
        world: params.world,
        variant: params.variant,
        d_prime,
        rows: filtered,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowCheck {
    pub row: String,
    pub sum: String,
    pub residual: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub rows: Vec<RowCheck>,
    pub negative_weights: Vec<String>,
}

/// Re-checks, in exact arithmetic, that every non-S row sums to d' and no
/// weight is negative. Reports offenders instead of panicking.
pub fn validate_table(table: &TransitionTable) -> ValidationReport {
    let mut rows = Vec::new();
    let mut negative = Vec::new();
    let mut ok = true;
    for (src, row) in &table.rows {
        for (tgt, w) in row {
            if w.is_negative() {
                negative.push(format!("{} -> {}", src, tgt));
                ok = false;
            }
        }
        if src.is_s() {
            continue;
        }
        let sum: Rat = row.iter().map(|(_, w)| w.clone()).sum();
        let residual = sum.clone() - table.d_prime.clone();
        let row_ok = residual.is_zero();
        ok &= row_ok;
        rows.push(RowCheck {
            row: src.to_string(),
            sum: sum.to_string(),
            residual: residual.to_string(),
            ok: row_ok,
        });
    }
    ValidationReport {
        ok,
        rows,
        negative_weights: negative,
    }
}
