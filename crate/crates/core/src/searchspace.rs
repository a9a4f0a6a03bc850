//! The joint architecture/hyperparameter space: candidate validation,
//! sampling, evolutionary edits and the dual-graph encoding consumed by the
//! comparator.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Side length of the padded dual-graph adjacency matrix.
pub const PAD_NODES: usize = 14;
/// Length of the hyperparameter vector.
pub const HYPER_DIM: usize = 6;
/// Number of operator kinds (one-hot width).
pub const NUM_OPS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "GDCC")]
    Gdcc,
    #[serde(rename = "INF_T")]
    InfT,
    #[serde(rename = "DGCN")]
    Dgcn,
    #[serde(rename = "INF_S")]
    InfS,
    #[serde(rename = "IDENTITY")]
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Temporal,
    Spatial,
    Skip,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; NUM_OPS] = [
        OperatorKind::Gdcc,
        OperatorKind::InfT,
        OperatorKind::Dgcn,
        OperatorKind::InfS,
        OperatorKind::Identity,
    ];

    pub fn category(self) -> Category {
        match self {
            OperatorKind::Gdcc | OperatorKind::InfT => Category::Temporal,
            OperatorKind::Dgcn | OperatorKind::InfS => Category::Spatial,
            OperatorKind::Identity => Category::Skip,
        }
    }

    /// Column of this kind in the operator one-hot encoding.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Gdcc => "GDCC",
            OperatorKind::InfT => "INF_T",
            OperatorKind::Dgcn => "DGCN",
            OperatorKind::InfS => "INF_S",
            OperatorKind::Identity => "IDENTITY",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operator edge `src -> dst` of an ST-block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, OperatorKind)", into = "(usize, usize, OperatorKind)")]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub op: OperatorKind,
}

impl From<(usize, usize, OperatorKind)> for Edge {
    fn from((src, dst, op): (usize, usize, OperatorKind)) -> Self {
        Self { src, dst, op }
    }
}

impl From<Edge> for (usize, usize, OperatorKind) {
    fn from(e: Edge) -> Self {
        (e.src, e.dst, e.op)
    }
}

/// ST-block DAG over latent nodes `h_0..h_{C-1}`; edges are kept sorted by
/// `(src, dst)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawDag")]
pub struct ArchDag {
    #[serde(rename = "C")]
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
}

#[derive(Deserialize)]
struct RawDag {
    #[serde(rename = "C")]
    num_nodes: usize,
    edges: Vec<Edge>,
}

impl From<RawDag> for ArchDag {
    fn from(r: RawDag) -> Self {
        ArchDag::new(r.num_nodes, r.edges)
    }
}

impl ArchDag {
    pub fn new(num_nodes: usize, mut edges: Vec<Edge>) -> Self {
        edges.sort();
        Self { num_nodes, edges }
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.dst == node).count()
    }

    /// Number of edges on the longest path through the DAG.
    pub fn longest_path(&self) -> usize {
        let mut depth = vec![0usize; self.num_nodes.max(1)];
        for e in &self.edges {
            if e.src < e.dst && e.dst < depth.len() {
                depth[e.dst] = depth[e.dst].max(depth[e.src] + 1);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    pub fn count(&self, op: OperatorKind) -> usize {
        self.edges.iter().filter(|e| e.op == op).count()
    }

    pub fn count_category(&self, c: Category) -> usize {
        self.edges.iter().filter(|e| e.op.category() == c).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HyperField {
    B,
    C,
    H,
    I,
    U,
    Delta,
}

impl HyperField {
    pub const ALL: [HyperField; HYPER_DIM] = [
        HyperField::B,
        HyperField::C,
        HyperField::H,
        HyperField::I,
        HyperField::U,
        HyperField::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HyperField::B => "B",
            HyperField::C => "C",
            HyperField::H => "H",
            HyperField::I => "I",
            HyperField::U => "U",
            HyperField::Delta => "delta",
        }
    }
}

/// `(B, C, H, I, U, delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperVector {
    #[serde(rename = "B")]
    pub b: u32,
    #[serde(rename = "C")]
    pub c: u32,
    #[serde(rename = "H")]
    pub h: u32,
    #[serde(rename = "I")]
    pub i: u32,
    #[serde(rename = "U")]
    pub u: u32,
    pub delta: u32,
}

impl HyperVector {
    pub fn from_array(v: [u32; HYPER_DIM]) -> Self {
        Self {
            b: v[0],
            c: v[1],
            h: v[2],
            i: v[3],
            u: v[4],
            delta: v[5],
        }
    }

    pub fn to_array(self) -> [u32; HYPER_DIM] {
        [self.b, self.c, self.h, self.i, self.u, self.delta]
    }

    pub fn get(&self, f: HyperField) -> u32 {
        self.to_array()[f as usize]
    }

    pub fn set(&mut self, f: HyperField, v: u32) {
        let mut a = self.to_array();
        a[f as usize] = v;
        *self = Self::from_array(a);
    }
}

/// A search candidate: an ST-block architecture with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchHyper {
    pub arch: ArchDag,
    pub hyper: HyperVector,
}

impl ArchHyper {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ArchHyper serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Stable 64-bit digest of the canonical JSON form.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_json().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn num_ops(&self) -> usize {
        self.arch.edges.len()
    }
}

/// Operator set, hyperparameter domains and in-degree bound of a search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub operators: Vec<OperatorKind>,
    /// Allowed values per field, indexed by [`HyperField`].
    pub domains: [Vec<u32>; HYPER_DIM],
    pub max_in_degree: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            operators: OperatorKind::ALL.to_vec(),
            domains: [
                vec![2, 4, 6],
                vec![5, 7],
                vec![32, 48, 64],
                vec![64, 128, 256],
                vec![0, 1],
                vec![0, 1],
            ],
            max_in_degree: 2,
        }
    }
}

impl SpaceConfig {
    pub fn domain(&self, f: HyperField) -> &[u32] {
        &self.domains[f as usize]
    }

    pub fn bounds(&self, f: HyperField) -> (u32, u32) {
        let d = self.domain(f);
        (
            d.iter().copied().min().unwrap_or(0),
            d.iter().copied().max().unwrap_or(0),
        )
    }

    /// Hex digest identifying this space, recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("space serializes").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    BackwardEdge { src: usize, dst: usize },
    DuplicateEdge { src: usize, dst: usize },
    NodeOutOfRange { node: usize },
    InDegree { node: usize, degree: usize },
    HyperOffDomain { field: HyperField, value: u32 },
    NodeCountMismatch { arch: usize, hyper: u32 },
    OperatorNotInSpace(OperatorKind),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BackwardEdge { src, dst } => write!(f, "backward edge {src}->{dst}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src}->{dst}"),
            Violation::NodeOutOfRange { node } => write!(f, "node {node} out of range"),
            Violation::InDegree { node, degree } => write!(f, "node {node} in-degree {degree}"),
            Violation::HyperOffDomain { field, value } => {
                write!(f, "hyper {} = {value} off domain", field.name())
            }
            Violation::NodeCountMismatch { arch, hyper } => {
                write!(f, "C mismatch: arch has {arch} nodes, hyper says {hyper}")
            }
            Violation::OperatorNotInSpace(op) => write!(f, "operator {op} not in space"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchSpaceError {
    #[error("dual graph needs {0} nodes, more than the padded size {PAD_NODES}")]
    TooManyNodes(usize),
    #[error("hyper field {} value {value} is outside its domain", field.name())]
    OffDomain { field: HyperField, value: u32 },
    #[error("space enumeration exceeds {0} candidates")]
    TooLarge(usize),
}

/// Checks every topology rule and domain constraint of `ah` against `space`.
pub fn validate(ah: &ArchHyper, space: &SpaceConfig) -> ValidationReport {
    let mut v = Vec::new();
    let c = ah.arch.num_nodes;
    if c as u32 != ah.hyper.c {
        v.push(Violation::NodeCountMismatch { arch: c, hyper: ah.hyper.c });
    }
    let mut seen = BTreeSet::new();
    for e in &ah.arch.edges {
        if e.src >= e.dst {
            v.push(Violation::BackwardEdge { src: e.src, dst: e.dst });
        }
        if e.src >= c || e.dst >= c {
            v.push(Violation::NodeOutOfRange { node: e.src.max(e.dst) });
        }
        if !seen.insert((e.src, e.dst)) {
            v.push(Violation::DuplicateEdge { src: e.src, dst: e.dst });
        }
        if !space.operators.contains(&e.op) {
            v.push(Violation::OperatorNotInSpace(e.op));
        }
    }
    for node in 0..c {
        let d = ah.arch.in_degree(node);
        let ok = if node == 0 { d == 0 } else { (1..=space.max_in_degree).contains(&d) };
        if !ok {
            v.push(Violation::InDegree { node, degree: d });
        }
    }
    for f in HyperField::ALL {
        let value = ah.hyper.get(f);
        if !space.domain(f).contains(&value) {
            v.push(Violation::HyperOffDomain { field: f, value });
        }
    }
    ValidationReport { violations: v }
}

fn sample_dag<R: Rng>(rng: &mut R, c: usize, space: &SpaceConfig) -> ArchDag {
    let mut edges = Vec::new();
    for dst in 1..c {
        let max_deg = space.max_in_degree.min(dst).max(1);
        let deg = rng.random_range(1..=max_deg);
        let preds = rand::seq::index::sample(rng, dst, deg);
        for src in preds {
            let op = *space.operators.choose(rng).expect("space has operators");
            edges.push(Edge { src, dst, op });
        }
    }
    ArchDag::new(c, edges)
}

/// Draws a valid candidate using `rng`.
pub fn sample_with<R: Rng>(rng: &mut R, space: &SpaceConfig) -> ArchHyper {
    let mut vals = [0u32; HYPER_DIM];
    for f in HyperField::ALL {
        vals[f as usize] = *space.domain(f).choose(rng).expect("non-empty domain");
    }
    let hyper = HyperVector::from_array(vals);
    let arch = sample_dag(rng, hyper.c as usize, space);
    ArchHyper { arch, hyper }
}

/// Draws a valid candidate, deterministically from `seed`.
pub fn sample_arch_hyper(seed: u64, space: &SpaceConfig) -> ArchHyper {
    sample_with(&mut ChaCha8Rng::seed_from_u64(seed), space)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EditKind {
    Operator,
    Rewire,
    Hyper,
}

fn rewire_sites(ah: &ArchHyper) -> Vec<(usize, Vec<usize>)> {
    let edges = &ah.arch.edges;
    edges
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let alts: Vec<usize> = (0..e.dst)
                .filter(|&s| s != e.src && !edges.iter().any(|o| o.src == s && o.dst == e.dst))
                .collect();
            (!alts.is_empty()).then_some((i, alts))
        })
        .collect()
}

/// Applies one atomic edit: swap an edge's operator, move an edge's source,
/// or change one hyperparameter. Changing `C` re-samples the DAG.
/// Returns the input unchanged only when the space admits no edit at all.
pub fn mutate_with<R: Rng>(ah: &ArchHyper, rng: &mut R, space: &SpaceConfig) -> ArchHyper {
    let mut kinds = Vec::new();
    if space.operators.len() > 1 && !ah.arch.edges.is_empty() {
        kinds.push(EditKind::Operator);
    }
    let rewires = rewire_sites(ah);
    if !rewires.is_empty() {
        kinds.push(EditKind::Rewire);
    }
    let fields: Vec<HyperField> = HyperField::ALL
        .into_iter()
        .filter(|&f| space.domain(f).iter().any(|&v| v != ah.hyper.get(f)))
        .collect();
    if !fields.is_empty() {
        kinds.push(EditKind::Hyper);
    }
    let Some(&kind) = kinds.choose(rng) else {
        return ah.clone();
    };
    let mut out = ah.clone();
    match kind {
        EditKind::Operator => {
            let i = rng.random_range(0..out.arch.edges.len());
            let cur = out.arch.edges[i].op;
            let choices: Vec<OperatorKind> = space.operators.iter().copied().filter(|&o| o != cur).collect();
            out.arch.edges[i].op = *choices.choose(rng).expect("another operator");
        }
        EditKind::Rewire => {
            let (i, alts) = rewires.choose(rng).expect("rewire site");
            out.arch.edges[*i].src = *alts.choose(rng).expect("alternative source");
            out.arch.edges.sort();
        }
        EditKind::Hyper => {
            let f = *fields.choose(rng).expect("field");
            let cur = out.hyper.get(f);
            let choices: Vec<u32> = space.domain(f).iter().copied().filter(|&v| v != cur).collect();
            let v = *choices.choose(rng).expect("another value");
            out.hyper.set(f, v);
            if f == HyperField::C {
                out.arch = sample_dag(rng, v as usize, space);
            }
        }
    }
    out
}

pub fn mutate(ah: &ArchHyper, seed: u64, space: &SpaceConfig) -> ArchHyper {
    mutate_with(ah, &mut ChaCha8Rng::seed_from_u64(seed), space)
}

/// Child takes the whole DAG of one parent (fair coin) and the hyperparameters
/// of the other, with `C` forced to the DAG parent's node count.
pub fn crossover_with<R: Rng>(a: &ArchHyper, b: &ArchHyper, rng: &mut R) -> ArchHyper {
    let (arch_parent, hyper_parent) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
    let mut hyper = hyper_parent.hyper;
    hyper.c = arch_parent.hyper.c;
    ArchHyper {
        arch: arch_parent.arch.clone(),
        hyper,
    }
}

pub fn crossover(a: &ArchHyper, b: &ArchHyper, seed: u64) -> ArchHyper {
    crossover_with(a, b, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// True iff the DAG has at least one spatial and one temporal operator.
pub fn contains_spatial_and_temporal(ah: &ArchHyper) -> bool {
    ah.arch.count_category(Category::Spatial) > 0 && ah.arch.count_category(Category::Temporal) > 0
}

/// Min-max normalisation of each field against its domain bounds.
pub fn normalize_hyper(h: &HyperVector, space: &SpaceConfig) -> Result<[f64; HYPER_DIM], SearchSpaceError> {
    let mut out = [0.0; HYPER_DIM];
    for f in HyperField::ALL {
        let value = h.get(f);
        if !space.domain(f).contains(&value) {
            return Err(SearchSpaceError::OffDomain { field: f, value });
        }
        let (lo, hi) = space.bounds(f);
        if hi > lo {
            out[f as usize] = f64::from(value - lo) / f64::from(hi - lo);
        }
    }
    Ok(out)
}

/// Dual encoding of a candidate: one node per operator edge plus a trailing
/// Hyper node, padded to [`PAD_NODES`].
#[derive(Clone, Debug, PartialEq)]
pub struct ArchHyperGraph {
    pub adjacency: [[u8; PAD_NODES]; PAD_NODES],
    pub op_onehots: Vec<[u8; NUM_OPS]>,
    pub hyper_raw: HyperVector,
    pub num_real_nodes: usize,
}

impl ArchHyperGraph {
    /// Index of the Hyper node.
    pub fn hyper_index(&self) -> usize {
        self.num_real_nodes - 1
    }
}

pub fn to_dual_graph(ah: &ArchHyper) -> Result<ArchHyperGraph, SearchSpaceError> {
    let mut edges = ah.arch.edges.clone();
    edges.sort();
    let n = edges.len();
    if n + 1 > PAD_NODES {
        return Err(SearchSpaceError::TooManyNodes(n + 1));
    }
    let mut adjacency = [[0u8; PAD_NODES]; PAD_NODES];
    for (u, eu) in edges.iter().enumerate() {
        for (v, ev) in edges.iter().enumerate() {
            if eu.dst == ev.src {
                adjacency[u][v] = 1;
            }
        }
        adjacency[u][n] = 1;
        adjacency[n][u] = 1;
    }
    for (i, row) in adjacency.iter_mut().enumerate().take(n + 1) {
        row[i] = 1;
    }
    let op_onehots = edges
        .iter()
        .map(|e| {
            let mut row = [0u8; NUM_OPS];
            row[e.op.index()] = 1;
            row
        })
        .collect();
    Ok(ArchHyperGraph {
        adjacency,
        op_onehots,
        hyper_raw: ah.hyper,
        num_real_nodes: n + 1,
    })
}

fn enumerate_dags(c: usize, space: &SpaceConfig) -> Vec<Vec<(usize, usize)>> {
    // every choice of predecessor sets, node by node
    let mut partial: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for dst in 1..c {
        let mut sets: Vec<Vec<usize>> = Vec::new();
        for mask in 1u32..(1 << dst) {
            let deg = mask.count_ones() as usize;
            if deg <= space.max_in_degree {
                sets.push((0..dst).filter(|s| mask & (1 << s) != 0).collect());
            }
        }
        partial = partial
            .into_iter()
            .flat_map(|p| {
                sets.iter().map(move |s| {
                    let mut q = p.clone();
                    q.extend(s.iter().map(|&src| (src, dst)));
                    q
                })
            })
            .collect();
    }
    partial
}

/// Lists every candidate of a small space, failing once more than `limit`
/// would be produced.
pub fn enumerate_space(space: &SpaceConfig, limit: usize) -> Result<Vec<ArchHyper>, SearchSpaceError> {
    let mut out = Vec::new();
    let mut hypers = vec![[0u32; HYPER_DIM]];
    for f in HyperField::ALL {
        hypers = hypers
            .into_iter()
            .flat_map(|h| {
                space.domain(f).iter().map(move |&v| {
                    let mut h = h;
                    h[f as usize] = v;
                    h
                })
            })
            .collect();
    }
    for h in hypers {
        let hyper = HyperVector::from_array(h);
        for structure in enumerate_dags(hyper.c as usize, space) {
            let k = structure.len();
            let combos = space.operators.len().pow(k as u32);
            for mut code in 0..combos {
                let edges = structure
                    .iter()
                    .map(|&(src, dst)| {
                        let op = space.operators[code % space.operators.len()];
                        code /= space.operators.len();
                        Edge { src, dst, op }
                    })
                    .collect();
                out.push(ArchHyper {
                    arch: ArchDag::new(hyper.c as usize, edges),
                    hyper,
                });
                if out.len() > limit {
                    return Err(SearchSpaceError::TooLarge(limit));
                }
            }
        }
    }
    Ok(out)
}

/// Shuffles `items` with a seeded generator; shared helper for deterministic
/// bank and batch ordering.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ah(c: usize, edges: &[(usize, usize, OperatorKind)], hyper: [u32; 6]) -> ArchHyper {
        ArchHyper {
            arch: ArchDag::new(c, edges.iter().map(|&e| e.into()).collect()),
            hyper: HyperVector::from_array(hyper),
        }
    }

    use OperatorKind::*;

    #[test]
    fn categories() {
        assert_eq!(Gdcc.category(), Category::Temporal);
        assert_eq!(InfT.category(), Category::Temporal);
        assert_eq!(Dgcn.category(), Category::Spatial);
        assert_eq!(InfS.category(), Category::Spatial);
        assert_eq!(Identity.category(), Category::Skip);
        assert_eq!(OperatorKind::ALL.len(), NUM_OPS);
    }

    #[test]
    fn unconnected_nodes_are_reported() {
        let space = SpaceConfig::default();
        let r = validate(&ah(5, &[(0, 1, Gdcc)], [2, 5, 32, 64, 0, 0]), &space);
        let msgs: Vec<String> = r.violations.iter().map(ToString::to_string).collect();
        assert!(msgs.contains(&"node 2 in-degree 0".to_string()), "{msgs:?}");
    }

    #[test]
    fn backward_edge_is_reported() {
        let space = SpaceConfig::default();
        let r = validate(&ah(5, &[(1, 0, Gdcc)], [2, 5, 32, 64, 0, 0]), &space);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::BackwardEdge { src: 1, dst: 0 })));
    }

    #[test]
    fn duplicate_mismatch_and_domain_reported() {
        let space = SpaceConfig::default();
        let r = validate(
            &ah(5, &[(0, 1, Gdcc), (0, 1, Dgcn)], [3, 7, 32, 64, 0, 0]),
            &space,
        );
        assert!(r.violations.iter().any(|v| matches!(v, Violation::DuplicateEdge { .. })));
        assert!(r.violations.iter().any(|v| matches!(v, Violation::NodeCountMismatch { .. })));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::HyperOffDomain { field: HyperField::B, value: 3 })));
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let space = SpaceConfig::default();
        assert_eq!(sample_arch_hyper(42, &space), sample_arch_hyper(42, &space));
        let mut b2 = 0;
        for seed in 0..10_000 {
            let a = sample_arch_hyper(seed, &space);
            assert!(validate(&a, &space).is_ok(), "{}", validate(&a, &space));
            assert!(a.num_ops() < PAD_NODES);
            b2 += usize::from(a.hyper.b == 2);
        }
        let freq = b2 as f64 / 10_000.0;
        assert!((freq - 1.0 / 3.0).abs() < 0.02, "{freq}");
    }

    #[test]
    fn mutation_makes_one_edit() {
        let space = SpaceConfig::default();
        for seed in 0..2_000 {
            let a = sample_arch_hyper(seed, &space);
            let m = mutate(&a, seed + 1, &space);
            assert!(validate(&m, &space).is_ok());
            assert_eq!(m, mutate(&a, seed + 1, &space));
            let hyper_diff = HyperField::ALL.iter().filter(|&&f| a.hyper.get(f) != m.hyper.get(f)).count();
            if a.hyper.c != m.hyper.c {
                assert_eq!(hyper_diff, 1);
                continue;
            }
            let edge_diff = a.arch.edges.iter().filter(|e| !m.arch.edges.contains(e)).count();
            assert_eq!(hyper_diff + edge_diff, 1, "{} -> {}", a.to_json(), m.to_json());
        }
    }

    #[test]
    fn crossover_contract() {
        let space = SpaceConfig::default();
        let a = sample_arch_hyper(1, &space);
        assert_eq!(crossover(&a, &a, 3), a);
        for seed in 0..500 {
            let x = sample_arch_hyper(2 * seed, &space);
            let y = sample_arch_hyper(2 * seed + 1, &space);
            let child = crossover(&x, &y, seed);
            assert!(validate(&child, &space).is_ok());
            let (arch_p, hyper_p) = if child.arch == x.arch { (&x, &y) } else { (&y, &x) };
            assert_eq!(child.arch, arch_p.arch);
            let mut expect = hyper_p.hyper;
            expect.c = arch_p.hyper.c;
            assert_eq!(child.hyper, expect);
        }
    }

    #[test]
    fn spatial_and_temporal_predicate() {
        let h = [2, 5, 32, 64, 0, 0];
        let identity = ah(5, &[(0, 1, Identity), (1, 2, Identity), (2, 3, Identity), (3, 4, Identity)], h);
        assert!(!contains_spatial_and_temporal(&identity));
        let mixed = ah(5, &[(0, 1, Gdcc), (1, 2, Dgcn), (2, 3, Identity), (3, 4, Identity)], h);
        assert!(contains_spatial_and_temporal(&mixed));
        let temporal = ah(5, &[(0, 1, Gdcc), (1, 2, InfT), (2, 3, Gdcc), (3, 4, InfT)], h);
        assert!(!contains_spatial_and_temporal(&temporal));
    }

    #[test]
    fn single_edge_dual_graph() {
        let g = to_dual_graph(&ah(2, &[(0, 1, Gdcc)], [2, 5, 32, 64, 0, 0])).unwrap();
        let mut nz = Vec::new();
        for (i, row) in g.adjacency.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 {
                    nz.push((i, j));
                }
            }
        }
        assert_eq!(nz, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(g.num_real_nodes, 2);
    }

    #[test]
    fn dual_edges_follow_flow() {
        let g = to_dual_graph(&ah(3, &[(0, 1, Gdcc), (1, 2, Dgcn)], [2, 5, 32, 64, 0, 0])).unwrap();
        assert_eq!(g.adjacency[0][1], 1);
        assert_eq!(g.adjacency[1][0], 0);
    }

    #[test]
    fn too_many_operator_nodes_rejected() {
        let edges: Vec<(usize, usize, OperatorKind)> =
            (1..8).flat_map(|d| [(d - 1, d, Gdcc), (0, d, Dgcn)]).filter(|e| e.0 < e.1).collect();
        let big = ah(8, &edges, [2, 8, 32, 64, 0, 0]);
        assert!(big.num_ops() + 1 > PAD_NODES);
        assert!(matches!(to_dual_graph(&big), Err(SearchSpaceError::TooManyNodes(_))));
    }

    #[test]
    fn normalization_examples() {
        let space = SpaceConfig::default();
        let n = normalize_hyper(&HyperVector::from_array([4, 5, 32, 64, 0, 0]), &space).unwrap();
        assert_eq!(n[0], 0.5);
        assert_eq!(n[2], 0.0);
        let z = normalize_hyper(&HyperVector::from_array([2, 5, 32, 64, 0, 0]), &space).unwrap();
        assert_eq!(z, [0.0; 6]);
        let one = normalize_hyper(&HyperVector::from_array([6, 7, 64, 256, 1, 1]), &space).unwrap();
        assert_eq!(one, [1.0; 6]);
        assert!(normalize_hyper(&HyperVector::from_array([3, 5, 32, 64, 0, 0]), &space).is_err());
    }

    #[test]
    fn degenerate_domain_normalizes_to_zero() {
        let mut space = SpaceConfig::default();
        space.domains[0] = vec![4];
        let n = normalize_hyper(&HyperVector::from_array([4, 5, 32, 64, 0, 0]), &space).unwrap();
        assert_eq!(n[0], 0.0);
    }

    #[test]
    fn json_schema() {
        let a = ah(3, &[(1, 2, Dgcn), (0, 1, Gdcc)], [2, 5, 32, 64, 0, 1]);
        let s = a.to_json();
        assert_eq!(
            s,
            r#"{"arch":{"C":3,"edges":[[0,1,"GDCC"],[1,2,"DGCN"]]},"hyper":{"B":2,"C":5,"H":32,"I":64,"U":0,"delta":1}}"#
        );
        let unsorted = r#"{"arch":{"C":3,"edges":[[1,2,"DGCN"],[0,1,"GDCC"]]},"hyper":{"B":2,"C":5,"H":32,"I":64,"U":0,"delta":1}}"#;
        assert_eq!(ArchHyper::from_json(unsorted).unwrap(), a);
    }

    #[test]
    fn enumeration_counts() {
        let space = SpaceConfig {
            operators: vec![Gdcc, Dgcn],
            domains: [vec![2], vec![5], vec![32], vec![64], vec![0], vec![0]],
            max_in_degree: 1,
        };
        let all = enumerate_space(&space, 1000).unwrap();
        // 1*2*3*4 predecessor choices, 2^4 operator labellings
        assert_eq!(all.len(), 24 * 16);
        assert!(all.iter().all(|a| validate(a, &space).is_ok()));
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), all.len());
        assert!(enumerate_space(&SpaceConfig::default(), 1000).is_err());
    }
}
