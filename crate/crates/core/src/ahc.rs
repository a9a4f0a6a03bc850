//! Architecture-hyperparameter comparator: a GIN over the dual graph of each
//! candidate, read out at the Hyper node, and a pairwise classifier on top.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{
    adam_step, bce, load_checkpoint, save_checkpoint, AdamConfig, AdamState, AutodiffError, ParamId, ParamSet, Tape,
    Tensor, Var,
};
use crate::searchspace::{normalize_hyper, to_dual_graph, ArchHyper, SpaceConfig, HYPER_DIM, NUM_OPS, PAD_NODES};

pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum AhcError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("cannot encode candidate: {0}")]
    Encode(String),
    #[error("empty {0} sample set")]
    Empty(&'static str),
    #[error("checkpoint header mismatch: {0}")]
    Header(String),
    #[error("sample bank {path}, line {line}: {msg}")]
    Bank { path: String, line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Noisy,
    Clean,
}

/// One ordered training pair. `label = 1` means `ah1` scored better or equal
/// (lower error) under the labeling channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub ah1: ArchHyper,
    pub ah2: ArchHyper,
    pub label: u8,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AhcTrainConfig {
    /// Noisy warm-up epochs `k_t`.
    pub warmup_epochs: usize,
    pub finetune_max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Fraction of distinct candidates held out to monitor early stopping.
    pub holdout_fraction: f64,
    /// Pools smaller than this monitor their training loss instead.
    pub min_holdout_pool: usize,
    pub seed: u64,
}

impl Default for AhcTrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 10,
            finetune_max_epochs: 10,
            early_stop_patience: 3,
            batch_size: 8,
            lr: 1e-4,
            weight_decay: 5e-4,
            holdout_fraction: 0.1,
            min_holdout_pool: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct GinLayer {
    eps: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorModel {
    pub params: ParamSet,
    pub layers: usize,
    pub hidden: usize,
    pub space: SpaceConfig,
    w_c: ParamId,
    w_e: ParamId,
    gin: Vec<GinLayer>,
    cls_w: ParamId,
    cls_b: ParamId,
}

/// Model-ready inputs of one candidate: dual-graph rows `0..=n`, the last
/// being the Hyper node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub rows: usize,
    pub onehots: Vec<[f64; NUM_OPS]>,
    pub hyper: [f64; HYPER_DIM],
    pub adjacency: [[u8; PAD_NODES]; PAD_NODES],
}

impl GraphInput {
    pub fn new(ah: &ArchHyper, space: &SpaceConfig) -> Result<Self, AhcError> {
        let g = to_dual_graph(ah).map_err(|e| AhcError::Encode(e.to_string()))?;
        let hyper = normalize_hyper(&ah.hyper, space).map_err(|e| AhcError::Encode(e.to_string()))?;
        Ok(Self {
            rows: g.num_real_nodes,
            onehots: g.op_onehots.iter().map(|o| o.map(f64::from)).collect(),
            hyper,
            adjacency: g.adjacency,
        })
    }

    pub fn hyper_index(&self) -> usize {
        self.rows - 1
    }
}

/// Anything that can score ordered pairs of candidates.
pub trait Comparator: Sync {
    /// Probability that `cands[i]` is better or equal to `cands[j]`, per pair.
    fn pair_probs(&self, cands: &[ArchHyper], pairs: &[(usize, usize)]) -> Result<Vec<f64>, AhcError>;
}

/// Comparator backed by a score function (lower is better): `p` is 1 when
/// the first score is lower or equal, else 0.
pub struct ScoreComparator<F: Fn(&ArchHyper) -> f64 + Sync> {
    pub score: F,
}

impl<F: Fn(&ArchHyper) -> f64 + Sync> Comparator for ScoreComparator<F> {
    fn pair_probs(&self, cands: &[ArchHyper], pairs: &[(usize, usize)]) -> Result<Vec<f64>, AhcError> {
        let s: Vec<f64> = cands.iter().map(|c| (self.score)(c)).collect();
        Ok(pairs.iter().map(|&(i, j)| if s[i] <= s[j] { 1.0 } else { 0.0 }).collect())
    }
}

const EMBED_CHUNK: usize = 64;

impl ComparatorModel {
    pub fn new(layers: usize, hidden: usize, space: SpaceConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let d = hidden;
        let w_c = params.add_uniform("w_c", &[HYPER_DIM, d], HYPER_DIM, &mut rng);
        let w_e = params.add_uniform("w_e", &[NUM_OPS, d], NUM_OPS, &mut rng);
        let gin = (0..layers)
            .map(|k| GinLayer {
                eps: params.add(format!("gin{k}.eps"), Tensor::scalar(0.0)),
                w1: params.add_uniform(format!("gin{k}.w1"), &[d, d], d, &mut rng),
                b1: params.add_uniform(format!("gin{k}.b1"), &[d], d, &mut rng),
                w2: params.add_uniform(format!("gin{k}.w2"), &[d, d], d, &mut rng),
                b2: params.add_uniform(format!("gin{k}.b2"), &[d], d, &mut rng),
            })
            .collect();
        let cls_w = params.add_uniform("cls.w", &[2 * d, 1], 2 * d, &mut rng);
        let cls_b = params.add_uniform("cls.b", &[1], 2 * d, &mut rng);
        Self {
            params,
            layers,
            hidden,
            space,
            w_c,
            w_e,
            gin,
            cls_w,
            cls_b,
        }
    }

    pub fn with_defaults(space: SpaceConfig, seed: u64) -> Self {
        Self::new(DEFAULT_LAYERS, DEFAULT_HIDDEN, space, seed)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.ids().map(|id| tape.param(&self.params, id)).collect()
    }

    /// Padded inputs for a batch: one-hots `[G,R,|O|]`, hyper features
    /// `[G,R,r]` (Hyper row only) and adjacency `[G,R,R]`.
    fn batch_inputs(graphs: &[&GraphInput], rows: usize) -> (Tensor, Tensor, Tensor) {
        let g = graphs.len();
        let mut one = vec![0.0; g * rows * NUM_OPS];
        let mut hyp = vec![0.0; g * rows * HYPER_DIM];
        let mut adj = vec![0.0; g * rows * rows];
        for (k, gi) in graphs.iter().enumerate() {
            for (r, o) in gi.onehots.iter().enumerate() {
                one[(k * rows + r) * NUM_OPS..][..NUM_OPS].copy_from_slice(o);
            }
            hyp[(k * rows + gi.hyper_index()) * HYPER_DIM..][..HYPER_DIM].copy_from_slice(&gi.hyper);
            for u in 0..gi.rows {
                for v in 0..gi.rows {
                    adj[(k * rows + u) * rows + v] = f64::from(gi.adjacency[u][v]);
                }
            }
        }
        (
            Tensor::new(vec![g, rows, NUM_OPS], one).expect("one-hot shape"),
            Tensor::new(vec![g, rows, HYPER_DIM], hyp).expect("hyper shape"),
            Tensor::new(vec![g, rows, rows], adj).expect("adjacency shape"),
        )
    }

    /// Initial node features `F_a = [H_e W_e; norm(H_o) W_c]`, `[G, R, D]`.
    pub fn encode(&self, tape: &mut Tape, vars: &[Var], graphs: &[&GraphInput], rows: usize) -> Result<(Var, Var), AhcError> {
        let (one, hyp, adj) = Self::batch_inputs(graphs, rows);
        let (one, hyp) = (tape.leaf(one), tape.leaf(hyp));
        let fe = tape.matmul(one, vars[self.w_e.index()])?;
        let fh = tape.matmul(hyp, vars[self.w_c.index()])?;
        let f = tape.add(fe, fh)?;
        Ok((f, tape.leaf(adj)))
    }

    /// `H <- MLP((1 + eps) H + A H)` for every layer.
    pub fn gin(&self, tape: &mut Tape, vars: &[Var], adj: Var, features: Var) -> Result<Var, AhcError> {
        let mut h = features;
        for layer in &self.gin {
            let neigh = tape.bmm(adj, h, false)?;
            let scaled = tape.scale_by(h, vars[layer.eps.index()])?;
            let x = tape.add(h, scaled)?;
            let x = tape.add(x, neigh)?;
            let z = tape.matmul(x, vars[layer.w1.index()])?;
            let z = tape.add_bias(z, vars[layer.b1.index()])?;
            let z = tape.relu(z);
            let z = tape.matmul(z, vars[layer.w2.index()])?;
            h = tape.add_bias(z, vars[layer.b2.index()])?;
        }
        Ok(h)
    }

    /// Hyper-node representations `[G, D]`.
    pub fn embed(&self, tape: &mut Tape, vars: &[Var], graphs: &[&GraphInput]) -> Result<Var, AhcError> {
        let rows = graphs.iter().map(|g| g.rows).max().unwrap_or(1);
        let (f, adj) = self.encode(tape, vars, graphs, rows)?;
        let h = self.gin(tape, vars, adj, f)?;
        let flat = tape.reshape(h, &[graphs.len() * rows, self.hidden])?;
        let picks: Vec<usize> = graphs
            .iter()
            .enumerate()
            .map(|(k, g)| k * rows + g.hyper_index())
            .collect();
        Ok(tape.select_rows(flat, &picks)?)
    }

    /// `sigmoid(FC([l_a ; l_b]))` for rows of `emb` selected by `a` and `b`.
    pub fn classify(&self, tape: &mut Tape, vars: &[Var], emb: Var, a: &[usize], b: &[usize]) -> Result<Var, AhcError> {
        let la = tape.select_rows(emb, a)?;
        let lb = tape.select_rows(emb, b)?;
        let cat = tape.concat_last(&[la, lb])?;
        let z = tape.matmul(cat, vars[self.cls_w.index()])?;
        let z = tape.add_bias(z, vars[self.cls_b.index()])?;
        Ok(tape.sigmoid(z))
    }

    /// Hyper-node embeddings of many candidates, row-major `[len, D]`.
    pub fn embeddings(&self, graphs: &[GraphInput]) -> Result<Vec<f64>, AhcError> {
        let mut out = Vec::with_capacity(graphs.len() * self.hidden);
        for chunk in graphs.chunks(EMBED_CHUNK) {
            let refs: Vec<&GraphInput> = chunk.iter().collect();
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let e = self.embed(&mut tape, &vars, &refs)?;
            out.extend_from_slice(tape.value(e).data());
        }
        Ok(out)
    }

    fn prob_from_embeddings(&self, emb: &[f64], i: usize, j: usize) -> f64 {
        let d = self.hidden;
        let w = self.params.get(self.cls_w).data();
        let b = self.params.get(self.cls_b).data()[0];
        let (a, c) = (&emb[i * d..(i + 1) * d], &emb[j * d..(j + 1) * d]);
        let mut z = 0.0;
        for k in 0..d {
            z += a[k] * w[k];
        }
        for k in 0..d {
            z += c[k] * w[d + k];
        }
        z += b;
        1.0 / (1.0 + (-z).exp())
    }

    pub fn graph_inputs(&self, cands: &[ArchHyper]) -> Result<Vec<GraphInput>, AhcError> {
        cands.iter().map(|c| GraphInput::new(c, &self.space)).collect()
    }

    /// Probability that `a` is better or equal to `b`, and the thresholded decision.
    pub fn compare(&self, a: &ArchHyper, b: &ArchHyper) -> Result<(f64, u8), AhcError> {
        let p = self.pair_probs(&[a.clone(), b.clone()], &[(0, 1)])?[0];
        Ok((p, u8::from(p >= 0.5)))
    }

    pub fn checkpoint_header(&self) -> serde_json::Value {
        json!({
            "L": self.layers,
            "D": self.hidden,
            "O": NUM_OPS,
            "r": HYPER_DIM,
            "space": self.space.fingerprint(),
            "space_config": self.space,
        })
    }

    pub fn save(&self, stem: &Path) -> Result<(), AhcError> {
        Ok(save_checkpoint(&self.params, Some(&self.checkpoint_header()), stem)?)
    }

    pub fn load(stem: &Path) -> Result<Self, AhcError> {
        let (params, header) = load_checkpoint(stem)?;
        let header = header.ok_or_else(|| AhcError::Header("missing header".into()))?;
        let field = |k: &str| {
            header
                .get(k)
                .and_then(serde_json::Value::as_u64)
                .ok_or_else(|| AhcError::Header(format!("missing {k}")))
        };
        let (layers, hidden) = (field("L")? as usize, field("D")? as usize);
        if field("O")? as usize != NUM_OPS || field("r")? as usize != HYPER_DIM {
            return Err(AhcError::Header("operator or hyper dimension differs".into()));
        }
        let space: SpaceConfig = header
            .get("space_config")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| AhcError::Header("missing space_config".into()))?;
        if header.get("space").and_then(|v| v.as_str()) != Some(space.fingerprint().as_str()) {
            return Err(AhcError::Header("space fingerprint does not match space_config".into()));
        }
        let mut model = Self::new(layers, hidden, space, 0);
        let same_layout = model.params.len() == params.len()
            && model
                .params
                .iter()
                .zip(params.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same_layout {
            return Err(AhcError::Header("parameter layout differs from L/D".into()));
        }
        model.params = params;
        Ok(model)
    }
}

impl Comparator for ComparatorModel {
    fn pair_probs(&self, cands: &[ArchHyper], pairs: &[(usize, usize)]) -> Result<Vec<f64>, AhcError> {
        let graphs = self.graph_inputs(cands)?;
        let emb = self.embeddings(&graphs)?;
        Ok(pairs
            .iter()
            .map(|&(i, j)| self.prob_from_embeddings(&emb, i, j))
            .collect())
    }
}

/// Deduplicated candidates of a sample set, with samples as index pairs.
struct Indexed {
    graphs: Vec<GraphInput>,
    pairs: Vec<(usize, usize, f64)>,
}

fn index_samples(samples: &[&ComparisonSample], space: &SpaceConfig) -> Result<Indexed, AhcError> {
    let mut ids: HashMap<&ArchHyper, usize> = HashMap::new();
    let mut graphs = Vec::new();
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let mut ends = [0; 2];
        for (slot, ah) in ends.iter_mut().zip([&s.ah1, &s.ah2]) {
            *slot = match ids.get(ah) {
                Some(&i) => i,
                None => {
                    graphs.push(GraphInput::new(ah, space)?);
                    ids.insert(ah, graphs.len() - 1);
                    graphs.len() - 1
                }
            };
        }
        pairs.push((ends[0], ends[1], f64::from(s.label)));
    }
    Ok(Indexed { graphs, pairs })
}

/// Mean BCE of the model over indexed pairs (no augmentation).
fn mean_bce(model: &ComparatorModel, idx: &Indexed) -> Result<f64, AhcError> {
    if idx.pairs.is_empty() {
        return Ok(0.0);
    }
    let emb = model.embeddings(&idx.graphs)?;
    let total: f64 = idx
        .pairs
        .iter()
        .map(|&(a, b, y)| bce(model.prob_from_embeddings(&emb, a, b), y))
        .sum();
    Ok(total / idx.pairs.len() as f64)
}

fn train_epoch(
    model: &mut ComparatorModel,
    idx: &Indexed,
    adam: &AdamConfig,
    state: &mut AdamState,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, AhcError> {
    let mut order: Vec<usize> = (0..idx.pairs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut graphs: Vec<&GraphInput> = Vec::new();
        let (mut a, mut b, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for &k in chunk {
            let (i, j, label) = idx.pairs[k];
            let (i, j, label) = if rng.random_bool(0.5) { (j, i, 1.0 - label) } else { (i, j, label) };
            for (g, dst) in [(i, &mut a), (j, &mut b)] {
                let slot = *local.entry(g).or_insert_with(|| {
                    graphs.push(&idx.graphs[g]);
                    graphs.len() - 1
                });
                dst.push(slot);
            }
            y.push(label);
        }
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let emb = model.embed(&mut tape, &vars, &graphs)?;
        let p = model.classify(&mut tape, &vars, emb, &a, &b)?;
        let target = Tensor::new(vec![y.len(), 1], y)?;
        let loss = tape.bce_loss(p, &target)?;
        let lv = tape.value(loss).item();
        if !lv.is_finite() {
            return Err(AutodiffError::NonFinite("comparator loss".into()).into());
        }
        total += lv * chunk.len() as f64;
        let grads = tape.backward(loss)?.for_params(&model.params);
        adam_step(&mut model.params, &grads, state, adam);
    }
    Ok(total / idx.pairs.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Noisy,
    Clean,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub phase: Phase,
    pub epoch: usize,
    pub train_loss: f64,
    /// Held-out BCE, or the training BCE when the pool is too small to split.
    pub monitor_loss: f64,
}

/// Holds out a fraction of the distinct candidates. Monitor pairs are those
/// touching a held-out candidate, so memorised per-candidate noise shows up
/// as rising monitor loss. Small pools are not split.
fn split_by_candidate<'a>(
    samples: &'a [ComparisonSample],
    cfg: &AhcTrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<&'a ComparisonSample>, Vec<&'a ComparisonSample>) {
    let mut refs: Vec<&ComparisonSample> = samples.iter().collect();
    refs.shuffle(rng);
    if samples.len() < cfg.min_holdout_pool {
        return (refs, Vec::new());
    }
    let mut cands: Vec<&ArchHyper> = Vec::new();
    let mut seen: HashSet<&ArchHyper> = HashSet::new();
    for s in samples {
        for ah in [&s.ah1, &s.ah2] {
            if seen.insert(ah) {
                cands.push(ah);
            }
        }
    }
    cands.shuffle(rng);
    let n = ((cands.len() as f64 * cfg.holdout_fraction).round() as usize).min(cands.len());
    let held: HashSet<&ArchHyper> = cands[..n].iter().copied().collect();
    let (monitor, train): (Vec<_>, Vec<_>) = refs
        .iter()
        .copied()
        .partition(|s| held.contains(&s.ah1) || held.contains(&s.ah2));
    if train.is_empty() || monitor.is_empty() {
        return (refs, Vec::new());
    }
    (train, monitor)
}

/// Trains on one sample pool for up to `max_epochs` with early stopping on
/// held-out candidates and restores the best parameters.
pub fn train_phase(
    model: &mut ComparatorModel,
    samples: &[ComparisonSample],
    max_epochs: usize,
    phase: Phase,
    cfg: &AhcTrainConfig,
    seed: u64,
) -> Result<Vec<EpochLoss>, AhcError> {
    if samples.is_empty() {
        return Err(AhcError::Empty(match phase {
            Phase::Noisy => "noisy",
            Phase::Clean => "clean",
            Phase::Mixed => "mixed",
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, monitor) = split_by_candidate(samples, cfg, &mut rng);
    let held = monitor.len();
    let train_idx = index_samples(&train, &model.space)?;
    let monitor_idx = index_samples(&monitor, &model.space)?;
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::new(&model.params);
    let mut history = Vec::new();
    let watched = if held > 0 { &monitor_idx } else { &train_idx };
    // The starting parameters compete too, so a phase that never improves
    // the monitor leaves the model as it was.
    let mut best = (mean_bce(model, watched)?, model.params.clone());
    let mut since_best = 0;
    for epoch in 1..=max_epochs {
        let train_loss = train_epoch(model, &train_idx, &adam, &mut state, cfg.batch_size, &mut rng)?;
        let monitor_loss = mean_bce(model, watched)?;
        history.push(EpochLoss {
            phase,
            epoch,
            train_loss,
            monitor_loss,
        });
        if monitor_loss < best.0 {
            best = (monitor_loss, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(history)
}

/// Warm-up on noisy samples, then fine-tuning on clean samples.
pub fn train_denoising(
    model: &mut ComparatorModel,
    noisy: &[ComparisonSample],
    clean: &[ComparisonSample],
    cfg: &AhcTrainConfig,
) -> Result<Vec<EpochLoss>, AhcError> {
    if noisy.is_empty() {
        return Err(AhcError::Empty("noisy"));
    }
    if clean.is_empty() {
        return Err(AhcError::Empty("clean"));
    }
    let mut history = train_phase(model, noisy, cfg.warmup_epochs, Phase::Noisy, cfg, cfg.seed)?;
    history.extend(train_phase(
        model,
        clean,
        cfg.finetune_max_epochs,
        Phase::Clean,
        cfg,
        cfg.seed.wrapping_add(1),
    )?);
    Ok(history)
}

/// Continues training a pretrained comparator on small target-side pools,
/// noisy then clean, at most `epochs` per phase.
pub fn transfer_finetune(
    model: &mut ComparatorModel,
    noisy: &[ComparisonSample],
    clean: &[ComparisonSample],
    epochs: usize,
    cfg: &AhcTrainConfig,
) -> Result<Vec<EpochLoss>, AhcError> {
    let mut history = Vec::new();
    if epochs == 0 {
        return Ok(history);
    }
    if !noisy.is_empty() {
        history.extend(train_phase(model, noisy, epochs, Phase::Noisy, cfg, cfg.seed)?);
    }
    if !clean.is_empty() {
        history.extend(train_phase(model, clean, epochs, Phase::Clean, cfg, cfg.seed.wrapping_add(1))?);
    }
    Ok(history)
}

/// Fraction of samples whose thresholded decision matches the label.
pub fn pair_accuracy(cmp: &dyn Comparator, samples: &[ComparisonSample]) -> Result<f64, AhcError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut cands: Vec<ArchHyper> = Vec::new();
    let mut ids: HashMap<ArchHyper, usize> = HashMap::new();
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let mut id = |ah: &ArchHyper| {
            *ids.entry(ah.clone()).or_insert_with(|| {
                cands.push(ah.clone());
                cands.len() - 1
            })
        };
        pairs.push((id(&s.ah1), id(&s.ah2)));
    }
    let probs = cmp.pair_probs(&cands, &pairs)?;
    let hits = probs
        .iter()
        .zip(samples)
        .filter(|(p, s)| u8::from(**p >= 0.5) == s.label)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Candidate indices, best first.
    pub order: Vec<usize>,
    pub wins: Vec<usize>,
    pub prob_sums: Vec<f64>,
    pub comparator_calls: usize,
}

/// Copeland ranking over all unordered pairs `(i, j)`, `i < j`; ties broken
/// by summed win probability, then by index.
pub fn rank_candidates(cmp: &dyn Comparator, cands: &[ArchHyper]) -> Result<Ranking, AhcError> {
    let n = cands.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let probs = cmp.pair_probs(cands, &pairs)?;
    let mut wins = vec![0usize; n];
    let mut sums = vec![0.0; n];
    for (&(i, j), &p) in pairs.iter().zip(&probs) {
        if p >= 0.5 {
            wins[i] += 1;
        } else {
            wins[j] += 1;
        }
        sums[i] += p;
        sums[j] += 1.0 - p;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        wins[b]
            .cmp(&wins[a])
            .then(sums[b].total_cmp(&sums[a]))
            .then(a.cmp(&b))
    });
    Ok(Ranking {
        order,
        wins,
        prob_sums: sums,
        comparator_calls: pairs.len(),
    })
}

/// Appends samples to a JSON-lines bank.
pub fn append_samples(path: &Path, samples: &[ComparisonSample]) -> Result<(), AhcError> {
    let io = |source| AhcError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut buf = String::new();
    for s in samples {
        buf.push_str(&serde_json::to_string(s).expect("sample serializes"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(io)
}

pub fn read_samples(path: &Path) -> Result<Vec<ComparisonSample>, AhcError> {
    let file = File::open(path).map_err(|source| AhcError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AhcError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ComparisonSample = serde_json::from_str(&line).map_err(|e| AhcError::Bank {
            path: path.display().to_string(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        if s.label > 1 {
            return Err(AhcError::Bank {
                path: path.display().to_string(),
                line: k + 1,
                msg: format!("label {} is not binary", s.label),
            });
        }
        out.push(s);
    }
    Ok(out)
}
