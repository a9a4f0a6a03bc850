//! The search driver: sample banks, comparator training or transfer, space
//! shrinking, evolutionary exploration and finalist selection.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ahc::{
    rank_candidates, train_denoising, transfer_finetune, AhcError, AhcTrainConfig, Comparator, ComparatorModel,
    ComparisonSample, EpochLoss,
};
use crate::evaluator::{make_pairs, pairwise_ranking_accuracy, spearman_rho, Channel, EvalError, Evaluator, ScoreRecord};
use crate::searchspace::{contains_spatial_and_temporal, crossover_with, mutate_with, sample_with, ArchHyper, SpaceConfig};

/// Consecutive rejections after which shrinking gives up.
pub const MAX_REJECTIONS: usize = 1000;
/// Replacement draws allowed per bank slot after evaluation failures.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no candidate satisfied the shrink rule in {0} consecutive draws")]
    Shrink(usize),
    #[error("could not draw a new distinct candidate in {0} draws; the space is smaller than the request")]
    Exhausted(usize),
    #[error("bank slot {slot} failed {attempts} times, last error: {last}")]
    Retries { slot: usize, attempts: usize, last: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ahc(#[from] AhcError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("invalid search config: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SearchError + '_ {
    move |source| SearchError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Noisy (proxy-scored) candidates for pretraining.
    pub l1: usize,
    /// Clean (fully trained) candidates for pretraining.
    pub l2: usize,
    /// Noisy candidates when transferring a pretrained comparator.
    pub z1: usize,
    /// Clean candidates when transferring.
    pub z2: usize,
    /// Candidates ranked to seed the population.
    pub k_s: usize,
    pub k_p: usize,
    pub p1: f64,
    pub p2: f64,
    pub evolution_steps: usize,
    /// Finalists trained to the full budget.
    pub finalists: usize,
    pub proxy_epochs: usize,
    pub full_epochs: usize,
    /// Epochs per phase when transferring.
    pub transfer_epochs: usize,
    pub ahc_layers: usize,
    pub ahc_hidden: usize,
    pub ahc: AhcTrainConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SearchConfig {
    pub fn paper() -> Self {
        Self {
            l1: 2000,
            l2: 150,
            z1: 100,
            z2: 5,
            k_s: 100,
            k_p: 10,
            p1: 0.8,
            p2: 0.2,
            evolution_steps: 20,
            finalists: 3,
            proxy_epochs: 5,
            full_epochs: 100,
            transfer_epochs: 3,
            ahc_layers: 4,
            ahc_hidden: 128,
            ahc: AhcTrainConfig::default(),
            seed: 0,
        }
    }

    /// Scaled-down profile that runs in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            l1: 200,
            l2: 20,
            z1: 20,
            z2: 3,
            k_s: 50,
            evolution_steps: 10,
            proxy_epochs: 3,
            full_epochs: 30,
            ahc_hidden: 32,
            // 1e-4 overfits a 200-candidate noisy pool within one epoch.
            ahc: AhcTrainConfig {
                lr: 5e-5,
                ..AhcTrainConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.l1 < 2 || self.l2 < 2 {
            return bad("L1 and L2 must be at least 2");
        }
        if self.k_p == 0 || self.k_s < self.k_p {
            return bad("need 0 < k_p <= K_s");
        }
        if self.finalists == 0 || self.finalists > self.k_p {
            return bad("need 0 < K <= k_p");
        }
        if !(0.0..=1.0).contains(&self.p1) || !(0.0..=1.0).contains(&self.p2) {
            return bad("p1 and p2 must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn shrink_filter(ah: &ArchHyper) -> bool {
    contains_spatial_and_temporal(ah)
}

/// Rejection-samples a candidate that passes the shrink rule.
pub fn sample_shrunk<R: Rng>(rng: &mut R, space: &SpaceConfig) -> Result<ArchHyper, SearchError> {
    for _ in 0..MAX_REJECTIONS {
        let ah = sample_with(rng, space);
        if shrink_filter(&ah) {
            return Ok(ah);
        }
    }
    Err(SearchError::Shrink(MAX_REJECTIONS))
}

fn sample_distinct<R: Rng>(rng: &mut R, space: &SpaceConfig, seen: &mut HashSet<ArchHyper>) -> Result<ArchHyper, SearchError> {
    for _ in 0..MAX_REJECTIONS {
        let ah = sample_shrunk(rng, space)?;
        if seen.insert(ah.clone()) {
            return Ok(ah);
        }
    }
    Err(SearchError::Exhausted(MAX_REJECTIONS))
}

/// Runs `f` over `items` on `workers` threads, keeping input order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FailureRecord {
    ah: ArchHyper,
    channel: Channel,
    seed: u64,
    error: String,
}

/// Reads one JSON value per line. A malformed final line without a trailing
/// newline is a write cut short by an interruption: it is dropped and the
/// file truncated so later appends start on a clean line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SearchError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for (k, line) in text.split_inclusive('\n').enumerate() {
        let complete = line.ends_with('\n');
        if !line.trim().is_empty() {
            match serde_json::from_str(line.trim()) {
                Ok(v) => out.push(v),
                Err(_) if !complete => {
                    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                    f.set_len(offset as u64).map_err(io_err(path))?;
                    return Ok(out);
                }
                Err(e) => {
                    return Err(SearchError::Parse {
                        path: path.display().to_string(),
                        line: k + 1,
                        msg: e.to_string(),
                    })
                }
            }
        }
        offset += line.len();
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), SearchError> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = String::new();
    for it in items {
        buf.push_str(&serde_json::to_string(it).expect("record serializes"));
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(buf.as_bytes()).map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), SearchError> {
    let _ = fs::remove_file(path);
    File::create(path).map_err(io_err(path))?;
    append_jsonl(path, items)
}

/// File locations of one bank inside a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankFiles {
    pub records: PathBuf,
    pub failures: PathBuf,
    pub samples: PathBuf,
}

impl BankFiles {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            records: dir.join(format!("{name}_records.jsonl")),
            failures: dir.join(format!("{name}_failures.jsonl")),
            samples: dir.join(format!("{name}_samples.jsonl")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bank {
    pub records: Vec<ScoreRecord>,
    pub samples: Vec<ComparisonSample>,
    /// Evaluations charged to the bank, failures included.
    pub evaluations: usize,
    /// Evaluations actually run now (the rest were found on disk).
    pub fresh: usize,
}

fn stream_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

/// Draws `count` distinct shrunk candidates, scores them on `channel` and
/// pairs them. With `files`, scores are appended as they finish and reused on
/// reruns, so an interrupted bank resumes without repeating work.
pub fn build_bank(
    evaluator: &dyn Evaluator,
    space: &SpaceConfig,
    channel: Channel,
    count: usize,
    seed: u64,
    files: Option<&BankFiles>,
    workers: usize,
) -> Result<Bank, SearchError> {
    if count < 2 {
        return Err(SearchError::Config(format!("a bank needs at least 2 candidates, got {count}")));
    }
    let eval_seed = evaluator.seed();
    let cost = match channel {
        Channel::Proxy => evaluator.proxy_epochs(),
        Channel::Full => evaluator.full_epochs(),
    };
    let (mut known, mut failed) = (HashMap::new(), HashMap::new());
    if let Some(f) = files {
        for r in read_jsonl::<ScoreRecord>(&f.records)? {
            if r.channel == channel && r.seed == eval_seed && r.cost_epochs == cost {
                known.insert(r.ah.clone(), r);
            }
        }
        for r in read_jsonl::<FailureRecord>(&f.failures)? {
            if r.channel == channel && r.seed == eval_seed {
                failed.insert(r.ah.clone(), r.error);
            }
        }
    }
    let tag = match channel {
        Channel::Proxy => 1,
        Channel::Full => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, tag));
    let mut seen = HashSet::new();
    let mut plan = (0..count)
        .map(|_| sample_distinct(&mut rng, space, &mut seen))
        .collect::<Result<Vec<_>, _>>()?;
    let mut done: Vec<Option<ScoreRecord>> = vec![None; count];
    let mut attempts = vec![0usize; count];
    let (mut evaluations, mut fresh) = (0, 0);
    loop {
        let pending: Vec<usize> = (0..count).filter(|&i| done[i].is_none()).collect();
        if pending.is_empty() {
            break;
        }
        for chunk in pending.chunks(workers.max(1)) {
            let outcomes = parallel_map(chunk, workers, |&i| {
                let ah = &plan[i];
                if let Some(r) = known.get(ah) {
                    (Ok(r.clone()), false)
                } else if let Some(e) = failed.get(ah) {
                    (Err(e.clone()), false)
                } else {
                    (evaluator.score(ah, channel).map_err(|e| e.to_string()), true)
                }
            });
            let mut new_ok = Vec::new();
            let mut new_fail = Vec::new();
            for (&i, (res, ran)) in chunk.iter().zip(outcomes) {
                evaluations += 1;
                fresh += usize::from(ran);
                match res {
                    Ok(r) => {
                        if ran {
                            new_ok.push(r.clone());
                        }
                        done[i] = Some(r);
                    }
                    Err(e) => {
                        if ran {
                            new_fail.push(FailureRecord {
                                ah: plan[i].clone(),
                                channel,
                                seed: eval_seed,
                                error: e.clone(),
                            });
                        }
                        attempts[i] += 1;
                        if attempts[i] > MAX_RETRIES {
                            if let Some(f) = files {
                                append_jsonl(&f.failures, &new_fail)?;
                            }
                            return Err(SearchError::Retries {
                                slot: i,
                                attempts: attempts[i],
                                last: e,
                            });
                        }
                    }
                }
            }
            if let Some(f) = files {
                append_jsonl(&f.records, &new_ok)?;
                append_jsonl(&f.failures, &new_fail)?;
            }
        }
        for i in 0..count {
            if done[i].is_none() {
                plan[i] = sample_distinct(&mut rng, space, &mut seen)?;
            }
        }
    }
    let records: Vec<ScoreRecord> = done.into_iter().map(|r| r.expect("all slots filled")).collect();
    let samples = make_pairs(&records)?;
    if let Some(f) = files {
        write_jsonl(&f.samples, &samples)?;
    }
    Ok(Bank {
        records,
        samples,
        evaluations,
        fresh,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub ah: ArchHyper,
    pub proxy: f64,
    pub full: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
    pub proxy_epochs: usize,
    pub full_epochs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyBench {
    pub rows: Vec<BenchRow>,
    pub pra: f64,
    pub spearman: f64,
    /// Rows computed now rather than read from the cache.
    pub fresh: usize,
}

/// Scores `count` distinct shrunk candidates on both channels and measures
/// how well the proxy order matches the full order. Rows are appended to
/// `cache` as they finish and reused on reruns.
pub fn proxy_benchmark(
    evaluator: &dyn Evaluator,
    space: &SpaceConfig,
    count: usize,
    seed: u64,
    cache: Option<&Path>,
    workers: usize,
) -> Result<ProxyBench, SearchError> {
    if count < 2 {
        return Err(SearchError::Config(format!("need at least 2 candidates, got {count}")));
    }
    let (k, e, s) = (evaluator.proxy_epochs(), evaluator.full_epochs(), evaluator.seed());
    let mut known = HashMap::new();
    if let Some(path) = cache {
        for r in read_jsonl::<BenchRow>(path)? {
            if (r.proxy_epochs, r.full_epochs, r.seed) == (k, e, s) {
                known.insert(r.ah.clone(), r);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 4));
    let mut seen = HashSet::new();
    let cands = (0..count)
        .map(|_| sample_distinct(&mut rng, space, &mut seen))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(count);
    let mut fresh = 0;
    for chunk in cands.chunks(workers.max(1)) {
        let out = parallel_map(chunk, workers, |ah| match known.get(ah) {
            Some(r) => Ok((r.clone(), false)),
            None => evaluator.proxy_and_full(ah).map(|(p, f)| {
                let row = BenchRow {
                    ah: ah.clone(),
                    proxy: p,
                    full: f.score,
                    test_error: f.test_error,
                    proxy_epochs: k,
                    full_epochs: e,
                    seed: s,
                };
                (row, true)
            }),
        });
        let mut new_rows = Vec::new();
        for res in out {
            let (row, ran) = res?;
            if ran {
                fresh += 1;
                new_rows.push(row.clone());
            }
            rows.push(row);
        }
        if let Some(path) = cache {
            append_jsonl(path, &new_rows)?;
        }
    }
    let proxy: Vec<f64> = rows.iter().map(|r| r.proxy).collect();
    let full: Vec<f64> = rows.iter().map(|r| r.full).collect();
    Ok(ProxyBench {
        pra: pairwise_ranking_accuracy(&proxy, &full)?,
        spearman: spearman_rho(&proxy, &full)?,
        rows,
        fresh,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    /// Population best first.
    pub population: Vec<ArchHyper>,
    pub wins: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub population: Vec<ArchHyper>,
    pub trace: Vec<Snapshot>,
    pub comparator_calls: usize,
    /// Every distinct candidate the search ranked.
    pub materialized: Vec<ArchHyper>,
}

/// One offspring: crossover with probability `p1`, then mutation with
/// probability `p2`; a mutation is forced when neither fired. Offspring that
/// fail the shrink rule are redrawn.
fn offspring<R: Rng>(pop: &[ArchHyper], i: usize, space: &SpaceConfig, cfg: &SearchConfig, rng: &mut R) -> Result<ArchHyper, SearchError> {
    for _ in 0..MAX_REJECTIONS {
        let mut child = pop[i].clone();
        let mut fired = false;
        if pop.len() > 1 && rng.random_bool(cfg.p1) {
            let mut j = rng.random_range(0..pop.len() - 1);
            if j >= i {
                j += 1;
            }
            child = crossover_with(&child, &pop[j], rng);
            fired = true;
        }
        if rng.random_bool(cfg.p2) || !fired {
            child = mutate_with(&child, rng, space);
        }
        if shrink_filter(&child) {
            return Ok(child);
        }
    }
    Err(SearchError::Shrink(MAX_REJECTIONS))
}

fn ranked(cmp: &dyn Comparator, pool: Vec<ArchHyper>, keep: usize) -> Result<(Vec<ArchHyper>, Vec<usize>, usize), SearchError> {
    let r = rank_candidates(cmp, &pool)?;
    let top: Vec<usize> = r.order.iter().copied().take(keep).collect();
    Ok((
        top.iter().map(|&i| pool[i].clone()).collect(),
        top.iter().map(|&i| r.wins[i]).collect(),
        r.comparator_calls,
    ))
}

pub fn evolve(cmp: &dyn Comparator, space: &SpaceConfig, cfg: &SearchConfig) -> Result<Evolution, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 3));
    let mut seen = HashSet::new();
    let initial = (0..cfg.k_s)
        .map(|_| sample_distinct(&mut rng, space, &mut seen))
        .collect::<Result<Vec<_>, _>>()?;
    let mut materialized = initial.clone();
    let (mut pop, wins, mut calls) = ranked(cmp, initial, cfg.k_p)?;
    let mut trace = vec![Snapshot {
        step: 0,
        population: pop.clone(),
        wins,
    }];
    for step in 1..=cfg.evolution_steps {
        let mut pool = pop.clone();
        let mut in_pool: HashSet<ArchHyper> = pool.iter().cloned().collect();
        for i in 0..pop.len() {
            let child = offspring(&pop, i, space, cfg, &mut rng)?;
            if seen.insert(child.clone()) {
                materialized.push(child.clone());
            }
            if in_pool.insert(child.clone()) {
                pool.push(child);
            }
        }
        let (next, wins, c) = ranked(cmp, pool, cfg.k_p)?;
        calls += c;
        pop = next;
        trace.push(Snapshot {
            step,
            population: pop.clone(),
            wins,
        });
    }
    Ok(Evolution {
        population: pop,
        trace,
        comparator_calls: calls,
        materialized,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finalist {
    pub ah: ArchHyper,
    pub val_error: f64,
    pub test_error: Option<f64>,
    pub param_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub proxy_evals: usize,
    pub full_evals: usize,
    pub comparator_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ArchHyper,
    pub finalists: Vec<Finalist>,
    pub ranking_trace: Vec<Snapshot>,
    pub budget: Budget,
    pub ahc_history: Vec<EpochLoss>,
    pub materialized: usize,
}

/// Scores the top `cfg.finalists` of the population on the full channel and
/// picks the lowest validation error; ties go to fewer parameters, then to
/// the earlier candidate in serialized order.
pub fn select_finalists(
    population: &[ArchHyper],
    evaluator: &dyn Evaluator,
    cfg: &SearchConfig,
    workers: usize,
) -> Result<(ArchHyper, Vec<Finalist>), SearchError> {
    let top = &population[..cfg.finalists.min(population.len())];
    let scored = parallel_map(top, workers, |ah| evaluator.full(ah));
    let mut finalists = Vec::with_capacity(top.len());
    for (ah, s) in top.iter().zip(scored) {
        let s = s?;
        finalists.push(Finalist {
            ah: ah.clone(),
            val_error: s.score,
            test_error: s.test_error,
            param_count: evaluator.param_count(ah),
        });
    }
    let best = finalists
        .iter()
        .min_by(|a, b| {
            a.val_error
                .total_cmp(&b.val_error)
                .then(a.param_count.cmp(&b.param_count))
                .then(a.ah.to_json().cmp(&b.ah.to_json()))
        })
        .expect("at least one finalist")
        .ah
        .clone();
    Ok((best, finalists))
}

/// Everything after comparator training: evolve with `cmp`, then select.
pub fn search_with_comparator(
    cmp: &dyn Comparator,
    evaluator: &dyn Evaluator,
    space: &SpaceConfig,
    cfg: &SearchConfig,
    workers: usize,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let evo = evolve(cmp, space, cfg)?;
    let (best, finalists) = select_finalists(&evo.population, evaluator, cfg, workers)?;
    Ok(SearchResult {
        best,
        budget: Budget {
            proxy_evals: 0,
            full_evals: finalists.len(),
            comparator_calls: evo.comparator_calls,
        },
        finalists,
        ranking_trace: evo.trace,
        ahc_history: Vec::new(),
        materialized: evo.materialized.len(),
    })
}

/// Builds the comparator: fresh training on `(L1, L2)` banks, or transfer of
/// `pretrained` with `(z1, z2)` banks.
pub fn prepare_comparator(
    evaluator: &dyn Evaluator,
    space: &SpaceConfig,
    cfg: &SearchConfig,
    pretrained: Option<ComparatorModel>,
    dir: Option<&Path>,
    workers: usize,
) -> Result<(ComparatorModel, Vec<EpochLoss>, Budget), SearchError> {
    let transfer = pretrained.is_some();
    let (n_noisy, n_clean) = if transfer { (cfg.z1, cfg.z2) } else { (cfg.l1, cfg.l2) };
    let files = |name: &str| dir.map(|d| BankFiles::new(d, name));
    let noisy = build_bank(evaluator, space, Channel::Proxy, n_noisy, cfg.seed, files("noisy").as_ref(), workers)?;
    let clean = build_bank(evaluator, space, Channel::Full, n_clean, cfg.seed, files("clean").as_ref(), workers)?;
    let ahc_cfg = AhcTrainConfig {
        seed: cfg.seed,
        ..cfg.ahc.clone()
    };
    let (model, history) = match pretrained {
        Some(mut m) => {
            let h = transfer_finetune(&mut m, &noisy.samples, &clean.samples, cfg.transfer_epochs, &ahc_cfg)?;
            (m, h)
        }
        None => {
            let mut m = ComparatorModel::new(cfg.ahc_layers, cfg.ahc_hidden, space.clone(), cfg.seed);
            let h = train_denoising(&mut m, &noisy.samples, &clean.samples, &ahc_cfg)?;
            (m, h)
        }
    };
    let budget = Budget {
        proxy_evals: noisy.evaluations,
        full_evals: clean.evaluations,
        comparator_calls: 0,
    };
    Ok((model, history, budget))
}

/// The full search. With `dir`, banks, the comparator checkpoint and the
/// manifest are written there; a failure leaves a partial manifest behind.
pub fn run_search(
    evaluator: &dyn Evaluator,
    space: &SpaceConfig,
    cfg: &SearchConfig,
    pretrained: Option<ComparatorModel>,
    dir: Option<&Path>,
    workers: usize,
) -> Result<(SearchResult, ComparatorModel), SearchError> {
    cfg.validate()?;
    let transfer = pretrained.is_some();
    let outcome: Result<_, SearchError> = (|| {
        let (model, history, budget) = prepare_comparator(evaluator, space, cfg, pretrained, dir, workers)?;
        if let Some(d) = dir {
            model.save(&d.join("ahc"))?;
        }
        let mut result = search_with_comparator(&model, evaluator, space, cfg, workers)?;
        result.budget.proxy_evals += budget.proxy_evals;
        result.budget.full_evals += budget.full_evals;
        result.ahc_history = history;
        Ok((result, model))
    })();
    if let Some(d) = dir {
        let manifest = match &outcome {
            Ok((r, _)) => manifest_json(cfg, space, evaluator, transfer, r),
            Err(e) => json!({
                "status": "failed",
                "error": e.to_string(),
                "config": cfg,
                "transfer": transfer,
            }),
        };
        let name = if outcome.is_ok() { "manifest.json" } else { "manifest.partial.json" };
        let path = d.join(name);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    outcome
}

pub fn manifest_json(
    cfg: &SearchConfig,
    space: &SpaceConfig,
    evaluator: &dyn Evaluator,
    transfer: bool,
    r: &SearchResult,
) -> serde_json::Value {
    let banks = |name: &str| {
        json!({
            "records": format!("{name}_records.jsonl"),
            "failures": format!("{name}_failures.jsonl"),
            "samples": format!("{name}_samples.jsonl"),
        })
    };
    json!({
        "status": "complete",
        "config": cfg,
        "space": space,
        "space_fingerprint": space.fingerprint(),
        "seeds": { "search": cfg.seed, "evaluator": evaluator.seed(), "ahc": cfg.seed },
        "transfer": transfer,
        "banks": { "noisy": banks("noisy"), "clean": banks("clean") },
        "ahc_checkpoint": "ahc",
        "ahc_history": r.ahc_history,
        "ranking_trace": r.ranking_trace,
        "finalists": r.finalists,
        "best": r.best,
        "budget": r.budget,
        "materialized": r.materialized,
    })
}
