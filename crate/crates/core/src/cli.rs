//! Command-line front end. Every command writes its effective config and a
//! JSON result into the output directory, prints an aligned summary, and
//! reuses scores already on disk.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ahc::{pair_accuracy, read_samples, train_denoising, transfer_finetune, AhcTrainConfig, ComparatorModel};
use crate::data::{generate_synthetic, load_csv, save_csv, CtsDataset, SyntheticConfig, WindowConfig, DEFAULT_SPLIT};
use crate::evaluator::{Channel, Evaluator, ForecastEvaluator, SyntheticOracleConfig};
use crate::forecaster::{build_model, mean_predictor_error, prepare, test_metrics, train_model, TrainConfig};
use crate::search::{build_bank, proxy_benchmark, run_search, BankFiles, SearchConfig};
use crate::searchspace::{validate, ArchHyper, SpaceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    /// Closed-form synthetic scores (seconds).
    Oracle,
    /// Real forecaster training on the dataset (minutes).
    Forecast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    /// Seed of the oracle's random weights.
    pub weights_seed: u64,
    /// Proxy noise as a multiple of the score standard deviation.
    pub noise_factor: f64,
    /// Candidates used to estimate that standard deviation.
    pub std_samples: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            weights_seed: 5,
            noise_factor: 0.5,
            std_samples: 2000,
        }
    }
}

/// Everything a run depends on. Written to `config.json` before any work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: String,
    pub evaluator: EvaluatorKind,
    /// Copied into `search.seed`; seeds sampling, the comparator and training.
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Values CSV; the synthetic generator is used when absent.
    pub data: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub window: WindowConfig,
    pub split: [f64; 3],
    pub train: TrainConfig,
    pub space: SpaceConfig,
    pub search: SearchConfig,
    pub oracle: OracleSettings,
}

impl RunConfig {
    pub fn profile(name: &str) -> Option<Self> {
        let search = SearchConfig::profile(name)?;
        let train = if name == "desk" {
            TrainConfig {
                batch_size: 32,
                max_train_windows: Some(128),
                max_eval_windows: Some(96),
                ..TrainConfig::default()
            }
        } else {
            TrainConfig::default()
        };
        Some(Self {
            profile: name.to_string(),
            evaluator: EvaluatorKind::Forecast,
            seed: 0,
            workers: 1,
            out: PathBuf::from("runs/default"),
            data: None,
            adjacency: None,
            synthetic: SyntheticConfig::default(),
            window: WindowConfig::default(),
            split: DEFAULT_SPLIT,
            train,
            space: SpaceConfig::default(),
            search,
            oracle: OracleSettings::default(),
        })
    }

    fn finalize(mut self) -> Self {
        self.search.seed = self.seed;
        self.workers = self.workers.max(1);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ctsearch", version, about = "Joint architecture and hyperparameter search for correlated time series forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file (dotted keys, JSON or bare values).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Default set: desk or paper.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub evaluator: Option<EvaluatorKind>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel evaluation slots.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Values CSV (defaults to the synthetic dataset).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Header-less N x N adjacency CSV.
    #[arg(long, global = true)]
    pub adjacency: Option<PathBuf>,
    /// Any config key, e.g. `--set search.k_s=80`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BankChannel {
    Noisy,
    Clean,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset (values and adjacency CSVs).
    SynthData,
    /// Score a bank of candidates and store its comparison samples.
    GenSamples {
        #[arg(long, value_enum)]
        channel: BankChannel,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a comparator from scratch on noisy then clean samples.
    TrainAhc,
    /// Adapt a saved comparator with small target banks.
    TransferAhc {
        /// Checkpoint stem of the source comparator.
        #[arg(long)]
        from: PathBuf,
    },
    /// Run the whole search.
    Search {
        /// Start from this comparator checkpoint instead of training one.
        #[arg(long)]
        transfer_from: Option<PathBuf>,
    },
    /// Train and score one candidate.
    EvalArch {
        /// JSON file holding the candidate.
        #[arg(long)]
        ah: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare k-epoch proxy scores with full scores.
    BenchProxy {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        full_epochs: Option<usize>,
        #[arg(long, default_value_t = 12)]
        candidates: usize,
    },
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Setting {
    key: String,
    value: String,
    origin: String,
}

fn parse_config_file(path: &Path) -> Result<Vec<Setting>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        out.push(Setting {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            origin: format!("{}:{}", path.display(), n + 1),
        });
    }
    Ok(out)
}

fn parse_set(s: &str) -> Result<Setting, CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
    Ok(Setting {
        key: k.trim().to_string(),
        value: v.trim().to_string(),
        origin: format!("--set {s}"),
    })
}

/// Rejects one source setting a key twice to different values.
fn check_conflicts(settings: &[Setting]) -> Result<(), CliError> {
    let mut seen: BTreeMap<&str, &Setting> = BTreeMap::new();
    for s in settings {
        if let Some(prev) = seen.get(s.key.as_str()) {
            if prev.value != s.value {
                return Err(CliError::Usage(format!(
                    "conflicting values for `{}`: `{}` from {} and `{}` from {}",
                    s.key, prev.value, prev.origin, s.value, s.origin
                )));
            }
        }
        seen.insert(&s.key, s);
    }
    Ok(())
}

fn apply(root: &mut Value, s: &Setting) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = s.key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("unknown config key `{}` ({})", s.key, s.origin)))?;
        if !obj.contains_key(*part) {
            return Err(CliError::Usage(format!("unknown config key `{}` ({})", s.key, s.origin)));
        }
        let slot = obj.get_mut(*part).expect("checked");
        if i + 1 == parts.len() {
            *slot = serde_json::from_str(&s.value).unwrap_or_else(|_| Value::String(s.value.clone()));
            return Ok(());
        }
        node = slot;
    }
    Ok(())
}

/// Defaults of the chosen profile, then the config file, then `--set` and
/// the dedicated flags.
pub fn resolve_config(common: &Common, command: &Command) -> Result<RunConfig, CliError> {
    let file = match &common.config {
        Some(p) => parse_config_file(p)?,
        None => Vec::new(),
    };
    check_conflicts(&file)?;
    let mut flags = common.set.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>, _>>()?;
    let mut flag = |key: &str, value: String, name: &str| {
        flags.push(Setting {
            key: key.to_string(),
            value,
            origin: format!("--{name}"),
        })
    };
    let quoted = |p: &PathBuf| serde_json::to_string(&p.display().to_string()).expect("string serializes");
    if let Some(p) = &common.profile {
        flag("profile", p.clone(), "profile");
    }
    if let Some(e) = common.evaluator {
        flag("evaluator", serde_json::to_string(&e).expect("enum serializes"), "evaluator");
    }
    if let Some(s) = common.seed {
        flag("seed", s.to_string(), "seed");
    }
    if let Some(w) = common.workers {
        flag("workers", w.to_string(), "workers");
    }
    if let Some(p) = &common.out {
        flag("out", quoted(p), "out");
    }
    if let Some(p) = &common.data {
        flag("data", quoted(p), "data");
    }
    if let Some(p) = &common.adjacency {
        flag("adjacency", quoted(p), "adjacency");
    }
    match command {
        Command::GenSamples { channel, count: Some(c) } => {
            let key = if *channel == BankChannel::Noisy { "search.l1" } else { "search.l2" };
            flag(key, c.to_string(), "count");
        }
        Command::EvalArch { epochs: Some(e), .. } => flag("search.full_epochs", e.to_string(), "epochs"),
        Command::BenchProxy { k, full_epochs, .. } => {
            if let Some(k) = k {
                flag("search.proxy_epochs", k.to_string(), "k");
            }
            if let Some(e) = full_epochs {
                flag("search.full_epochs", e.to_string(), "full-epochs");
            }
        }
        _ => {}
    }
    check_conflicts(&flags)?;

    let profile = flags
        .iter()
        .chain(file.iter().rev())
        .find(|s| s.key == "profile")
        .map(|s| s.value.trim_matches('"').to_string())
        .unwrap_or_else(|| "desk".to_string());
    let base = RunConfig::profile(&profile).ok_or_else(|| CliError::Usage(format!("unknown profile `{profile}` (desk, paper)")))?;
    let mut value = serde_json::to_value(&base).expect("config serializes");
    for s in file.iter().chain(flags.iter()) {
        if s.key != "profile" {
            apply(&mut value, s)?;
        }
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let cfg = cfg.finalize();
    cfg.search.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_dataset(cfg: &RunConfig) -> Result<CtsDataset, CliError> {
    match &cfg.data {
        Some(p) => load_csv(p, cfg.adjacency.as_deref()).map_err(runtime),
        None => generate_synthetic(&cfg.synthetic).map_err(runtime),
    }
}

pub fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>, CliError> {
    match cfg.evaluator {
        EvaluatorKind::Oracle => {
            let mut o = SyntheticOracleConfig::random(cfg.oracle.weights_seed, cfg.space.clone())
                .with_relative_noise(cfg.oracle.noise_factor, cfg.oracle.std_samples)
                .map_err(runtime)?;
            o.proxy_epochs = cfg.search.proxy_epochs;
            o.full_epochs = cfg.search.full_epochs;
            Ok(Box::new(o))
        }
        EvaluatorKind::Forecast => {
            let ds = load_dataset(cfg)?;
            let data = prepare(&ds, cfg.window, cfg.split).map_err(runtime)?;
            Ok(Box::new(ForecastEvaluator {
                data: Arc::new(data),
                train: cfg.train.clone(),
                proxy_epochs: cfg.search.proxy_epochs,
                full_epochs: cfg.search.full_epochs,
                seed: cfg.seed,
            }))
        }
    }
}

/// Plain-text table with columns padded to their widest cell.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, headers.to_vec());
    line(&mut out, widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        line(&mut out, r.iter().map(String::as_str).collect());
    }
    out
}

fn kv(rows: &[(&str, String)]) -> String {
    table(&["field", "value"], &rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect::<Vec<_>>())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(runtime)? + "\n";
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn short(ah: &ArchHyper) -> String {
    let h = ah.hyper;
    let ops: Vec<String> = ah.arch.edges.iter().map(|e| format!("{}>{}:{}", e.src, e.dst, e.op.name())).collect();
    format!("B{} C{} H{} I{} U{} d{} [{}]", h.b, h.c, h.h, h.i, h.u, h.delta, ops.join(" "))
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve_config(&cli.common, &cli.command)?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out.display())))?;
    write_json(&cfg.out.join("config.json"), &cfg)?;
    let out = cfg.out.clone();
    match &cli.command {
        Command::SynthData => {
            let ds = generate_synthetic(&cfg.synthetic).map_err(runtime)?;
            let (values, adj) = (out.join("data.csv"), out.join("adjacency.csv"));
            save_csv(&ds, &values, Some(&adj)).map_err(runtime)?;
            let res = json!({ "values": "data.csv", "adjacency": "adjacency.csv", "n": ds.n, "t": ds.t, "f": ds.f });
            write_json(&out.join("synth-data.json"), &res)?;
            Ok(kv(&[
                ("series", ds.n.to_string()),
                ("steps", ds.t.to_string()),
                ("features", ds.f.to_string()),
                ("values", values.display().to_string()),
                ("adjacency", adj.display().to_string()),
            ]))
        }
        Command::GenSamples { channel, .. } => {
            let ev = build_evaluator(&cfg)?;
            let (name, ch, count) = match channel {
                BankChannel::Noisy => ("noisy", Channel::Proxy, cfg.search.l1),
                BankChannel::Clean => ("clean", Channel::Full, cfg.search.l2),
            };
            let files = BankFiles::new(&out, name);
            let bank = build_bank(ev.as_ref(), &cfg.space, ch, count, cfg.seed, Some(&files), cfg.workers).map_err(runtime)?;
            let res = json!({
                "channel": name,
                "candidates": bank.records.len(),
                "samples": bank.samples.len(),
                "evaluations": bank.evaluations,
                "fresh_evaluations": bank.fresh,
                "samples_file": files.samples.file_name().map(|f| f.to_string_lossy().to_string()),
            });
            write_json(&out.join(format!("gen-samples-{name}.json")), &res)?;
            Ok(kv(&[
                ("channel", name.to_string()),
                ("candidates", bank.records.len().to_string()),
                ("samples", bank.samples.len().to_string()),
                ("evaluations", bank.evaluations.to_string()),
                ("fresh", bank.fresh.to_string()),
                ("bank", files.samples.display().to_string()),
            ]))
        }
        Command::TrainAhc | Command::TransferAhc { .. } => {
            let ev = build_evaluator(&cfg)?;
            let pretrained = match &cli.command {
                Command::TransferAhc { from } => Some(ComparatorModel::load(from).map_err(runtime)?),
                _ => None,
            };
            let transfer = pretrained.is_some();
            let (n1, n2) = if transfer {
                (cfg.search.z1, cfg.search.z2)
            } else {
                (cfg.search.l1, cfg.search.l2)
            };
            let noisy_files = BankFiles::new(&out, "noisy");
            let clean_files = BankFiles::new(&out, "clean");
            let noisy = build_bank(ev.as_ref(), &cfg.space, Channel::Proxy, n1, cfg.seed, Some(&noisy_files), cfg.workers)
                .map_err(runtime)?;
            let clean = build_bank(ev.as_ref(), &cfg.space, Channel::Full, n2, cfg.seed, Some(&clean_files), cfg.workers)
                .map_err(runtime)?;
            let ahc_cfg = AhcTrainConfig {
                seed: cfg.seed,
                ..cfg.search.ahc.clone()
            };
            let (model, history) = match pretrained {
                Some(mut m) => {
                    let h = transfer_finetune(&mut m, &noisy.samples, &clean.samples, cfg.search.transfer_epochs, &ahc_cfg)
                        .map_err(runtime)?;
                    (m, h)
                }
                None => {
                    let mut m = ComparatorModel::new(cfg.search.ahc_layers, cfg.search.ahc_hidden, cfg.space.clone(), cfg.seed);
                    let h = train_denoising(&mut m, &noisy.samples, &clean.samples, &ahc_cfg).map_err(runtime)?;
                    (m, h)
                }
            };
            model.save(&out.join("ahc")).map_err(runtime)?;
            let clean_acc = pair_accuracy(&model, &read_samples(&clean_files.samples).map_err(runtime)?).map_err(runtime)?;
            let name = if transfer { "transfer-ahc" } else { "train-ahc" };
            let res = json!({
                "checkpoint": "ahc",
                "transfer": transfer,
                "noisy_candidates": n1,
                "clean_candidates": n2,
                "fresh_evaluations": noisy.fresh + clean.fresh,
                "clean_pair_accuracy": clean_acc,
                "history": history,
            });
            write_json(&out.join(format!("{name}.json")), &res)?;
            let rows: Vec<Vec<String>> = history
                .iter()
                .map(|h| {
                    vec![
                        format!("{:?}", h.phase).to_lowercase(),
                        h.epoch.to_string(),
                        format!("{:.4}", h.train_loss),
                        format!("{:.4}", h.monitor_loss),
                    ]
                })
                .collect();
            Ok(table(&["phase", "epoch", "train_loss", "monitor_loss"], &rows)
                + &format!("\nclean pair accuracy {clean_acc:.3}; checkpoint {}\n", out.join("ahc").display()))
        }
        Command::Search { transfer_from } => {
            let ev = build_evaluator(&cfg)?;
            let pretrained = match transfer_from {
                Some(p) => Some(ComparatorModel::load(p).map_err(runtime)?),
                None => None,
            };
            let (r, _) = run_search(ev.as_ref(), &cfg.space, &cfg.search, pretrained, Some(&out), cfg.workers).map_err(runtime)?;
            let rows: Vec<Vec<String>> = r
                .finalists
                .iter()
                .map(|f| {
                    vec![
                        if f.ah == r.best { "*".into() } else { String::new() },
                        format!("{:.5}", f.val_error),
                        f.test_error.map(|t| format!("{t:.5}")).unwrap_or_else(|| "-".into()),
                        f.param_count.to_string(),
                        short(&f.ah),
                    ]
                })
                .collect();
            write_json(&out.join("best.json"), &r.best)?;
            Ok(table(&["best", "val_error", "test_error", "params", "candidate"], &rows)
                + &format!(
                    "\nproxy evals {}, full evals {}, comparator calls {}; manifest {}\n",
                    r.budget.proxy_evals,
                    r.budget.full_evals,
                    r.budget.comparator_calls,
                    out.join("manifest.json").display()
                ))
        }
        Command::EvalArch { ah, .. } => eval_arch(&cfg, ah),
        Command::BenchProxy { candidates, .. } => {
            let ev = build_evaluator(&cfg)?;
            let b = proxy_benchmark(
                ev.as_ref(),
                &cfg.space,
                *candidates,
                cfg.seed,
                Some(&out.join("bench-proxy-rows.jsonl")),
                cfg.workers,
            )
            .map_err(runtime)?;
            let res = json!({
                "k": cfg.search.proxy_epochs,
                "full_epochs": cfg.search.full_epochs,
                "candidates": candidates,
                "pra": b.pra,
                "spearman": b.spearman,
                "fresh_evaluations": b.fresh,
                "rows": b.rows,
            });
            write_json(&out.join("bench-proxy.json"), &res)?;
            let rows: Vec<Vec<String>> = b
                .rows
                .iter()
                .map(|r| vec![format!("{:.5}", r.proxy), format!("{:.5}", r.full), short(&r.ah)])
                .collect();
            Ok(table(&["proxy", "full", "candidate"], &rows)
                + &format!(
                    "\nPRA {:.4}  Spearman rho {:.4}  (k={}, full={}, {} candidates)\n",
                    b.pra, b.spearman, cfg.search.proxy_epochs, cfg.search.full_epochs, candidates
                ))
        }
    }
}

fn eval_arch(cfg: &RunConfig, path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let ah = ArchHyper::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let report = validate(&ah, &cfg.space);
    if !report.is_ok() {
        return Err(CliError::Usage(format!("{}: invalid candidate: {report}", path.display())));
    }
    let epochs = cfg.search.full_epochs;
    let result_path = cfg.out.join("eval-arch.json");
    if let Ok(prev) = fs::read_to_string(&result_path) {
        if let Ok(v) = serde_json::from_str::<Value>(&prev) {
            let same = v.get("ah") == Some(&serde_json::to_value(&ah).map_err(runtime)?)
                && v.get("epochs") == Some(&json!(epochs))
                && v.get("seed") == Some(&json!(cfg.seed))
                && v.get("evaluator") == Some(&json!(cfg.evaluator));
            if same {
                return Ok(format!("reused {}\n{}", result_path.display(), v.get("summary").and_then(Value::as_str).unwrap_or("")));
            }
        }
    }
    let (res, rows) = match cfg.evaluator {
        EvaluatorKind::Oracle => {
            let ev = build_evaluator(cfg)?;
            let f = ev.full(&ah).map_err(runtime)?;
            (json!({ "val_error": f.score }), vec![("val_error", format!("{:.5}", f.score))])
        }
        EvaluatorKind::Forecast => {
            let ds = load_dataset(cfg)?;
            let data = prepare(&ds, cfg.window, cfg.split).map_err(runtime)?;
            let s = crate::evaluator::candidate_seed(&ah, cfg.seed);
            let mut model = build_model(&ah, &data.config, s).map_err(runtime)?;
            let outcome = train_model(&mut model, &data, epochs, &cfg.train, s).map_err(runtime)?;
            let test = test_metrics(&model, &data, &cfg.train).map_err(runtime)?;
            let baseline = mean_predictor_error(&data, &cfg.train).map_err(runtime)?;
            let rows = vec![
                ("val_error", format!("{:.5}", outcome.best_val_error)),
                ("best_epoch", outcome.best_epoch.to_string()),
                ("epochs_run", outcome.epochs_run.to_string()),
                ("mean_baseline", format!("{baseline:.5}")),
                ("test", serde_json::to_string(&test).map_err(runtime)?),
                ("params", model.params.numel().to_string()),
            ];
            (
                json!({
                    "val_error": outcome.best_val_error,
                    "best_epoch": outcome.best_epoch,
                    "epochs_run": outcome.epochs_run,
                    "mean_baseline": baseline,
                    "test": test,
                    "history": outcome.history,
                }),
                rows,
            )
        }
    };
    let summary = kv(&rows);
    let mut res = res;
    let obj = res.as_object_mut().expect("object");
    obj.insert("ah".into(), serde_json::to_value(&ah).map_err(runtime)?);
    obj.insert("epochs".into(), json!(epochs));
    obj.insert("seed".into(), json!(cfg.seed));
    obj.insert("evaluator".into(), json!(cfg.evaluator));
    obj.insert("summary".into(), json!(summary));
    write_json(&result_path, &res)?;
    Ok(summary)
}
