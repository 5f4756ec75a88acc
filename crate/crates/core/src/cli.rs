//! Command-line driver: every subcommand reads an optional JSON config,
//! writes its artifacts to `--out`, and prints one summary line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cpp::{enumerate_pairings, solve_windows, write_metrics_csv, EnumerationLimits, SolveConfig, WarmMode, WindowConfig};
use crate::crew::{
    default_flight_config, generate_instance, predicted_plan, train_flight_model, Decoding, FlightData, GeneratorParams,
    Instance, PairingPlan, RuleSet,
};
use crate::error::{Error, Result};
use crate::inference::Ad3Config;
use crate::ocr::{ckn_config, parse_ocr, struct_examples, synthetic_ocr, train_linear, LinearChainModel, LinearConfig, OcrDataset};
use crate::optim::{TrainLog, TrainLogRow};
use crate::trainer::{node_error_rate, train_struct_ckn, StructCknModel, TrainConfig};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
pub const THREADS_ENV: &str = "STRUCTCKN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "structckn", version = VERSION, about = "Struct-CKN training, crew pairing and set-partitioning tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an OCR model (linear features or Struct-CKN).
    TrainOcr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_fold: Option<usize>,
    },
    /// Character error rate of a saved OCR model on the test fold.
    EvalOcr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        test_fold: Option<usize>,
    },
    /// Generate a synthetic flight schedule with ground-truth pairings.
    GenInstance {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the next-flight model on generated instances.
    TrainFlight {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict, assemble and filter pairings for one instance.
    BuildPairings {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "constrained")]
        decoding: DecodingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the set-partitioning problem, optionally warm-started.
    SolveCpp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[arg(long, requires = "warm_start")]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect the reports found under a directory into one table.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecodingArg {
    Constrained,
    Unconstrained,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Clusters,
    Solution,
    Both,
}

/// Where OCR words come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OcrSource {
    File { path: PathBuf },
    Synthetic { n_words: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OcrModelConfig {
    Linear(LinearConfig),
    Ckn(Box<CknOcrConfig>),
}

/// The stock OCR network; `train` replaces it wholesale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CknOcrConfig {
    pub filters: usize,
    pub outer_iters: usize,
    pub seed: u64,
    pub train: Option<TrainConfig>,
}

impl Default for CknOcrConfig {
    fn default() -> Self {
        Self { filters: 64, outer_iters: 10, seed: 0, train: None }
    }
}

impl CknOcrConfig {
    pub fn train_config(&self) -> TrainConfig {
        self.train.clone().unwrap_or_else(|| ckn_config(self.filters, self.outer_iters, self.seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrRunConfig {
    pub data: OcrSource,
    #[serde(default)]
    pub test_fold: usize,
    pub model: OcrModelConfig,
}

impl Default for OcrRunConfig {
    fn default() -> Self {
        Self {
            data: OcrSource::Synthetic { n_words: 200, seed: 0 },
            test_fold: 0,
            model: OcrModelConfig::Linear(LinearConfig::default()),
        }
    }
}

impl OcrRunConfig {
    pub fn load_data(&self) -> Result<OcrDataset> {
        match &self.data {
            OcrSource::File { path } => parse_ocr(&read_text(path)?),
            OcrSource::Synthetic { n_words, seed } => Ok(synthetic_ocr(*n_words, *seed)),
        }
    }
}

/// Defaults to the schedule shape the stock flight model is trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceConfig {
    pub generator: GeneratorParams,
    pub rules: RuleSet,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        let data = FlightData::default();
        Self { generator: data.generator, rules: data.rules }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct FlightRunConfig {
    pub data: FlightData,
    /// Defaults to the stock flight network for `data`.
    pub train: Option<TrainConfig>,
    pub seed: u64,
}


#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CppRunConfig {
    pub solve: SolveConfig,
    pub window: WindowConfig,
    pub limits: EnumerationLimits,
}

/// Metrics of one command run together with the fully resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    /// File holding the per-epoch or per-window rows the metrics come from.
    pub log: Option<String>,
}

impl ExperimentReport {
    fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: VERSION.into(),
            seed,
            threads: threads(),
            config: serde_json::to_value(config)?,
            metrics: BTreeMap::new(),
            log: None,
        })
    }

    fn metric(mut self, name: &str, v: f64) -> Self {
        self.metrics.insert(name.into(), v);
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&read_text(path)?)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(dir.join("report.json"), &serde_json::to_string_pretty(self)?)
    }
}

/// Worker count from `STRUCTCKN_THREADS`, 1 when unset or invalid.
pub fn threads() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_text(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_file(path: impl AsRef<Path>, text: &str) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, text)?)
}

fn last_row(rows: &[TrainLogRow]) -> Result<&TrainLogRow> {
    rows.last().ok_or_else(|| Error::Config("training ran zero epochs".into()))
}

fn train_ocr(config: Option<&Path>, out: &Path, test_fold: Option<usize>) -> Result<String> {
    let mut cfg: OcrRunConfig = read_config(config)?;
    if let Some(f) = test_fold {
        cfg.test_fold = f;
    }
    let (train, test) = cfg.load_data()?.split(cfg.test_fold);
    fs::create_dir_all(out)?;
    let mut log = TrainLog::create(out.join("train_log.csv"))?;
    let (model_json, rows, seed) = match &cfg.model {
        OcrModelConfig::Linear(lc) => {
            let (m, rows) = train_linear(&train, &test, lc, Some(&mut log))?;
            (m.to_json()?, rows, lc.seed)
        }
        OcrModelConfig::Ckn(cc) => {
            let tc = &cc.train_config();
            let (m, rows) = train_struct_ckn(&struct_examples(&train), &struct_examples(&test), tc, Some(&mut log))?;
            (m.to_json()?, rows, tc.seed)
        }
    };
    write_file(out.join("model.json"), &model_json)?;
    let last = last_row(&rows)?;
    let mut report = ExperimentReport::new("train-ocr", seed, &cfg)?
        .metric("n_train_words", train.len() as f64)
        .metric("n_test_words", test.len() as f64)
        .metric("epochs", last.epoch as f64)
        .metric("primal", last.primal)
        .metric("dual", last.dual)
        .metric("gap", last.gap)
        .metric("test_error", last.test_error);
    report.log = Some("train_log.csv".into());
    report.write(out)?;
    Ok(format!(
        "train-ocr: {} train / {} test words, {} epochs, gap {:.3e}, test error {:.2}%",
        train.len(),
        test.len(),
        last.epoch,
        last.gap,
        100.0 * last.test_error
    ))
}

fn eval_ocr(config: Option<&Path>, model: &Path, out: Option<&Path>, test_fold: Option<usize>) -> Result<String> {
    let mut cfg: OcrRunConfig = read_config(config)?;
    if let Some(f) = test_fold {
        cfg.test_fold = f;
    }
    let (_, test) = cfg.load_data()?.split(cfg.test_fold);
    let text = read_text(model)?;
    let error = match &cfg.model {
        OcrModelConfig::Linear(_) => LinearChainModel::from_json(&text)?.error_rate(&test)?,
        OcrModelConfig::Ckn(cc) => {
            let tc = cc.train_config();
            node_error_rate(&StructCknModel::from_json(&text)?, &struct_examples(&test), &tc.ad3(), tc.optimizer.epsilon)?
        }
    };
    if let Some(dir) = out {
        ExperimentReport::new("eval-ocr", 0, &cfg)?
            .metric("n_test_words", test.len() as f64)
            .metric("test_error", error)
            .write(dir)?;
    }
    Ok(format!("eval-ocr: {} test words, test error {:.2}%", test.len(), 100.0 * error))
}

fn gen_instance(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut cfg: InstanceConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.generator.seed = s;
    }
    let inst = generate_instance(&cfg.generator, &cfg.rules)?;
    write_file(out.join("instance.json"), &inst.to_json()?)?;
    ExperimentReport::new("gen-instance", cfg.generator.seed, &cfg)?
        .metric("n_flights", inst.flights.len() as f64)
        .metric("n_true_pairings", inst.ground_truth.len() as f64)
        .write(out)?;
    Ok(format!(
        "gen-instance: {} flights, {} ground-truth pairings, seed {}",
        inst.flights.len(),
        inst.ground_truth.len(),
        cfg.generator.seed
    ))
}

fn train_flight(config: Option<&Path>, out: &Path) -> Result<String> {
    let mut cfg: FlightRunConfig = read_config(config)?;
    let tc = cfg.train.take().unwrap_or_else(|| default_flight_config(&cfg.data.generator, &cfg.data.rules, cfg.seed));
    cfg.train = Some(tc.clone());
    let instances = cfg.data.instances(&cfg.data.train_seeds)?;
    fs::create_dir_all(out)?;
    let mut log = TrainLog::create(out.join("train_log.csv"))?;
    let (model, rows) = train_flight_model(&instances, &tc, Some(&mut log))?;
    write_file(out.join("model.json"), &model.to_json()?)?;
    let last = last_row(&rows)?;
    let mut report = ExperimentReport::new("train-flight", cfg.seed, &cfg)?
        .metric("n_instances", instances.len() as f64)
        .metric("primal", last.primal)
        .metric("dual", last.dual)
        .metric("gap", last.gap);
    report.log = Some("train_log.csv".into());
    report.write(out)?;
    Ok(format!("train-flight: {} instances, {} outer iterations, gap {:.3e}", instances.len(), last.epoch, last.gap))
}

fn build_pairings(instance: &Path, model: &Path, decoding: DecodingArg, out: &Path) -> Result<String> {
    let inst = Instance::load(instance)?;
    let model = StructCknModel::from_json(&read_text(model)?)?;
    let decoding = match decoding {
        DecodingArg::Constrained => Decoding::Constrained,
        DecodingArg::Unconstrained => Decoding::Unconstrained,
    };
    let cost = Default::default();
    let (plan, stats) = predicted_plan(&model, &inst, decoding, &Ad3Config::default(), &cost)?;
    write_file(out.join("plan.json"), &plan.to_json()?)?;
    ExperimentReport::new("build-pairings", 0, &decoding)?
        .metric("n_pairings", stats.n_pairings as f64)
        .metric("percent_infeasible", stats.percent_infeasible)
        .metric("covered_flights", stats.covered_flights as f64)
        .metric("plan_cost", stats.cost)
        .write(out)?;
    Ok(format!(
        "build-pairings: {} pairings, {:.2}% infeasible before filtering, {} flights covered",
        stats.n_pairings, stats.percent_infeasible, stats.covered_flights
    ))
}

fn solve_cpp(instance: &Path, config: Option<&Path>, warm: Option<&Path>, mode: Option<ModeArg>, out: &Path) -> Result<String> {
    let inst = Instance::load(instance)?;
    let mut cfg: CppRunConfig = read_config(config)?;
    let plan = match warm {
        Some(p) => Some(PairingPlan::from_json(&read_text(p)?)?),
        None => None,
    };
    if plan.is_some() {
        cfg.solve.warm_mode = Some(match mode {
            Some(ModeArg::Clusters) => WarmMode::Clusters,
            Some(ModeArg::Solution) => WarmMode::Solution,
            Some(ModeArg::Both) | None => WarmMode::Both,
        });
    }
    let pool = enumerate_pairings(&inst, &cfg.limits, &cfg.solve.cost)?;
    let sol = solve_windows(&inst, &pool, plan.as_ref(), &cfg.solve, &cfg.window)?;
    write_file(out.join("solution.json"), &sol.to_json()?)?;
    write_metrics_csv(std::slice::from_ref(&sol.metrics), out.join("metrics.csv"))?;
    let m = &sol.metrics;
    let mut report = ExperimentReport::new("solve-cpp", 0, &cfg)?
        .metric("lp_root", m.lp_root)
        .metric("n_nodes", m.n_nodes as f64)
        .metric("solution_cost", m.solution_cost)
        .metric("global_cost", m.global_cost)
        .metric("total_cost", m.total_cost)
        .metric("n_deadheads", m.n_deadheads as f64)
        .metric("n_undercovered", m.n_undercovered as f64)
        .metric("wall_seconds", m.wall_seconds);
    report.log = Some("metrics.csv".into());
    report.write(out)?;
    Ok(format!(
        "solve-cpp: {} pairings, total cost {:.1}, root LP {:.1}, {} nodes, {} deadheads{}",
        sol.pairings.len(),
        m.total_cost,
        m.lp_root,
        m.n_nodes,
        m.n_deadheads,
        if m.optimal { "" } else { " (not proven optimal)" }
    ))
}

fn report(dir: &Path, out: Option<&Path>) -> Result<String> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                found.push(path);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(format!("no report.json under {}", dir.display())));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["run", "command", "version", "seed", "threads", "metric", "value"])?;
    for path in &found {
        let r = ExperimentReport::load(path)?;
        let run = path.parent().and_then(|p| p.strip_prefix(dir).ok()).map_or(String::new(), |p| p.display().to_string());
        for (k, v) in &r.metrics {
            wtr.write_record([&run, &r.command, &r.version, &r.seed.to_string(), &r.threads.to_string(), k, &v.to_string()])?;
        }
    }
    let table = String::from_utf8(wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::Config(e.to_string()))?;
    let dest = out.map_or_else(|| dir.join("summary.csv"), Path::to_path_buf);
    write_file(&dest, &table)?;
    Ok(format!("report: {} runs collected into {}", found.len(), dest.display()))
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::TrainOcr { config, out, test_fold } => train_ocr(config.as_deref(), &out, test_fold),
        Command::EvalOcr { config, model, out, test_fold } => eval_ocr(config.as_deref(), &model, out.as_deref(), test_fold),
        Command::GenInstance { config, seed, out } => gen_instance(config.as_deref(), seed, &out),
        Command::TrainFlight { config, out } => train_flight(config.as_deref(), &out),
        Command::BuildPairings { instance, model, decoding, out } => build_pairings(&instance, &model, decoding, &out),
        Command::SolveCpp { instance, config, warm_start, mode, out } => {
            solve_cpp(&instance, config.as_deref(), warm_start.as_deref(), mode, &out)
        }
        Command::Report { dir, out } => report(&dir, out.as_deref()),
    }
}

/// Parse `args` (program name first) and run the command. Returns the
/// process exit status: 0 on success, 2 on usage errors, 1 on failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        run(std::iter::once("structckn".to_string()).chain(args.iter().map(|a| a.replace("{d}", dir.to_str().unwrap()))))
    }

    #[test]
    fn usage_errors_exit_two() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(run_in(d.path(), &["frobnicate"]), 2);
        assert_eq!(run_in(d.path(), &["gen-instance", "--out", "{d}", "--bogus"]), 2);
        assert_eq!(run_in(d.path(), &["solve-cpp", "--instance", "x", "--out", "{d}", "--mode", "both"]), 2);
    }

    #[test]
    fn runtime_errors_exit_one() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(run_in(d.path(), &["solve-cpp", "--instance", "{d}/missing.json", "--out", "{d}/o"]), 1);
        assert_eq!(run_in(d.path(), &["report", "--dir", "{d}"]), 1);
    }

    #[test]
    fn gen_instance_is_byte_identical() {
        let d = tempfile::tempdir().unwrap();
        let cfg = r#"{"generator": {"n_cities": 6, "n_bases": 2, "n_flights": 40, "horizon_days": 4, "aircraft_types": 1}}"#;
        fs::write(d.path().join("g.json"), cfg).unwrap();
        for run_dir in ["a", "b"] {
            let args = ["gen-instance", "--config", "{d}/g.json", "--seed", "7", "--out", &format!("{{d}}/{run_dir}")];
            assert_eq!(run_in(d.path(), &args), 0);
        }
        for f in ["instance.json", "report.json"] {
            assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap());
        }
        let r = ExperimentReport::load(d.path().join("a/report.json")).unwrap();
        assert_eq!(r.seed, 7);
        assert_eq!(r.config["generator"]["seed"], 7);
    }

    #[test]
    fn ocr_train_then_eval() {
        let d = tempfile::tempdir().unwrap();
        let cfg = r#"{"data": {"kind": "synthetic", "n_words": 40, "seed": 3}, "model": {"kind": "linear", "epochs": 3}}"#;
        fs::write(d.path().join("c.json"), cfg).unwrap();
        assert_eq!(run_in(d.path(), &["train-ocr", "--config", "{d}/c.json", "--out", "{d}/run"]), 0);
        for f in ["model.json", "train_log.csv", "report.json"] {
            assert!(d.path().join("run").join(f).exists(), "{f}");
        }
        let args = ["eval-ocr", "--config", "{d}/c.json", "--model", "{d}/run/model.json", "--out", "{d}/eval"];
        assert_eq!(run_in(d.path(), &args), 0);
        let trained = ExperimentReport::load(d.path().join("run/report.json")).unwrap();
        let evald = ExperimentReport::load(d.path().join("eval/report.json")).unwrap();
        assert_eq!(trained.metrics["test_error"], evald.metrics["test_error"]);
        assert_eq!(run_in(d.path(), &["report", "--dir", "{d}"]), 0);
        let table = fs::read_to_string(d.path().join("summary.csv")).unwrap();
        assert!(table.contains("eval,eval-ocr"));
    }

    #[test]
    fn solve_with_warm_start_writes_metrics() {
        let d = tempfile::tempdir().unwrap();
        let cfg = r#"{"generator": {"n_cities": 4, "n_bases": 2, "n_flights": 12, "horizon_days": 3, "aircraft_types": 1}}"#;
        fs::write(d.path().join("g.json"), cfg).unwrap();
        assert_eq!(run_in(d.path(), &["gen-instance", "--config", "{d}/g.json", "--out", "{d}"]), 0);
        let inst = Instance::load(d.path().join("instance.json")).unwrap();
        let plan = PairingPlan { pairings: inst.ground_truth.clone(), uncovered: Vec::new() };
        fs::write(d.path().join("plan.json"), plan.to_json().unwrap()).unwrap();
        let args =
            ["solve-cpp", "--instance", "{d}/instance.json", "--warm-start", "{d}/plan.json", "--mode", "both", "--out", "{d}/s"];
        assert_eq!(run_in(d.path(), &args), 0);
        let header = fs::read_to_string(d.path().join("s/metrics.csv")).unwrap();
        let cols: Vec<&str> = header.lines().next().unwrap().split(',').collect();
        for c in ["lp_root", "n_nodes", "solution_cost", "global_cost", "n_deadheads"] {
            assert!(cols.contains(&c), "{c}");
        }
        let report = ExperimentReport::load(d.path().join("s/report.json")).unwrap();
        assert_eq!(report.config["solve"]["warm_mode"], "both");
    }
}
