//! Command-line front end.
//!
//! Every command accepts an optional flat `key = value` file through
//! `--config`; keys are flag names without the leading dashes. Flags given on
//! the command line win over the file. Exit codes: 0 on success, 1 for input
//! or validation problems, 2 for numeric failures.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::data::{
    load_csv, load_feature_rows, load_rows, normalize, partition_tasks, synth_multitask, write_csv, Bin,
    CsvOptions, LabelMap, PartitionRule, SynthConfig, TaskDataset,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, epsilon_range, format_reports, grid_search, power_range, write_grid_csv,
    write_reports_csv, CvConfig, CvReport, GridSpec, UniversumSource,
};
use crate::kernel::KernelSpec;
use crate::models::{fit, load_model, save_model, Hyperparams, Method, TrainedModel};
use crate::universum::{generate_universum, UniversumConfig};

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "UMTSVM_SEED";

#[derive(Parser, Debug)]
#[command(name = "umtsvm", version, about = "Multi-task twin SVMs with Universum data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one model and write it to a file.
    Train(TrainArgs),
    /// k-fold cross-validation of one or all methods.
    Cv(CvArgs),
    /// Exhaustive grid search with k-fold cross-validation.
    Gridsearch(GridArgs),
    /// Compare all methods on one dataset.
    Bench(BenchArgs),
    /// Label rows with a saved model.
    Predict(PredictArgs),
    /// Write a synthetic multi-task dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path, or `synth[:key=value,...]` for generated data.
    #[arg(long)]
    pub data: Option<String>,
    /// Column holding the task id. Defaults to `task` when the header has
    /// one; otherwise all rows form task 1.
    #[arg(long)]
    pub task_col: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    /// Raw-to-label mapping such as `yes=1,no=-1`.
    #[arg(long)]
    pub label_map: Option<String>,
    /// Split tasks by binning a column: `column:bin;bin;...` with bins
    /// written `lo..hi`, `lo..=hi` or `v1|v2`.
    #[arg(long)]
    pub partition: Option<String>,
    /// Remove the partition column from the features.
    #[arg(long)]
    pub drop_partition_col: bool,
    /// Seed for folds and Universum pairing (default: $UMTSVM_SEED or 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// `on` builds midpoint Universum rows, `off` uses none.
    #[arg(long)]
    pub universum: Option<String>,
    /// Share of the smaller class paired into Universum rows.
    #[arg(long)]
    pub universum_fraction: Option<f64>,
    /// Skip min-max scaling of the features.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HpArgs {
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub cu: Option<f64>,
    #[arg(long)]
    pub cu_star: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// `linear` or `gaussian`.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gram regularization relative to the mean Gram diagonal.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub qp_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long)]
    pub method: Option<String>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// A method name or `all`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Candidate lists such as `c1=1,2 mu1=0.5`; a bare key takes the
    /// default range. May be repeated.
    #[arg(long)]
    pub grid: Vec<String>,
    /// Tie c2, cu-star and mu2 to c1, cu and mu1.
    #[arg(long)]
    pub mirror: bool,
    /// CSV file for the full table (one row per configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Comma-separated method names, or `all`.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Optional shared grid, searched per method.
    #[arg(long)]
    pub grid: Vec<String>,
    #[arg(long)]
    pub mirror: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the model's feature columns and a task column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "task")]
    pub task_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    #[arg(long)]
    pub label_map: Option<String>,
    /// Output CSV (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub tasks: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Settings read from a `key = value` file.
#[derive(Debug, Default)]
struct Settings(HashMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected `key = value`", path.display(), n + 1))
            })?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Settings(map))
    }

    fn text(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.0.get(key).cloned())
    }

    fn value<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("config key `{key}`: cannot parse `{raw}`"))),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.value::<bool>(None, key)?.unwrap_or(false))
    }
}

/// A number, or `2^k`.
fn parse_number(raw: &str) -> Result<f64> {
    let raw = raw.trim();
    let parsed = match raw.split_once('^') {
        Some((base, exp)) => base
            .trim()
            .parse::<f64>()
            .ok()
            .zip(exp.trim().parse::<i32>().ok())
            .map(|(b, e)| b.powi(e)),
        None => raw.parse::<f64>().ok(),
    };
    parsed.ok_or_else(|| Error::Config(format!("`{raw}` is not a number")))
}

fn resolve_hyperparams(hp: &HpArgs, s: &Settings) -> Result<Hyperparams> {
    let d = Hyperparams::default();
    let gamma = s.value(hp.gamma, "gamma")?;
    let kernel = match s.text(&hp.kernel, "kernel").as_deref() {
        None | Some("linear") => KernelSpec::Linear,
        Some("gaussian" | "rbf") => KernelSpec::Gaussian { gamma: gamma.unwrap_or(1.0) },
        Some(other) => return Err(Error::Config(format!("--kernel: unknown kernel `{other}`"))),
    };
    let out = Hyperparams {
        c1: s.value(hp.c1, "c1")?.unwrap_or(d.c1),
        c2: s.value(hp.c2, "c2")?.unwrap_or(d.c2),
        c_u: s.value(hp.cu, "cu")?.unwrap_or(d.c_u),
        c_u_star: s.value(hp.cu_star, "cu-star")?.unwrap_or(d.c_u_star),
        mu1: s.value(hp.mu1, "mu1")?.unwrap_or(d.mu1),
        mu2: s.value(hp.mu2, "mu2")?.unwrap_or(d.mu2),
        epsilon: s.value(hp.eps, "eps")?.unwrap_or(d.epsilon),
        kernel,
        delta: s.value(hp.delta, "delta")?.unwrap_or(d.delta),
        qp_tol: s.value(hp.qp_tol, "qp-tol")?.unwrap_or(d.qp_tol),
        max_iter: s.value(hp.max_iter, "max-iter")?.unwrap_or(d.max_iter),
        kernel_basis: false,
    };
    out.validate()?;
    Ok(out)
}

fn resolve_seed(flag: Option<u64>, s: &Settings) -> Result<u64> {
    if let Some(seed) = s.value(flag, "seed")? {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("${SEED_ENV} is not an integer: `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn parse_synth(spec: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    let params = spec.strip_prefix("synth").unwrap_or(spec).trim_start_matches(':');
    for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--data: synthetic option `{pair}` is not key=value")))?;
        let bad = || Error::Config(format!("--data: cannot parse synthetic option `{pair}`"));
        match k.trim() {
            "tasks" => cfg.tasks = v.parse().map_err(|_| bad())?,
            "per_class" | "per-class" => cfg.per_class = v.parse().map_err(|_| bad())?,
            "dim" | "dimension" => cfg.dimension = v.parse().map_err(|_| bad())?,
            "shift" => cfg.task_shift = v.parse().map_err(|_| bad())?,
            "noise" => cfg.noise = v.parse().map_err(|_| bad())?,
            "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
            other => return Err(Error::Config(format!("--data: unknown synthetic option `{other}`"))),
        }
    }
    Ok(cfg)
}

fn parse_partition(spec: &str, feature_names: &[String], drop: bool) -> Result<PartitionRule> {
    let (column, bins) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config("--partition: expected `column:bin;bin;...`".into()))?;
    let bins = bins.split(';').map(Bin::parse).collect::<Result<Vec<_>>>()?;
    let mut rule = PartitionRule::by_name(feature_names, column.trim(), bins)?;
    rule.drop_column = drop;
    Ok(rule)
}

/// Task column used when `--task-col` is absent and the header has it.
const DEFAULT_TASK_COLUMN: &str = "task";

fn has_column(path: &str, name: &str) -> Result<bool> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.headers()?.iter().any(|h| h.trim() == name))
}

/// Resolved data-related settings.
struct Prepared {
    data: TaskDataset,
    seed: u64,
    universum: Option<UniversumConfig>,
    normalize: bool,
}

fn load_data(c: &CommonArgs, s: &Settings) -> Result<Prepared> {
    let spec = s
        .text(&c.data, "data")
        .ok_or_else(|| Error::Config("--data is required".into()))?;
    let data = if spec == "synth" || spec.starts_with("synth:") {
        synth_multitask(&parse_synth(&spec)?)?
    } else {
        let label_map = match s.text(&c.label_map, "label-map") {
            Some(m) => LabelMap::parse(&m)?,
            None => LabelMap::new(),
        };
        let opts = CsvOptions {
            label_column: s.text(&c.label_col, "label-col").unwrap_or_else(|| "label".into()),
            task_column: match s.text(&c.task_col, "task-col") {
                Some(col) => Some(col),
                None => has_column(&spec, DEFAULT_TASK_COLUMN)?.then(|| DEFAULT_TASK_COLUMN.into()),
            },
            label_map,
        };
        match s.text(&c.partition, "partition") {
            Some(p) => {
                let rows = load_rows(&spec, &opts)?;
                let drop = s.flag(c.drop_partition_col, "drop-partition-col")?;
                let rule = parse_partition(&p, &rows.feature_names, drop)?;
                partition_tasks(&rows, &rule)?.dataset
            }
            None => load_csv(&spec, &opts)?,
        }
    };
    let seed = resolve_seed(c.seed, s)?;
    let universum = match s.text(&c.universum, "universum").as_deref() {
        None | Some("on") => {
            let cfg = UniversumConfig {
                fraction: s.value(c.universum_fraction, "universum-fraction")?.unwrap_or(0.5),
                seed,
                ..Default::default()
            };
            cfg.validate()?;
            Some(cfg)
        }
        Some("off") => None,
        Some(other) => return Err(Error::Config(format!("--universum: expected on or off, got `{other}`"))),
    };
    Ok(Prepared {
        data,
        seed,
        universum,
        normalize: !s.flag(c.no_normalize, "no-normalize")?,
    })
}

fn parse_method(raw: Option<String>) -> Result<Method> {
    raw.ok_or_else(|| Error::Config("--method is required".into()))?.parse()
}

fn parse_methods(raw: Option<String>) -> Result<Vec<Method>> {
    match raw.as_deref() {
        None | Some("all") => Ok(Method::ALL.to_vec()),
        Some(list) => list.split(',').map(|m| m.trim().parse()).collect(),
    }
}

/// Parses `key=v1,v2 key ...` into a grid around `base`.
pub fn parse_grid(entries: &[String], base: &Hyperparams, mirror: bool) -> Result<GridSpec> {
    let mut grid = GridSpec { mirror, ..GridSpec::singleton(base) };
    for entry in entries.iter().flat_map(|e| e.split_whitespace()) {
        let (key, values) = match entry.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v)),
            None => (entry.trim(), None),
        };
        let key = key.replace('_', "-");
        let defaults = if matches!(key.as_str(), "eps" | "epsilon") {
            epsilon_range()
        } else {
            power_range()
        };
        let list = match values {
            None | Some("default") => defaults,
            Some(v) => v.split(',').map(parse_number).collect::<Result<Vec<_>>>()?,
        };
        let slot = match key.as_str() {
            "c1" => &mut grid.c1,
            "c2" => &mut grid.c2,
            "cu" => &mut grid.c_u,
            "cu-star" => &mut grid.c_u_star,
            "mu1" => &mut grid.mu1,
            "mu2" => &mut grid.mu2,
            "eps" | "epsilon" => &mut grid.epsilon,
            "gamma" => &mut grid.gamma,
            other => return Err(Error::Config(format!("--grid: unknown parameter `{other}`"))),
        };
        *slot = list;
    }
    Ok(grid)
}

fn cv_config(p: &Prepared, k: usize) -> CvConfig {
    CvConfig {
        k,
        seed: p.seed,
        universum: match p.universum {
            Some(u) => UniversumSource::Generate(u),
            None => UniversumSource::Off,
        },
        normalize: p.normalize,
    }
}

fn write_to(path: Option<&Path>, out: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn print_fit_summary(model: &TrainedModel, ds: &TaskDataset, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "method {}  tasks {}  labeled {}  universum {}",
        model.method,
        ds.n_tasks(),
        ds.n_labeled(),
        ds.n_universum()
    )?;
    if let Some(sol) = &model.solution {
        writeln!(out, "{:<8} {:>14} {:>14} {:>10} {:>10}", "problem", "dual obj", "primal obj", "iters", "converged")?;
        for (name, s) in [("first", &sol.first), ("second", &sol.second)] {
            writeln!(
                out,
                "{:<8} {:>14.6e} {:>14.6e} {:>10} {:>10}",
                name, s.dual_objective, s.primal_objective, s.iterations, s.converged
            )?;
        }
    }
    writeln!(out, "{:<8} {:>12} {:>12} {:>12} {:>12}", "task", "|u0+u_t|", "|v0+v_t|", "|u_t|", "|v_t|")?;
    for (i, &t) in model.task_ids.iter().enumerate() {
        let (u, v) = model.task_planes(t)?;
        writeln!(
            out,
            "{:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            t,
            u.norm(),
            v.norm(),
            model.u_t[i].norm(),
            model.v_t[i].norm()
        )?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let method = parse_method(s.text(&a.method, "method"))?;
    let hp = resolve_hyperparams(&a.hp, &s)?;
    let path = s
        .text(&a.out.as_ref().map(|p| p.display().to_string()), "out")
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let p = load_data(&a.common, &s)?;
    let (data, scaling) = if p.normalize {
        let (d, sc) = normalize(&p.data)?;
        (d, Some(sc))
    } else {
        (p.data.clone(), None)
    };
    let data = match (&p.universum, method.uses_universum()) {
        (Some(u), true) => generate_universum(&data, u)?,
        _ => data,
    };
    let mut model = fit(method, &data, &hp)?;
    if let Some(sc) = scaling {
        model = model.with_scaling(sc);
    }
    print_fit_summary(&model, &data, out)?;
    save_model(&model, &path)?;
    writeln!(out, "model written to {path}")?;
    Ok(())
}

fn cmd_cv(a: CvArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let methods = match s.text(&a.method, "method") {
        None => return Err(Error::Config("--method is required".into())),
        Some(m) => parse_methods(Some(m))?,
    };
    let hp = resolve_hyperparams(&a.hp, &s)?;
    let k = s.value(a.k, "k")?.unwrap_or(5);
    let p = load_data(&a.common, &s)?;
    let cfg = cv_config(&p, k);
    let reports = methods
        .into_iter()
        .map(|m| cross_validate(m, &p.data, &hp, &cfg))
        .collect::<Result<Vec<_>>>()?;
    write!(out, "{}", format_reports(&reports))?;
    if let Some(path) = a.csv {
        write_reports_csv(&reports, fs::File::create(path)?)?;
    }
    Ok(())
}

fn print_hyperparams(hp: &Hyperparams, out: &mut dyn Write) -> Result<()> {
    write!(
        out,
        "c1={} c2={} cu={} cu-star={} mu1={} mu2={} eps={}",
        hp.c1, hp.c2, hp.c_u, hp.c_u_star, hp.mu1, hp.mu2, hp.epsilon
    )?;
    if let KernelSpec::Gaussian { gamma } = hp.kernel {
        write!(out, " gamma={gamma}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_gridsearch(a: GridArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let method = parse_method(s.text(&a.method, "method"))?;
    let base = resolve_hyperparams(&a.hp, &s)?;
    let k = s.value(a.k, "k")?.unwrap_or(5);
    let mut entries = a.grid.clone();
    if entries.is_empty() {
        entries.extend(s.text(&None, "grid"));
    }
    let grid = parse_grid(&entries, &base, s.flag(a.mirror, "mirror")?)?;
    let p = load_data(&a.common, &s)?;
    let res = grid_search(method, &p.data, &grid, &base, &cv_config(&p, k))?;
    writeln!(out, "configurations {}", res.table.len())?;
    write!(out, "best ")?;
    print_hyperparams(&res.best, out)?;
    write!(out, "{}", format_reports(std::slice::from_ref(&res.best_report)))?;
    if let Some(path) = a.out {
        write_grid_csv(&res.table, fs::File::create(&path)?)?;
        writeln!(out, "table written to {}", path.display())?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let methods = parse_methods(s.text(&a.methods, "methods"))?;
    let base = resolve_hyperparams(&a.hp, &s)?;
    let k = s.value(a.k, "k")?.unwrap_or(5);
    let p = load_data(&a.common, &s)?;
    let cfg = cv_config(&p, k);
    let mut entries = a.grid.clone();
    if entries.is_empty() {
        entries.extend(s.text(&None, "grid"));
    }
    let mut reports: Vec<CvReport> = Vec::new();
    let mut chosen = Vec::new();
    for m in methods {
        if entries.is_empty() {
            reports.push(cross_validate(m, &p.data, &base, &cfg)?);
            chosen.push(base.clone());
        } else {
            let grid = parse_grid(&entries, &base, s.flag(a.mirror, "mirror")?)?;
            let res = grid_search(m, &p.data, &grid, &base, &cfg)?;
            reports.push(res.best_report);
            chosen.push(res.best);
        }
    }
    write!(out, "{}", format_reports(&reports))?;
    if !entries.is_empty() {
        for (r, hp) in reports.iter().zip(&chosen) {
            write!(out, "{:<12} ", r.method.label())?;
            print_hyperparams(hp, out)?;
        }
    }
    if let Some(path) = a.csv {
        write_reports_csv(&reports, fs::File::create(path)?)?;
    }
    Ok(())
}

/// The only task of a single-task model, which lets prediction files omit
/// the task column.
fn single_task(model: &TrainedModel) -> Option<u32> {
    match model.task_ids.as_slice() {
        [t] => Some(*t),
        _ => None,
    }
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let text = fs::read_to_string(&a.data)?;
    if text.trim().is_empty() {
        return Ok(());
    }
    let label_map = match &a.label_map {
        Some(m) => LabelMap::parse(m)?,
        None => LabelMap::new(),
    };
    let rows = load_feature_rows(
        &a.data,
        &model.feature_names,
        &a.task_col,
        single_task(&model),
        &a.label_col,
        &label_map,
    )?;
    if let Some(&t) = rows.task_ids.iter().find(|t| !model.task_ids.contains(t)) {
        return Err(Error::UnknownTask(t));
    }
    let predictions = model.predict_rows(&rows.features, &rows.task_ids)?;
    write_to(a.out.as_deref(), out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["row", "task", "prediction"])?;
        for (i, (t, p)) in rows.task_ids.iter().zip(&predictions).enumerate() {
            csv.write_record([(i + 1).to_string(), t.to_string(), p.as_i8().to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if let Some(truth) = &rows.labels {
        let hits = truth.iter().zip(&predictions).filter(|(a, b)| a == b).count();
        if !truth.is_empty() {
            eprintln!("accuracy {:.2}% ({hits}/{})", 100.0 * hits as f64 / truth.len() as f64, truth.len());
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let ds = synth_multitask(&SynthConfig {
        tasks: a.tasks,
        per_class: a.per_class,
        dimension: a.dim,
        task_shift: a.shift,
        noise: a.noise,
        seed: a.seed,
    })?;
    write_csv(&ds, &a.out)?;
    writeln!(out, "wrote {} rows over {} tasks to {}", ds.n_labeled(), ds.n_tasks(), a.out.display())?;
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Cv(a) => cmd_cv(a, out),
        Command::Gridsearch(a) => cmd_gridsearch(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        2
    } else {
        1
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Cv(_) => "cv",
        Command::Gridsearch(_) => "gridsearch",
        Command::Bench(_) => "bench",
        Command::Predict(_) => "predict",
        Command::Synth(_) => "synth",
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                    eprintln!("For more information, try 'umtsvm {name} --help'.");
                }
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_entries() {
        let base = Hyperparams::default();
        let g = parse_grid(&["c1=1,2 mu1=1".into()], &base, false).unwrap();
        assert_eq!(g.configurations(&base).unwrap().len(), 2);
        let g = parse_grid(&["c1".into(), "eps".into()], &base, false).unwrap();
        assert_eq!(g.c1.len(), 21);
        assert_eq!(g.epsilon.len(), 9);
        assert_eq!(g.c1[0], 2f64.powi(-10));
        let g = parse_grid(&["c2=2^-3,2^3".into()], &base, false).unwrap();
        assert_eq!(g.c2, vec![0.125, 8.0]);
        assert!(parse_grid(&["nu=1".into()], &base, false).is_err());
        assert!(parse_grid(&["c1=x".into()], &base, false).is_err());
    }

    #[test]
    fn synth_spec() {
        let c = parse_synth("synth:tasks=2,per_class=9,dim=4,seed=3").unwrap();
        assert_eq!((c.tasks, c.per_class, c.dimension, c.seed), (2, 9, 4, 3));
        assert_eq!(parse_synth("synth").unwrap(), SynthConfig::default());
        assert!(parse_synth("synth:bogus=1").is_err());
    }

    #[test]
    fn settings_file_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# experiment\nc1 = 4\nmu1 = 2\ncu_star = 0.25\neps = 0.4 # inline\nkernel = gaussian\ngamma = 0.5\n").unwrap();
        let s = Settings::load(Some(&path)).unwrap();
        let hp = resolve_hyperparams(&HpArgs { c1: Some(8.0), ..Default::default() }, &s).unwrap();
        assert_eq!(hp.c1, 8.0);
        assert_eq!((hp.mu1, hp.c_u_star, hp.epsilon), (2.0, 0.25, 0.4));
        assert_eq!(hp.kernel, KernelSpec::Gaussian { gamma: 0.5 });
        fs::write(&path, "c1 4\n").unwrap();
        assert!(Settings::load(Some(&path)).is_err());
    }
}
