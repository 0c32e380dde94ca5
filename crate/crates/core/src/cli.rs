//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE` (TOML, keys named like the long
//! flags); flags given on the command line win over the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{
    compare_inits, depth_sweep, emit_results, fit_powerlaw, format_float, make_target, run_once,
    toy_trajectory, CompareConfig, Format, LrPolicy, RunRecord, SweepConfig, Tabular, TargetArg, TargetSpec,
    COMPARE_DIM, DEFAULT_BUDGET, DEFAULT_EPS, VERSION,
};
use crate::flow::{integrate_flow, FlowConfig, FlowTarget, DEFAULT_STEP};
use crate::invariants::{loss_budget, theoretical_lr, InvariantMonitor, MonitorLevel};
use crate::linnet::{init_network, train, InitScheme, LinearNet, StepRecord, TrainConfig, TrainMonitor, TrainStatus};
use crate::matrix::Matrix;
use crate::resnet::{
    halving_grid, load_csv_dataset, resnet_init, resnet_train, synth_dataset, tune_resnet_lr, ResInit, ResNetDims,
    ResStatus, ResTrainConfig,
};
use crate::rng::RngState;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "zasgd", version, about = "Deep linear and residual networks under zero-asymmetric initialization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one deep linear network by gradient descent.
    Train(TrainArgs),
    /// Iterations-to-ε across depths, with a fitted power law.
    SweepDepth(SweepArgs),
    /// ZAS against near-identity runs at a fixed step size.
    CompareInit(CompareArgs),
    /// Integrate the continuous-time gradient flow with RK4.
    Flow(FlowArgs),
    /// Gradient descent on the two-parameter toy landscape.
    Toy(ToyArgs),
    /// Train the nonlinear residual network on blob or CSV data.
    Resnet(ResnetArgs),
    /// Run the invariant monitors over a training run.
    Check(CheckArgs),
}

/// Shared output flags.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct OutArgs {
    /// TOML file with default values for any long flag.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
}

/// Flags shared by the linear-network commands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct NetArgs {
    #[arg(short = 'L', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<usize>,
    #[arg(short = 'd', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// gaussian, neg-identity, scalar-toy or custom:PATH.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    /// zas, near-zas:SIGMA, near-identity[:SIGMA], xavier or identity.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    /// auto, theoretical or a number.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    net: NetArgs,
    /// off, light or full.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    monitor: Option<String>,
    /// Also write the trained network as JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    save_net: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SweepArgs {
    /// Comma-separated, strictly increasing.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depths: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    net: NetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct CompareArgs {
    /// Comma-separated seeds for the near-identity runs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<String>,
    /// Near-identity perturbation scale (default `1/√(dL)`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    net: NetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FlowArgs {
    #[arg(short = 'L', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<usize>,
    #[arg(short = 'd', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    /// RK4 step `h`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    /// End time `T`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    /// Sample every N steps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cadence: Option<usize>,
    /// Dataset CSV for the un-whitened objective (inputs and targets of width `d`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ToyArgs {
    /// Comma-separated starting point, e.g. `1,0`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ResnetArgs {
    /// Number of residual blocks.
    #[arg(short = 'L', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<usize>,
    /// Input dimension.
    #[arg(short = 'd', long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// Skip width `D`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    /// Block width `m`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    separation: Option<f64>,
    /// Dataset CSV (`x0..,y0..` header); replaces the synthetic blobs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    /// mzas or xavier.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    /// auto or a number.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    /// Mini-batch size (default: full batch).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    net: NetArgs,
    /// light or full.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    monitor: Option<String>,
    /// Start from a network saved by `train --save-net`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    net_file: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Fills every flag left unset on the command line from the config file.
fn merge_config<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return serde_json::from_value(serde_json::to_value(args)?).map_err(|e| usage(e.to_string()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    let mut merged = serde_json::to_value(table).map_err(|e| usage(e.to_string()))?;
    normalize_config(&mut merged);
    let cli = serde_json::to_value(args)?;
    if let (Value::Object(base), Value::Object(over)) = (&mut merged, cli) {
        base.extend(over);
    }
    serde_json::from_value(merged).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Lets the config file write `lr = 0.1` and `depths = [8, 16]` for flags
/// that are strings on the command line.
fn normalize_config(value: &mut Value) {
    let Value::Object(map) = value else { return };
    for (key, v) in map.iter_mut() {
        match (key.as_str(), &*v) {
            ("lr", Value::Number(n)) => *v = Value::String(n.to_string()),
            ("depths" | "seeds" | "start", Value::Array(items)) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                *v = Value::String(parts.join(","));
            }
            _ => {}
        }
    }
}

fn parse<T: FromStr<Err = Error>>(value: Option<&str>, default: &str) -> Result<T> {
    value.unwrap_or(default).parse()
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| usage(format!("bad {what} `{p}` in `{s}`"))))
        .collect()
}

fn format_of(out: &OutArgs) -> Result<Format> {
    parse(out.format.as_deref(), "csv")
}

fn out_path(out: &OutArgs, stem: &str, format: Format) -> PathBuf {
    out.out.clone().unwrap_or_else(|| PathBuf::from(format!("{stem}.{format}")))
}

/// `dir/stem.csv` → `dir/stem.<suffix>.<ext>`.
fn companion(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn with_version(mut config: Value) -> Value {
    if let Value::Object(m) = &mut config {
        m.insert("version".into(), Value::String(VERSION.into()));
    }
    config
}

struct Resolved {
    depth: usize,
    dim: usize,
    target_arg: TargetArg,
    target: TargetSpec,
    phi: Matrix,
    init: InitScheme,
    lr: LrPolicy,
    eps: f64,
    max_iters: u64,
    seed: u64,
}

impl Resolved {
    fn new(net: &NetArgs, seed: Option<u64>, defaults: (usize, usize, &str, &str, &str, u64)) -> Result<Self> {
        let (depth, dim, target, init, lr, max_iters) = defaults;
        let seed = seed.unwrap_or(0);
        let target_arg: TargetArg = parse(net.target.as_deref(), target)?;
        let target = target_arg.resolve(seed)?;
        let dim = match (&target, net.dim) {
            (TargetSpec::ScalarToy { .. }, _) => 1,
            (TargetSpec::Custom { matrix }, _) => matrix.rows(),
            (_, d) => d.unwrap_or(dim),
        };
        let phi = make_target(&target, dim)?;
        let eps = net.eps.unwrap_or(DEFAULT_EPS);
        if !(eps > 0.0) {
            return Err(usage(format!("--eps must be > 0, got {eps}")));
        }
        let depth = net.depth.unwrap_or(depth);
        if depth == 0 {
            return Err(usage("--depth must be >= 1"));
        }
        Ok(Resolved {
            depth,
            dim,
            target_arg,
            target,
            phi,
            init: parse(net.init.as_deref(), init)?,
            lr: parse(net.lr.as_deref(), lr)?,
            eps,
            max_iters: net.max_iters.unwrap_or(max_iters),
            seed,
        })
    }

    fn echo(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("depth".into(), json!(self.depth));
        m.insert("dim".into(), json!(self.dim));
        m.insert("target".into(), json!(self.target_arg.to_string()));
        m.insert("init".into(), json!(self.init.to_string()));
        m.insert("lr".into(), json!(self.lr.to_string()));
        m.insert("eps".into(), json!(self.eps));
        m.insert("max-iters".into(), json!(self.max_iters));
        m.insert("seed".into(), json!(self.seed));
        m
    }
}

/// Outcome of a subcommand: exit code plus a one-line summary.
struct Outcome {
    code: i32,
    summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { code: EXIT_OK, summary }
    }

    fn failed(summary: String) -> Self {
        Outcome { code: EXIT_RUN_FAILURE, summary }
    }
}

impl Tabular for StepRecord {
    fn header(records: &[Self]) -> Vec<String> {
        let layers = records.first().map_or(0, |r| r.grad_norms.len());
        let mut h = vec!["iter".to_string(), "loss".to_string()];
        h.extend((1..=layers).map(|l| format!("grad_norm_{l}")));
        h
    }

    fn row(&self) -> Vec<String> {
        let mut r = vec![self.iter.to_string(), format_float(self.loss)];
        r.extend(self.grad_norms.iter().map(|&g| format_float(g)));
        r
    }
}

fn cmd_train(args: &TrainArgs) -> Result<Outcome> {
    let a: TrainArgs = merge_config(args, args.out.config.as_deref())?;
    let r = Resolved::new(&a.net, a.out.seed, (8, 1, "neg-identity", "zas", "auto", DEFAULT_BUDGET))?;
    let level = parse_monitor(a.monitor.as_deref().unwrap_or("off"))?;
    let format = format_of(&a.out)?;

    let (record, traj, monitor) = match level {
        None => {
            let (record, traj) = run_once(r.depth, r.dim, &r.phi, r.init, r.seed, r.lr, r.eps, r.max_iters, 1)?;
            (record, traj, None)
        }
        Some(level) => {
            let eta = match r.lr {
                LrPolicy::Auto => {
                    crate::experiments::tune_lr(r.dim, r.depth, &r.phi, r.init, r.seed, r.eps, r.max_iters)?.eta
                }
                LrPolicy::Theoretical => theoretical_lr(&r.phi, r.depth).eta,
                LrPolicy::Fixed(v) => v,
            };
            let mut mon = InvariantMonitor::new(level);
            let net = init_network(r.dim, r.depth, r.init, &mut RngState::new(r.seed))?;
            let traj = train(net, &r.phi, &TrainConfig::new(eta, r.eps, r.max_iters), Some(&mut mon as &mut dyn TrainMonitor))?;
            (record_from(&r, eta, &traj), traj, Some(mon.summary))
        }
    };

    let path = out_path(&a.out, "train", format);
    let mut config = r.echo();
    config.insert("command".into(), json!("train"));
    config.insert("monitor".into(), json!(a.monitor.clone().unwrap_or_else(|| "off".into())));
    config.insert("eta".into(), json!(record.eta));
    let config = Value::Object(config);
    emit_results(&traj.records, &config, &path, format)?;
    let summary_path = companion(&path, "summary", "json");
    write_json(
        &summary_path,
        &json!({ "config": with_version(config), "records": [record], "monitor": monitor }),
    )?;
    if let Some(p) = &a.save_net {
        std::fs::write(p, serde_json::to_string(&traj.net)?).map_err(|e| Error::io(p, e))?;
    }
    let line = format!(
        "L={} d={} eta={:.6e} status={} iterations={} final_loss={:.3e}",
        record.depth, record.dim, record.eta, record.status, record.iterations, record.final_loss
    );
    Ok(match traj.status {
        TrainStatus::Diverged => Outcome::failed(line),
        _ => Outcome::ok(line),
    })
}

fn record_from(r: &Resolved, eta: f64, traj: &crate::linnet::Trajectory) -> RunRecord {
    RunRecord {
        depth: r.depth,
        dim: r.dim,
        init: r.init.to_string(),
        seed: r.seed,
        lr_mode: match r.lr {
            LrPolicy::Fixed(_) => "fixed".into(),
            other => other.to_string(),
        },
        eta,
        iterations: traj.iterations,
        final_loss: traj.final_loss,
        status: traj.status.into(),
        longest_plateau: traj.plateau.longest,
        plateaued: traj.plateau.plateaued,
        wall_time: 0.0,
    }
}

fn parse_monitor(s: &str) -> Result<Option<MonitorLevel>> {
    match s {
        "off" => Ok(None),
        "light" => Ok(Some(MonitorLevel::Light)),
        "full" => Ok(Some(MonitorLevel::Full)),
        _ => Err(usage(format!("--monitor must be off, light or full, got `{s}`"))),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<Outcome> {
    let a: SweepArgs = merge_config(args, args.out.config.as_deref())?;
    let r = Resolved::new(&a.net, a.out.seed, (8, 16, "neg-identity", "zas", "auto", DEFAULT_BUDGET))?;
    let depths: Vec<usize> = parse_list(a.depths.as_deref().unwrap_or("8,16,32,64"), "depth")?;
    let format = format_of(&a.out)?;
    let config = SweepConfig {
        depths: depths.clone(),
        dim: r.dim,
        target: r.target.clone(),
        init: r.init,
        eps: r.eps,
        lr: r.lr,
        budget: r.max_iters,
        seed: r.seed,
    };
    let records = depth_sweep(&config)?;
    let mut echo = r.echo();
    echo.remove("depth");
    echo.insert("command".into(), json!("sweep-depth"));
    echo.insert("depths".into(), json!(depths));
    emit_results(&records, &Value::Object(echo), &out_path(&a.out, "sweep", format), format)?;

    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.converged() && r.iterations > 0)
        .map(|r| (r.depth as f64, r.iterations as f64))
        .collect();
    let fit = fit_powerlaw(&pairs).map(|f| format!(" gamma={:.3}", f.gamma)).unwrap_or_default();
    let converged = records.iter().filter(|r| r.converged()).count();
    let line = format!("{converged}/{} runs converged{fit}", records.len());
    Ok(if converged == records.len() { Outcome::ok(line) } else { Outcome::failed(line) })
}

fn cmd_compare(args: &CompareArgs) -> Result<Outcome> {
    let a: CompareArgs = merge_config(args, args.out.config.as_deref())?;
    let r = Resolved::new(&a.net, a.out.seed, (6, COMPARE_DIM, "neg-identity", "zas", "0.01", 100_000))?;
    let eta = match r.lr {
        LrPolicy::Fixed(v) => v,
        LrPolicy::Theoretical => theoretical_lr(&r.phi, r.depth).eta,
        LrPolicy::Auto => 0.01,
    };
    let seeds: Vec<u64> = parse_list(a.seeds.as_deref().unwrap_or("0,1,2,3,4"), "seed")?;
    let format = format_of(&a.out)?;
    let config = CompareConfig {
        depth: r.depth,
        dim: r.dim,
        target: r.target.clone(),
        eta,
        seeds: seeds.clone(),
        budget: r.max_iters,
        eps: r.eps,
        sigma: a.sigma,
    };
    let result = compare_inits(&config)?;
    let mut echo = r.echo();
    echo.remove("init");
    echo.insert("command".into(), json!("compare-init"));
    echo.insert("eta".into(), json!(eta));
    echo.insert("seeds".into(), json!(seeds));
    echo.insert("sigma".into(), json!(a.sigma));
    let echo = Value::Object(echo);
    let path = out_path(&a.out, "compare", format);
    emit_results(&result.records, &echo, &path, format)?;
    emit_results(&result.curve_points(), &echo, &companion(&path, "curves", &format.to_string()), format)?;
    let zas = &result.records[0];
    let stuck = result.records[1..]
        .iter()
        .enumerate()
        .filter(|(i, _)| result.loss_at(i + 1, zas.iterations) > 1e-2)
        .count();
    Ok(Outcome::ok(format!(
        "zas: {} in {} iterations; near-identity runs above 1e-2 at that point: {stuck}/{}",
        zas.status,
        zas.iterations,
        seeds.len()
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowRow {
    t: f64,
    loss: f64,
    bound: f64,
    drift: f64,
}

impl Tabular for FlowRow {
    fn header(_: &[Self]) -> Vec<String> {
        ["t", "loss", "bound", "drift"].map(String::from).to_vec()
    }

    fn row(&self) -> Vec<String> {
        [self.t, self.loss, self.bound, self.drift].map(format_float).to_vec()
    }
}

fn cmd_flow(args: &FlowArgs) -> Result<Outcome> {
    let a: FlowArgs = merge_config(args, args.out.config.as_deref())?;
    let net_args = NetArgs {
        depth: a.depth,
        dim: a.dim,
        target: a.target.clone(),
        init: a.init.clone(),
        ..Default::default()
    };
    let r = Resolved::new(&net_args, a.out.seed, (4, 2, "gaussian", "zas", "auto", 0))?;
    let step = a.step.unwrap_or(DEFAULT_STEP);
    let horizon = a.horizon.unwrap_or(5.0);
    let cadence = a.cadence.unwrap_or(1);
    let format = format_of(&a.out)?;
    let net = init_network(r.dim, r.depth, r.init, &mut RngState::new(r.seed))?;
    let target = match &a.data {
        Some(p) => {
            let data = load_csv_dataset(p, r.dim, r.dim, false)?;
            FlowTarget::Data { x: data.x, y: data.y }
        }
        None => FlowTarget::Whitened(r.phi.clone()),
    };
    let traj = integrate_flow(&net, &target, &FlowConfig::new(step, horizon).cadence(cadence))?;
    let rows: Vec<FlowRow> = (0..traj.times.len())
        .map(|i| FlowRow {
            t: traj.times[i],
            loss: traj.losses[i],
            bound: traj.bounds[i],
            drift: traj.drifts[i],
        })
        .collect();
    let mut echo = r.echo();
    for k in ["lr", "eps", "max-iters"] {
        echo.remove(k);
    }
    echo.insert("command".into(), json!("flow"));
    echo.insert("step".into(), json!(step));
    echo.insert("horizon".into(), json!(horizon));
    echo.insert("cadence".into(), json!(cadence));
    echo.insert("data".into(), json!(a.data));
    echo.insert("rate".into(), json!(traj.rate));
    emit_results(&rows, &Value::Object(echo), &out_path(&a.out, "flow", format), format)?;
    Ok(Outcome::ok(format!(
        "R(T)/R(0)={:.6e} bound ratio={:.6} max invariant drift={:.3e}",
        traj.final_loss() / traj.initial_loss(),
        traj.worst_bound_ratio(),
        traj.max_drift()
    )))
}

fn cmd_toy(args: &ToyArgs) -> Result<Outcome> {
    let a: ToyArgs = merge_config(args, args.out.config.as_deref())?;
    let start: Vec<f64> = parse_list(a.start.as_deref().unwrap_or("1,0"), "coordinate")?;
    let eta = a.lr.unwrap_or(0.1);
    let iters = a.max_iters.unwrap_or(1000);
    let eps = a.eps.unwrap_or(DEFAULT_EPS);
    let format = format_of(&a.out)?;
    let path = toy_trajectory(&start, eta, iters)?;
    let echo = json!({
        "command": "toy",
        "start": start,
        "lr": eta,
        "max-iters": iters,
        "eps": eps,
        "seed": a.out.seed.unwrap_or(0),
    });
    emit_results(&path.points, &echo, &out_path(&a.out, "toy", format), format)?;
    let hit = path.first_below(eps).map_or("never".to_string(), |t| t.to_string());
    let line = format!("loss <= {eps:e} at iteration {hit}; stalled iterations {}", path.stall_iters);
    Ok(if path.diverged { Outcome::failed(line) } else { Outcome::ok(line) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
}

impl Tabular for EpochRow {
    fn header(_: &[Self]) -> Vec<String> {
        vec!["epoch".into(), "loss".into()]
    }

    fn row(&self) -> Vec<String> {
        vec![self.epoch.to_string(), format_float(self.loss)]
    }
}

/// Step sizes tried by `resnet --lr auto`.
pub const RESNET_LR_GRID: (f64, usize) = (1.0, 12);
/// Epochs per tuning probe.
pub const RESNET_PROBE_EPOCHS: usize = 20;

fn cmd_resnet(args: &ResnetArgs) -> Result<Outcome> {
    let a: ResnetArgs = merge_config(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(0);
    let dim = a.dim.unwrap_or(16);
    let classes = a.classes.unwrap_or(4);
    let mut rng = RngState::new(seed);
    let data = match &a.data {
        Some(p) => load_csv_dataset(p, dim, classes, false)?,
        None => synth_dataset(a.samples.unwrap_or(500), dim, classes, a.separation.unwrap_or(3.0), &mut rng)?,
    };
    let dims = ResNetDims {
        input: dim,
        output: classes,
        width: a.width.unwrap_or(32),
        hidden: a.hidden.unwrap_or(32),
        blocks: a.depth.unwrap_or(100),
    };
    let init: ResInit = parse(a.init.as_deref(), "mzas")?;
    let net = resnet_init(dims, init, &mut rng)?;
    let lr_arg = a.lr.clone().unwrap_or_else(|| "auto".into());
    let eta = match lr_arg.as_str() {
        "auto" => tune_resnet_lr(&net, &data, &halving_grid(RESNET_LR_GRID.0, RESNET_LR_GRID.1), RESNET_PROBE_EPOCHS)?,
        s => match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            _ => return Err(usage(format!("--lr must be auto or a non-negative number, got `{s}`"))),
        },
    };
    let epochs = a.epochs.unwrap_or(200);
    let config = ResTrainConfig { eta, epochs, batch_size: a.batch_size, seed };
    let traj = resnet_train(net, &data, &config)?;
    let (out, _) = traj.net.forward_batch(&data.x)?;
    let accuracy = data.accuracy(&out);
    let format = format_of(&a.out)?;
    let rows: Vec<EpochRow> = traj.losses.iter().enumerate().map(|(epoch, &loss)| EpochRow { epoch, loss }).collect();
    let echo = json!({
        "command": "resnet",
        "depth": dims.blocks,
        "dim": dims.input,
        "width": dims.width,
        "hidden": dims.hidden,
        "classes": classes,
        "samples": data.n(),
        "separation": a.separation.unwrap_or(3.0),
        "data": a.data,
        "init": init.to_string(),
        "lr": lr_arg,
        "eta": eta,
        "epochs": epochs,
        "batch-size": a.batch_size,
        "seed": seed,
        "status": traj.status.to_string(),
    });
    emit_results(&rows, &echo, &out_path(&a.out, "resnet", format), format)?;
    let line = format!(
        "{init} L={} eta={eta:.3e} status={} loss {:.4e} -> {:.4e}, train accuracy {:.3}",
        dims.blocks,
        traj.status,
        traj.losses[0],
        traj.final_loss(),
        accuracy
    );
    Ok(if traj.status == ResStatus::Diverged { Outcome::failed(line) } else { Outcome::ok(line) })
}

fn cmd_check(args: &CheckArgs) -> Result<Outcome> {
    let a: CheckArgs = merge_config(args, args.out.config.as_deref())?;
    let mut net_args = a.net.clone();
    let loaded: Option<LinearNet> = match &a.net_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let net: LinearNet = serde_json::from_str(&text)?;
            net_args.depth = Some(net.depth());
            net_args.dim = Some(net.dim());
            Some(net)
        }
        None => None,
    };
    let r = Resolved::new(&net_args, a.out.seed, (8, 2, "neg-identity", "zas", "theoretical", 10_000))?;
    let level = parse_monitor(a.monitor.as_deref().unwrap_or("full"))?.unwrap_or(MonitorLevel::Full);
    // `auto` means the theoretical step here: the checks are conditions of
    // the convergence guarantee, which assumes it.
    let (eta, lr_mode) = match r.lr {
        LrPolicy::Fixed(v) => (v, "fixed"),
        LrPolicy::Theoretical | LrPolicy::Auto => (theoretical_lr(&r.phi, r.depth).eta, "theoretical"),
    };
    let net = match loaded {
        Some(n) => n,
        None => init_network(r.dim, r.depth, r.init, &mut RngState::new(r.seed))?,
    };
    let mut mon = InvariantMonitor::new(level);
    let traj = train(net, &r.phi, &TrainConfig::new(eta, r.eps, r.max_iters), Some(&mut mon as &mut dyn TrainMonitor))?;
    let budget = loss_budget(&traj, eta);
    let format = format_of(&a.out)?;
    let mut echo = r.echo();
    echo.insert("command".into(), json!("check"));
    echo.insert("monitor".into(), json!(format!("{level:?}").to_lowercase()));
    echo.insert("lr-mode".into(), json!(lr_mode));
    echo.insert("eta".into(), json!(eta));
    echo.insert("net-file".into(), json!(a.net_file));
    let echo = Value::Object(echo);
    let path = out_path(&a.out, "check", format);
    emit_results(&traj.records, &echo, &path, format)?;
    write_json(
        &companion(&path, "report", "json"),
        &json!({
            "config": with_version(echo),
            "status": traj.status,
            "iterations": traj.iterations,
            "final_loss": traj.final_loss,
            "loss_budget": { "sum": budget.lhs, "bound": budget.rhs, "holds": budget.holds() },
            "monitor": mon.summary,
        }),
    )?;
    let clean = mon.summary.clean() && budget.holds();
    let line = format!(
        "eta={eta:.3e} status={} iterations={} checks={} violations={}{}",
        traj.status,
        traj.iterations,
        mon.summary.checks.values().sum::<u64>(),
        mon.summary.violations.values().sum::<u64>(),
        mon.summary.first_violation.as_ref().map(|v| format!(" first: {v}")).unwrap_or_default()
    );
    Ok(if clean { Outcome::ok(line) } else { Outcome::failed(line) })
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::SweepDepth(a) => cmd_sweep(a),
        Command::CompareInit(a) => cmd_compare(a),
        Command::Flow(a) => cmd_flow(a),
        Command::Toy(a) => cmd_toy(a),
        Command::Resnet(a) => cmd_resnet(a),
        Command::Check(a) => cmd_check(a),
    }
}

/// Exit code an error maps to.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Empty { .. } | Error::ShapeMismatch { .. } => EXIT_USAGE,
        _ => EXIT_RUN_FAILURE,
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(o) => {
            println!("{}", o.summary);
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
