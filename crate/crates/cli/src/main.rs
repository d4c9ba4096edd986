use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Map, Value};

use fbq::baselines::{fcfs_l, las_l, priority_two_class_l};
use fbq::ctmc::{ctmc_solve_multi, ctmc_solve_single, operative_servers, Truncation};
use fbq::experiments::{optimize_intermediate_speeds, optimize_threshold, reproduce_figure, FigureOptions};
use fbq::multi::{self, d_roots, QSequence};
use fbq::sim::{simulate, SimConfig, SimModel, ThreePhaseModel};
use fbq::single::{self, flow_balance_residual, solve_general, solve_k1_closed_form};
use fbq::{CostCoefficients, MultiServerModel, SingleServerModel};

/// Bad input: exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "fbq", version, about = "Foreground/background queues with speed and capacity modulation")]
struct Cli {
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and batches of simulations
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state of the speed-modulated single server
    SolveSingle(ModelFlags),
    /// Steady state of the m-server pool with switch-off threshold
    SolveMulti(ModelFlags),
    /// Mean number of jobs under FCFS, LAS, FB-ph2 and two-class priority
    ComparePolicies(ModelFlags),
    /// Search the intermediate speeds of a K=2 or K=3 profile
    OptimizeSpeeds {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        cost: CostFlags,
        /// Include every coarse grid point in the output
        #[arg(long)]
        curve: bool,
    },
    /// Cost of every switch-off threshold of a server pool
    OptimizeThreshold {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        cost: CostFlags,
    },
    /// Discrete-event estimate of the mean number of jobs
    Simulate {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, default_value_t = 1_000_000)]
        jobs: u64,
        /// Defaults to a tenth of --jobs
        #[arg(long)]
        warmup_jobs: Option<u64>,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = SimConfig::DEFAULT_SEED)]
        seed: u64,
    },
    /// CSV data (x,series,value) behind one of figures 3 to 8
    ReproduceFigure {
        id: u32,
        /// Metadata sidecar path; defaults to the --out path with a .json extension
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        sim_jobs: u64,
        #[arg(long, default_value_t = SimConfig::DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the invariant checks on a model and print a pass/fail report
    Validate(ModelFlags),
}

/// Model fields, named as in the JSON schema. Inline flags override fields
/// read from --model.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// JSON model file
    #[arg(long = "model")]
    model_file: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    nu1: Option<f64>,
    #[arg(long)]
    nu2: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated speed levels s_0,...,s_K
    #[arg(long, value_delimiter = ',')]
    speeds: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    mu3: Option<f64>,
    #[arg(long)]
    q1: Option<f64>,
    #[arg(long)]
    q2: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    /// Print the parsed model as JSON and exit
    #[arg(long)]
    dump_model: bool,
}

#[derive(Args, Debug)]
struct CostFlags {
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long)]
    c2: f64,
}

impl CostFlags {
    fn costs(&self) -> anyhow::Result<CostCoefficients> {
        Ok(CostCoefficients::new(self.c1, self.c2)?)
    }
}

enum AnyModel {
    Single(SingleServerModel),
    Multi(MultiServerModel),
    ThreePhase(ThreePhaseModel),
}

impl ModelFlags {
    fn fields(&self) -> anyhow::Result<Map<String, Value>> {
        let mut map = match &self.model_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read model file {}: {e}", path.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(usage(format!("{} does not hold a JSON object", path.display()))),
                    Err(e) => return Err(usage(format!("{}: {e}", path.display()))),
                }
            }
            None => Map::new(),
        };
        let mut set = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("lambda", self.lambda.map(Value::from));
        set("nu1", self.nu1.map(Value::from));
        set("nu2", self.nu2.map(Value::from));
        set("q", self.q.map(Value::from));
        set("speeds", self.speeds.clone().map(Value::from));
        set("alpha", self.alpha.map(Value::from));
        set("mu1", self.mu1.map(Value::from));
        set("mu2", self.mu2.map(Value::from));
        set("mu3", self.mu3.map(Value::from));
        set("q1", self.q1.map(Value::from));
        set("q2", self.q2.map(Value::from));
        set("m", self.m.map(Value::from));
        set("threshold", self.threshold.map(Value::from));
        Ok(map)
    }

    fn parse<T: serde::de::DeserializeOwned>(&self, what: &str) -> anyhow::Result<T> {
        serde_json::from_value(Value::Object(self.fields()?)).map_err(|e| usage(format!("{what} model: {e}")))
    }

    fn single(&self) -> anyhow::Result<SingleServerModel> {
        self.parse("single-server")
    }

    fn multi(&self) -> anyhow::Result<MultiServerModel> {
        self.parse("multiserver")
    }

    /// Three-phase if mu3, q1 or q2 is given, a server pool if m is given,
    /// otherwise a single server.
    fn any(&self) -> anyhow::Result<AnyModel> {
        let f = self.fields()?;
        Ok(if ["mu3", "q1", "q2"].iter().any(|k| f.contains_key(*k)) {
            AnyModel::ThreePhase(self.parse("three-phase")?)
        } else if f.contains_key("m") {
            AnyModel::Multi(self.multi()?)
        } else {
            AnyModel::Single(self.single()?)
        })
    }
}

fn three_phase_checked(m: ThreePhaseModel) -> anyhow::Result<ThreePhaseModel> {
    ThreePhaseModel::new(m.lambda, m.mu1, m.mu2, m.mu3, m.q1, m.q2).map_err(Into::into)
}

/// Rounds to 12 significant digits.
fn sig12(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map(sig12).map(Value::from).unwrap_or(Value::Number(n)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn sink(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let v = round_json(serde_json::to_value(value)?);
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, &v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Prints the model and returns true when --dump-model was given.
fn dump(flags: &ModelFlags, out: Option<&Path>, model: &impl Serialize) -> anyhow::Result<bool> {
    if flags.dump_model {
        emit_json(out, model)?;
    }
    Ok(flags.dump_model)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(cli.parallel).build_global()?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::SolveSingle(flags) => {
            let model = flags.single()?;
            if dump(&flags, out, &model)? {
                return Ok(());
            }
            let sol = single::solve(&model)?;
            info!("solved K={} single-server model, L={}", model.k(), sol.l);
            emit_json(out, &sol)
        }
        Command::SolveMulti(flags) => {
            let model = flags.multi()?;
            if dump(&flags, out, &model)? {
                return Ok(());
            }
            let sol = multi::solve(&model)?;
            info!("solved m={} K={} pool, L={}", model.m, model.threshold, sol.l);
            emit_json(out, &sol)
        }
        Command::ComparePolicies(mut flags) => {
            if flags.speeds.is_none() && flags.model_file.is_none() {
                flags.speeds = Some(vec![0.0, 1.0]);
            }
            let model = flags.single()?;
            if dump(&flags, out, &model)? {
                return Ok(());
            }
            if model.k() != 1 {
                warn!("compare-policies runs every policy at full speed; the speed profile is ignored");
            }
            let fb = solve_k1_closed_form(&model.with_speeds(vec![0.0, 1.0])?)?;
            let l = model.lambda;
            emit_json(
                out,
                &json!({
                    "lambda": l,
                    "FCFS": fcfs_l(l, &model.service)?,
                    "LAS": las_l(l, &model.service)?,
                    "FB-ph2": fb.l,
                    "priority": priority_two_class_l(l, &model.service)?,
                }),
            )
        }
        Command::OptimizeSpeeds { model: flags, cost, curve } => {
            let model = flags.single()?;
            if dump(&flags, out, &model)? {
                return Ok(());
            }
            let mut opt = optimize_intermediate_speeds(&model, &cost.costs()?)?;
            if !curve {
                opt.curve.clear();
            }
            emit_json(out, &opt)
        }
        Command::OptimizeThreshold { model: flags, cost } => {
            let model = flags.multi()?;
            if dump(&flags, out, &model)? {
                return Ok(());
            }
            emit_json(out, &optimize_threshold(&model, &cost.costs()?)?)
        }
        Command::Simulate { model: flags, jobs, warmup_jobs, batches, seed } => {
            let model = match flags.any()? {
                AnyModel::Single(m) => {
                    if dump(&flags, out, &m)? {
                        return Ok(());
                    }
                    SimModel::Single(m)
                }
                AnyModel::Multi(m) => {
                    if dump(&flags, out, &m)? {
                        return Ok(());
                    }
                    SimModel::Multi(m)
                }
                AnyModel::ThreePhase(m) => {
                    let m = three_phase_checked(m)?;
                    if dump(&flags, out, &m)? {
                        return Ok(());
                    }
                    SimModel::ThreePhase(m)
                }
            };
            let mut config = SimConfig::new(model, jobs).with_seed(seed);
            config.batches = batches;
            if let Some(w) = warmup_jobs {
                config.warmup_jobs = w;
            }
            emit_json(out, &simulate(&config)?)
        }
        Command::ReproduceFigure { id, metadata, sim_jobs, seed } => {
            let fig = reproduce_figure(id, FigureOptions { seed, sim_jobs })?;
            let mut w = csv::Writer::from_writer(sink(out)?);
            w.write_record(["x", "series", "value"])?;
            for (x, series, v) in fig.rows() {
                w.write_record([sig12(x).to_string(), series.to_string(), sig12(v).to_string()])?;
            }
            w.flush()?;
            let side = metadata.or_else(|| out.map(|p| p.with_extension("json")));
            if let Some(p) = side {
                emit_json(Some(&p), &json!({"figure": id, "csv_header": ["x", "series", "value"], "parameters": fig.metadata}))?;
            }
            Ok(())
        }
        Command::Validate(flags) => {
            let model = flags.any()?;
            let report = match &model {
                AnyModel::Single(m) => {
                    if dump(&flags, out, m)? {
                        return Ok(());
                    }
                    validate_single(m)
                }
                AnyModel::Multi(m) => {
                    if dump(&flags, out, m)? {
                        return Ok(());
                    }
                    validate_multi(m)
                }
                AnyModel::ThreePhase(_) => return Err(usage("validate supports single-server and multiserver models")),
            };
            let mut w = sink(out)?;
            for c in &report {
                writeln!(w, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            w.flush()?;
            match report.iter().find(|c| !c.pass) {
                None => Ok(()),
                Some(c) if c.name == "stability" => Err(usage(format!("model is unstable: {}", c.detail))),
                Some(c) => Err(anyhow!("check {} failed", c.name)),
            }
        }
    }
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, value: f64, tol: f64, what: &str) -> Check {
    Check { name, pass: value.abs() <= tol, detail: format!("{what} = {:.3e} (tolerance {tol:.0e})", value) }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    Check { name, pass: false, detail: e.to_string() }
}

fn validate_single(model: &SingleServerModel) -> Vec<Check> {
    let mut out = vec![Check {
        name: "stability",
        pass: model.is_stable(),
        detail: format!("load {} must be below 1", sig12(model.load())),
    }];
    if !model.is_stable() {
        return out;
    }
    let sol = match single::solve(model) {
        Ok(s) => s,
        Err(e) => {
            out.push(failed("solve", e));
            return out;
        }
    };
    let total: f64 = sol.p_below_k.iter().sum::<f64>() + sol.tail_mass;
    out.push(check("normalization", total - 1.0, 1e-10, "sum p - 1"));
    out.push(check("flow balance", flow_balance_residual(model, &sol.boundary), 1e-9, "residual"));
    if model.k() == 1 {
        match (solve_k1_closed_form(model), solve_general(model)) {
            (Ok(a), Ok(b)) => {
                let worst = [rel(a.l, b.l), rel(a.l1, b.l1), rel(a.l2, b.l2)].into_iter().fold(0.0, f64::max);
                out.push(check("closed form vs general", worst, 1e-10, "max relative gap"));
            }
            (Err(e), _) | (_, Err(e)) => out.push(failed("closed form vs general", e)),
        }
    }
    match ctmc_solve_single(model, Truncation::default()) {
        Ok(c) => out.push(check("chain oracle", rel(sol.l, c.l), 1e-5, "relative gap in L")),
        Err(e) => out.push(failed("chain oracle", e)),
    }
    out
}

fn validate_multi(model: &MultiServerModel) -> Vec<Check> {
    let load = model.rho1() + model.rho2();
    let mut out = vec![Check {
        name: "stability",
        pass: model.is_stable(),
        detail: format!("rho1 + rho2 = {} must be below m = {}", sig12(load), model.m),
    }];
    if !model.is_stable() {
        return out;
    }
    let seq = QSequence::new(model);
    match (d_roots(model), seq.d_scale()) {
        (Ok(roots), Ok(scale)) => {
            let distinct = roots.windows(2).all(|w| w[0] < w[1]);
            let inside = roots.iter().all(|&z| z > 0.0 && z < 1.0);
            let worst = roots.iter().map(|&z| seq.d(z).map(f64::abs).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
            out.push(Check {
                name: "root count",
                pass: roots.len() == model.m - 1 && distinct && inside && worst < 1e-9 * scale,
                detail: format!("{} distinct roots in (0,1), want {}; max |D| / scale = {:.3e}", roots.len(), model.m - 1, worst / scale),
            });
        }
        (Err(e), _) | (_, Err(e)) => out.push(failed("root count", e)),
    }
    let sol = match multi::solve(model) {
        Ok(s) => s,
        Err(e) => {
            out.push(failed("solve", e));
            return out;
        }
    };
    out.push(check("normalization", sol.normalization_residual(), 1e-10, "sum p - 1"));
    out.push(check("idle servers", sol.idle_server_residual(model), 1e-9, "residual"));
    match ctmc_solve_multi(model, Truncation::default()) {
        Ok(c) => {
            let worst = rel(sol.l, c.l).max(rel(sol.u, operative_servers(model, &c)));
            out.push(check("chain oracle", worst, 1e-5, "relative gap in L and U"));
        }
        Err(e) => out.push(failed("chain oracle", e)),
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some() || c.downcast_ref::<fbq::Error>().is_some_and(|e| e.is_validation())
    });
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FBQ_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(sig12(2.0 / 3.0 * 1e-7), 6.66666666667e-8);
        assert_eq!(sig12(0.0), 0.0);
        assert_eq!(round_json(json!({"a": [1.0 / 3.0], "k": 3})), json!({"a": [0.333333333333], "k": 3}));
    }

    #[test]
    fn model_kind_follows_fields() {
        let flags = ModelFlags { lambda: Some(1.0), mu1: Some(1.0), mu2: Some(1.0), q: Some(0.2), m: Some(2), ..Default::default() };
        assert!(matches!(flags.any().unwrap(), AnyModel::Multi(_)));
        let flags = ModelFlags { mu3: Some(1.0), ..flags };
        assert!(flags.any().is_err());
    }
}
