//! `agentplan` subcommands. Data goes to the output stream, diagnostics to the
//! error stream. Exit code 0 on success, 1 on domain errors, 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use agentplan_core::dsl::{print_graph, run_passes, PASS_NAMES};
use agentplan_core::graph::validate_graph;
use agentplan_core::hw::{marginal_costs, rank_by, CostBasis, HardwareCatalog, MarginalMetric};
use agentplan_core::opt::{random_problem, solve_discrete, solve_fractional, DiscreteOptions, SolveMode};
use agentplan_core::perf::{
    decode_time_ms, kv_cache_bytes, max_batch, peak_egress_gbps, prefill_time_ms, Efficiency, ModelCatalog,
    ParallelismConfig, WorkloadShape,
};
use agentplan_core::planner::{plan_graph, sweep_pairs, PairLabel, PlanOptions, SweepOptions, TcoRow};
use agentplan_core::sim::{compare_to_analytic, simulate_plan, Arrivals, SimOptions};
use agentplan_core::{SlaMode, SlaScope, SlaSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::Config;
use crate::io::{cell, load_catalog, load_graph, load_models, load_plan, load_problem, to_csv, to_json, IoError};

const DEFAULT_PASSES: [&str; 4] = ["unroll", "flatten", "split_llm", "split_tool"];
const DEFAULT_BASELINE: &str = "H100::H100";

#[derive(Debug, Parser)]
#[command(name = "agentplan", version, about = "Plan agent workloads onto heterogeneous accelerators")]
pub struct Cli {
    /// TOML file with defaults; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Hardware catalog JSON (default: $AGENTPLAN_CATALOG, else builtin).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// JSON array of model specs (default: builtin).
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a graph; prints "ok" when it is well formed.
    Validate { graph: PathBuf },
    /// Parse a graph, run lowering passes, print the result.
    Lower {
        graph: PathBuf,
        /// Comma-separated pass names.
        #[arg(long)]
        passes: Option<String>,
    },
    /// Marginal cost per unit of bandwidth, compute and capacity.
    AnalyzeHw {
        #[arg(long, value_enum, default_value = "capex")]
        basis: Basis,
    },
    /// Roofline prefill/decode estimate for one model on one class.
    Estimate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        class: String,
        #[arg(long)]
        isl: u64,
        #[arg(long, default_value_t = 1)]
        osl: u64,
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long, default_value_t = 1)]
        tp: u32,
        #[arg(long, default_value_t = 1)]
        pp: u32,
        /// Overrides the default model FLOP utilization for both stages.
        #[arg(long)]
        mfu: Option<f64>,
    },
    /// Assign the tasks of a graph to device classes.
    Plan {
        graph: PathBuf,
        #[command(flatten)]
        sla: SlaArgs,
        #[arg(long, default_value_t = 1)]
        batch: u64,
    },
    /// Solve an assignment problem given as JSON, or a seeded random one.
    Solve {
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        problem: Option<PathBuf>,
        /// Seed of a generated instance.
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 6)]
        max_tasks: usize,
        #[arg(long, default_value_t = 3)]
        max_classes: usize,
        /// Print the problem instead of solving it.
        #[arg(long)]
        emit_problem: bool,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        sla_scope: Option<Scope>,
    },
    /// Rank prefill::decode class pairs by cost per token against a baseline.
    TcoSweep {
        #[arg(long)]
        model: String,
        #[arg(long)]
        isl: u64,
        #[arg(long)]
        osl: u64,
        #[command(flatten)]
        sla: SlaArgs,
        /// PREFILL::DECODE label (default H100::H100).
        #[arg(long)]
        baseline: Option<String>,
        /// Comma-separated PREFILL::DECODE labels; default is every pair.
        #[arg(long)]
        pairs: Option<String>,
    },
    /// Discrete-event simulation of a plan.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        /// interval:<ms>, poisson:<per second> or burst:<count>.
        #[arg(long, default_value = "burst:1")]
        arrivals: String,
        /// Horizon in ms.
        #[arg(long, default_value_t = 60_000.0)]
        duration: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Include the event trace in the report.
        #[arg(long)]
        trace: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Basis {
    Capex,
    Opex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fractional,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    #[value(name = "per_task")]
    PerTask,
    #[value(name = "end_to_end")]
    EndToEnd,
}

impl From<Scope> for SlaScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::PerTask => SlaScope::PerTask,
            Scope::EndToEnd => SlaScope::EndToEnd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SlaKind {
    Throughput,
    Latency,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SlaArgs {
    /// Default: latency when a bound is given, else throughput.
    #[arg(long, value_enum)]
    pub sla: Option<SlaKind>,
    #[arg(long)]
    pub ttft_ms: Option<f64>,
    #[arg(long)]
    pub tbt_ms: Option<f64>,
    #[arg(long)]
    pub e2e_ms: Option<f64>,
    /// Slack penalty in $/ms; without it latency bounds are hard.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub sla_scope: Option<Scope>,
    /// Aggregate throughput floor, requests/s.
    #[arg(long)]
    pub min_throughput: Option<f64>,
}

impl SlaArgs {
    pub fn to_spec(&self) -> Result<SlaSpec, Failure> {
        let bounded = self.ttft_ms.is_some() || self.tbt_ms.is_some() || self.e2e_ms.is_some();
        let kind = self.sla.unwrap_or(if bounded { SlaKind::Latency } else { SlaKind::Throughput });
        if kind == SlaKind::Latency && !bounded {
            return Err(Failure::Usage("--sla latency needs --ttft-ms, --tbt-ms or --e2e-ms".into()));
        }
        let spec = SlaSpec {
            mode: match kind {
                SlaKind::Throughput => SlaMode::Throughput,
                SlaKind::Latency => SlaMode::Latency,
            },
            ttft_ms: self.ttft_ms,
            tbt_ms: self.tbt_ms,
            e2e_ms: self.e2e_ms,
            min_throughput: self.min_throughput,
            lambda_per_ms: self.lambda,
            scope: self.sla_scope.map(Into::into).unwrap_or_default(),
        };
        spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_missing() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Domain(e.to_string())
        }
    }
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

/// What a command wants written: data for the output stream and notes for the error stream.
#[derive(Debug, Default)]
struct Output {
    data: String,
    notes: String,
    code: u8,
}

impl Output {
    fn data(data: String) -> Self {
        Output { data, ..Default::default() }
    }
}

struct Ctx {
    config: Config,
    catalog: Option<PathBuf>,
    env_catalog: Option<PathBuf>,
    models: Option<PathBuf>,
    format: Option<Format>,
}

impl Ctx {
    fn catalog(&self) -> Result<HardwareCatalog, Failure> {
        let explicit = self.catalog.as_deref().or(self.config.catalog.as_deref());
        Ok(load_catalog(explicit, self.env_catalog.as_deref())?)
    }

    fn models(&self) -> Result<ModelCatalog, Failure> {
        Ok(load_models(self.models.as_deref().or(self.config.models.as_deref()))?)
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = match (self.format, self.config.format.as_deref()) {
            (Some(f), _) => f,
            (None, Some(s)) => Format::from_str(s, true).map_err(|_| Failure::Usage(format!("config: unknown format {s}")))?,
            (None, None) => default,
        };
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::Usage(format!("--format {} is not supported here", f.to_possible_value().unwrap().get_name())))
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, env_catalog: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli, env_catalog) {
        Ok(o) => {
            let _ = out.write_all(o.data.as_bytes());
            let _ = err.write_all(o.notes.as_bytes());
            o.code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn execute(cli: Cli, env_catalog: Option<PathBuf>) -> Result<Output, Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| match e {
            crate::config::ConfigError::Io(io) if io.is_missing() => Failure::Usage(io.to_string()),
            other => Failure::Usage(other.to_string()),
        })?,
        None => Config::default(),
    };
    let ctx = Ctx {
        config,
        catalog: cli.catalog,
        env_catalog,
        models: cli.models,
        format: cli.format,
    };
    match cli.command {
        Command::Validate { graph } => validate(&graph),
        Command::Lower { graph, passes } => lower(&ctx, &graph, passes.as_deref()),
        Command::AnalyzeHw { basis } => analyze_hw(&ctx, basis),
        Command::Estimate { model, class, isl, osl, batch, tp, pp, mfu } => {
            estimate(&ctx, &model, &class, WorkloadShape::new(isl, osl, batch), ParallelismConfig::new(tp, pp), mfu)
        }
        Command::Plan { graph, sla, batch } => plan(&ctx, &graph, &sla, batch),
        Command::Solve { problem, random, max_tasks, max_classes, emit_problem, mode, lambda, sla_scope } => {
            let mut p = match (problem, random) {
                (Some(path), _) => load_problem(&path)?,
                (None, Some(seed)) => random_problem(seed, max_tasks, max_classes),
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(m) = mode {
                p.mode = match m {
                    Mode::Fractional => SolveMode::Fractional,
                    Mode::Discrete => SolveMode::Discrete,
                };
            }
            if let Some(l) = lambda {
                p.sla.lambda_per_ms = Some(l);
            }
            if let Some(s) = sla_scope {
                p.sla.scope = s.into();
            }
            solve(&ctx, p, emit_problem)
        }
        Command::TcoSweep { model, isl, osl, sla, baseline, pairs } => {
            tco_sweep(&ctx, &model, WorkloadShape::new(isl, osl, 1), &sla, baseline, pairs.as_deref())
        }
        Command::Simulate { plan, arrivals, duration, seed, trace } => simulate(&ctx, &plan, &arrivals, duration, seed, trace),
    }
}

fn validate(path: &Path) -> Result<Output, Failure> {
    let g = load_graph(path)?;
    let diags = validate_graph(&g);
    if diags.is_empty() {
        return Ok(Output::data("ok\n".into()));
    }
    let mut notes = String::new();
    for d in &diags {
        let _ = writeln!(notes, "{}: {d}", path.display());
    }
    Ok(Output {
        data: String::new(),
        notes,
        code: 1,
    })
}

fn lower(ctx: &Ctx, path: &Path, passes: Option<&str>) -> Result<Output, Failure> {
    let names: Vec<String> = match (passes, &ctx.config.passes) {
        (Some(s), _) => s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect(),
        (None, Some(list)) => list.clone(),
        (None, None) => DEFAULT_PASSES.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = names.iter().find(|n| !PASS_NAMES.contains(&n.as_str())) {
        return Err(Failure::Usage(format!("unknown pass {bad}; expected one of {}", PASS_NAMES.join(", "))));
    }
    let format = ctx.format(Format::Text, &[Format::Text, Format::Json])?;
    let g = load_graph(path)?;
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let (lowered, reports) = run_passes(&g, &refs, &ctx.models()?).map_err(domain)?;
    let mut notes = String::new();
    for r in &reports {
        let _ = writeln!(
            notes,
            "{}: +{} -{} nodes, +{} -{} edges",
            r.pass, r.nodes_added, r.nodes_removed, r.edges_added, r.edges_removed
        );
    }
    let data = match format {
        Format::Json => to_json(&lowered),
        _ => print_graph(&lowered),
    };
    Ok(Output { data, notes, code: 0 })
}

#[derive(Serialize)]
struct HwReport {
    basis: &'static str,
    rows: Vec<agentplan_core::hw::MarginalCostRow>,
    /// Class names from cheapest to most expensive per unit.
    rankings: Rankings,
}

#[derive(Serialize)]
struct Rankings {
    bandwidth: Vec<String>,
    tflop_fp16: Vec<String>,
    tflop_fp8: Vec<String>,
    capacity: Vec<String>,
}

fn analyze_hw(ctx: &Ctx, basis: Basis) -> Result<Output, Failure> {
    let format = ctx.format(Format::Json, &[Format::Json, Format::Csv, Format::Text])?;
    let catalog = ctx.catalog()?;
    let (b, name) = match basis {
        Basis::Capex => (CostBasis::Capex, "capex"),
        Basis::Opex => (CostBasis::Opex, "opex"),
    };
    let rows = marginal_costs(&catalog, b).map_err(domain)?;
    let header = ["class", "usd_per_gbps_bw", "usd_per_tflop_fp16", "usd_per_tflop_fp8", "usd_per_gb"];
    let data = match format {
        Format::Json => to_json(&HwReport {
            basis: name,
            rankings: Rankings {
                bandwidth: rank_by(&rows, MarginalMetric::Bandwidth),
                tflop_fp16: rank_by(&rows, MarginalMetric::TflopFp16),
                tflop_fp8: rank_by(&rows, MarginalMetric::TflopFp8),
                capacity: rank_by(&rows, MarginalMetric::Capacity),
            },
            rows,
        }),
        Format::Csv => to_csv(
            &header,
            rows.iter().map(|r| {
                [
                    r.class.clone(),
                    r.usd_per_gbps_bw.to_string(),
                    r.usd_per_tflop_fp16.to_string(),
                    cell(r.usd_per_tflop_fp8),
                    r.usd_per_gb.to_string(),
                ]
            }),
        ),
        Format::Text => {
            let mut s = format!("{:<10} {:>16} {:>18} {:>17} {:>12}\n", header[0], header[1], header[2], header[3], header[4]);
            for r in &rows {
                let fp8 = r.usd_per_tflop_fp8.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    s,
                    "{:<10} {:>16.2} {:>18.2} {:>17} {:>12.2}",
                    r.class, r.usd_per_gbps_bw, r.usd_per_tflop_fp16, fp8, r.usd_per_gb
                );
            }
            s
        }
    };
    Ok(Output::data(data))
}

#[derive(Serialize)]
struct EstimateReport {
    model: String,
    class: String,
    shape: WorkloadShape,
    parallelism: ParallelismConfig,
    kv_cache_bytes: u64,
    max_batch: u64,
    prefill: agentplan_core::PerfEstimate,
    decode: agentplan_core::PerfEstimate,
    /// KV bytes over ttft across the prefill devices.
    peak_egress_gbps: f64,
}

fn estimate(
    ctx: &Ctx,
    model: &str,
    class: &str,
    shape: WorkloadShape,
    par: ParallelismConfig,
    mfu: Option<f64>,
) -> Result<Output, Failure> {
    ctx.format(Format::Json, &[Format::Json])?;
    let models = ctx.models()?;
    let m = models.require(model).map_err(domain)?;
    let catalog = ctx.catalog()?;
    let c = catalog.require(class).map_err(domain)?;
    let (pe, de) = match mfu {
        Some(x) => (Efficiency { mfu: x, ..Efficiency::PREFILL }, Efficiency { mfu: x, ..Efficiency::DECODE }),
        None => (Efficiency::PREFILL, Efficiency::DECODE),
    };
    let prefill = prefill_time_ms(m, &shape, c, &par, &pe).map_err(domain)?;
    let decode = decode_time_ms(m, &shape, c, &par, &de).map_err(domain)?;
    let kv = kv_cache_bytes(m, shape.isl_tokens, shape.batch_size);
    let egress = peak_egress_gbps(kv, prefill.ttft_ms, par.devices()).map_err(domain)?;
    Ok(Output::data(to_json(&EstimateReport {
        model: m.name.clone(),
        class: c.name.clone(),
        shape,
        parallelism: par,
        kv_cache_bytes: kv,
        max_batch: max_batch(m, &shape, c, &par),
        prefill,
        decode,
        peak_egress_gbps: egress,
    })))
}

fn plan(ctx: &Ctx, path: &Path, sla: &SlaArgs, batch: u64) -> Result<Output, Failure> {
    let format = ctx.format(Format::Json, &[Format::Json, Format::Text])?;
    let sla = sla.to_spec()?;
    let g = load_graph(path)?;
    let opts = PlanOptions { batch, ..Default::default() };
    let p = plan_graph(&g, &ctx.catalog()?, &ctx.models()?, &sla, &opts).map_err(domain)?;
    let data = match format {
        Format::Json => to_json(&p),
        _ => {
            let mut s = String::new();
            for t in &p.tasks {
                let _ = writeln!(s, "{:<24} {:<10} {:>10.3} ms  ${:.6}", t.id, t.class, t.service_ms, t.cost_usd);
            }
            let _ = writeln!(s, "e2e {} ms, cost ${}, penalty ${}", p.e2e_ms, p.cost_usd, p.penalty_usd);
            if let Some(l) = &p.label {
                let _ = writeln!(s, "label {l}");
            }
            s
        }
    };
    Ok(Output::data(data))
}

#[derive(Serialize)]
struct SolveReport<'a> {
    /// Task id → class, discrete mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    choice: Option<std::collections::BTreeMap<&'a str, &'a str>>,
    assignment: agentplan_core::opt::Assignment,
}

fn solve(ctx: &Ctx, p: agentplan_core::opt::AssignmentProblem, emit_problem: bool) -> Result<Output, Failure> {
    ctx.format(Format::Json, &[Format::Json])?;
    if emit_problem {
        return Ok(Output::data(to_json(&p)));
    }
    let a = match p.mode {
        SolveMode::Fractional => solve_fractional(&p),
        SolveMode::Discrete => solve_discrete(&p, &DiscreteOptions::default()),
    }
    .map_err(domain)?;
    let choice = a
        .choice
        .as_ref()
        .map(|c| p.tasks.iter().zip(c).map(|(t, &j)| (t.as_str(), p.classes[j].as_str())).collect());
    Ok(Output::data(to_json(&SolveReport { choice, assignment: a })))
}

const TCO_HEADER: [&str; 19] = [
    "label",
    "prefill_class",
    "decode_class",
    "model",
    "isl",
    "osl",
    "sla_mode",
    "feasible",
    "binding",
    "prefill_replicas",
    "decode_replicas",
    "ttft_ms",
    "tbt_ms",
    "second_token_ms",
    "tokens_per_sec",
    "cost_per_hr",
    "cost_per_1m_tokens",
    "tokens_per_sec_per_dollar",
    "tco_ratio_vs_baseline",
];

fn tco_record(r: &TcoRow) -> Vec<String> {
    vec![
        r.label.clone(),
        r.prefill_class.clone(),
        r.decode_class.clone(),
        r.model.clone(),
        r.isl.to_string(),
        r.osl.to_string(),
        match r.sla_mode {
            SlaMode::Latency => "latency".into(),
            SlaMode::Throughput => "throughput".into(),
        },
        r.feasible.to_string(),
        r.binding.clone().unwrap_or_default(),
        cell(r.prefill.as_ref().map(|s| s.parallelism.replicas)),
        cell(r.decode.as_ref().map(|s| s.parallelism.replicas)),
        r.ttft_ms.to_string(),
        r.tbt_ms.to_string(),
        r.second_token_ms.to_string(),
        r.tokens_per_sec.to_string(),
        r.cost_per_hr.to_string(),
        r.cost_per_1m_tokens.to_string(),
        r.tokens_per_sec_per_dollar.to_string(),
        r.tco_ratio_vs_baseline.to_string(),
    ]
}

fn tco_sweep(
    ctx: &Ctx,
    model: &str,
    shape: WorkloadShape,
    sla: &SlaArgs,
    baseline: Option<String>,
    pairs: Option<&str>,
) -> Result<Output, Failure> {
    let format = ctx.format(Format::Json, &[Format::Json, Format::Csv, Format::Text])?;
    let sla = sla.to_spec()?;
    let usage = |e: agentplan_core::planner::PlanError| Failure::Usage(e.to_string());
    let base_text = baseline.or_else(|| ctx.config.baseline.clone()).unwrap_or_else(|| DEFAULT_BASELINE.into());
    let base = PairLabel::parse(&base_text).map_err(usage)?;
    let pairs = pairs
        .map(|s| s.split(',').map(|p| PairLabel::parse(p.trim())).collect::<Result<Vec<_>, _>>())
        .transpose()
        .map_err(usage)?;
    let models = ctx.models()?;
    let m = models.require(model).map_err(domain)?;
    let opts = SweepOptions { pairs, ..Default::default() };
    let rows = sweep_pairs(m, &shape, &ctx.catalog()?, &sla, &base, &opts).map_err(domain)?;
    let data = match format {
        Format::Json => to_json(&rows),
        Format::Csv => to_csv(&TCO_HEADER, rows.iter().map(tco_record)),
        Format::Text => {
            let mut s = String::new();
            for r in &rows {
                if r.feasible {
                    let _ = writeln!(s, "{:<18} {:>7.3}x  ${:.4}/1M tokens", r.label, r.tco_ratio_vs_baseline, r.cost_per_1m_tokens);
                } else {
                    let _ = writeln!(s, "{:<18} infeasible: {}", r.label, r.binding.as_deref().unwrap_or(""));
                }
            }
            s
        }
    };
    Ok(Output::data(data))
}

fn simulate(ctx: &Ctx, plan_path: &Path, arrivals: &str, duration: f64, seed: Option<u64>, trace: bool) -> Result<Output, Failure> {
    let format = ctx.format(Format::Json, &[Format::Json, Format::Text])?;
    let arrivals: Arrivals = arrivals.parse().map_err(|e: agentplan_core::sim::SimError| Failure::Usage(e.to_string()))?;
    let p = load_plan(plan_path)?;
    let mut opts = SimOptions::new(arrivals, duration, seed.or(ctx.config.seed).unwrap_or(0));
    opts.trace = trace;
    let report = simulate_plan(&p, &opts).map_err(|e| match e {
        agentplan_core::sim::SimError::ZeroDuration => Failure::Usage(e.to_string()),
        other => domain(other),
    })?;
    let cmp = compare_to_analytic(&report, &p);
    let mut notes = String::new();
    for d in cmp.deviations.iter().filter(|d| d.flagged) {
        let _ = writeln!(
            notes,
            "note: simulated {} {:.3} deviates {:.2}% from analytic {:.3}",
            d.metric,
            d.simulated,
            d.relative * 100.0,
            d.analytic
        );
    }
    let data = match format {
        Format::Json => to_json(&report),
        _ => {
            let mut s = format!(
                "{} admitted, {} completed, {} in flight\nthroughput {:.3} req/s, {:.3} tokens/s\n",
                report.admitted,
                report.completed,
                report.in_flight,
                report.throughput_requests_per_sec,
                report.throughput_tokens_per_sec
            );
            for d in &cmp.deviations {
                let _ = writeln!(s, "{:<8} sim {:.3} analytic {:.3} ({:.3}%)", d.metric, d.simulated, d.analytic, d.relative * 100.0);
            }
            for d in &report.devices {
                let _ = writeln!(s, "{:<24} {:<10} util {:.3} wait {:.3} ms", d.task, d.class, d.utilization, d.mean_wait_ms);
            }
            s
        }
    };
    Ok(Output { data, notes, code: 0 })
}
