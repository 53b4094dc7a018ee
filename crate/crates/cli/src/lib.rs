//! Command-line front end: planning, verification sweeps, graph exports and
//! heatmaps. Every number printed is an exact rational string unless its
//! key says `estimate`.

pub mod config;
pub mod heatmap;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fatgraph_core::construction::{locate, weight_word};
use fatgraph_core::doubling::{sampled_doubling_estimate, verify_lemma, DoublingReport};
use fatgraph_core::graph::{bounds, chosen_rects, mu_s, sample_graph, BoundsLedger};
use fatgraph_core::measure::{mu_cell, SweepOptions, DEFAULT_EXHAUSTIVE_LIMIT};
use fatgraph_core::schedule::{plan_schedule, validate, RawParams, Stage};
use fatgraph_core::{Cell, Error, Rat};
use serde::Serialize;
use serde_json::{json, Value};

pub use config::RunConfig;
pub use heatmap::{render, HeatmapSpec, Image};

pub const LIMIT_ENV: &str = "FATGRAPH_EXHAUSTIVE_LIMIT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    ResolutionMismatch(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::ResolutionMismatch(_) => "resolution_mismatch",
            CliError::Core(e) => match e {
                Error::SweepTooLarge { .. } => "sweep_too_large",
                Error::CapTooCoarse { .. } => "cap_too_coarse",
                Error::DepthExceeded { .. } => "depth_exceeded",
                Error::RejectP(_) => "reject_p",
                Error::RejectParity { .. } => "reject_parity",
                Error::RejectHeight { .. } => "reject_height",
                Error::RejectEps(_) => "reject_eps",
                _ => "invalid_input",
            },
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Core(Error::SweepTooLarge { .. } | Error::CapTooCoarse { .. }) => {
                EXIT_RESOURCE
            }
            _ => EXIT_USAGE,
        }
    }

    fn hint(&self) -> Option<String> {
        match self {
            CliError::Core(Error::SweepTooLarge { .. }) => Some(format!(
                "lower --depth, or raise the cap with --exhaustive-limit or {LIMIT_ENV}"
            )),
            _ => None,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fatgraph", version, about = "Exact doubling measure concentrated on a graph")]
struct Cli {
    /// Worker threads for sweeps (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// Base weight p in (0,1), as n/d.
    #[arg(long)]
    p: Option<String>,
    /// Stage list m1,n1[,m2,n2...].
    #[arg(long)]
    stages: Option<String>,
    /// JSON file {"p": "n/d", "stages": [{"m": .., "n": ..}]}.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cap on cells visited by exhaustive sweeps.
    #[arg(long)]
    exhaustive_limit: Option<u128>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit a schedule meeting a target epsilon.
    Plan {
        #[arg(long)]
        epsilon: String,
        /// Number of stages.
        #[arg(long, default_value_t = 1)]
        stages: usize,
    },
    /// Exhaustively check the doubling hypotheses at a depth.
    Verify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 6)]
        depth: u32,
        /// Random square pairs: TRIALS SEED.
        #[arg(long, num_args = 2, value_names = ["TRIALS", "SEED"])]
        sample: Option<Vec<u64>>,
    },
    /// Mass of the graph approximation and the bound ledger.
    GraphMass {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// CSV of chosen rectangles, or of enclosure samples with --resolution.
    GraphExport {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        resolution: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density heatmap (PGM, or PPM with --overlay).
    Heatmap {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        pixels: Option<u64>,
        /// Mark the chosen rectangles of this level.
        #[arg(long)]
        overlay: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Region, weights and density of the cell containing a point.
    Classify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        level: u32,
    },
    /// All checks in one document.
    Report {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 6)]
        depth: u32,
        #[arg(long)]
        epsilon: Option<String>,
    },
}

fn parse_rat(flag: &str, s: &str) -> Result<Rat, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("{flag}: cannot parse {s:?} as a rational")))
}

fn env_limit() -> Result<Option<u128>, CliError> {
    match std::env::var(LIMIT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{LIMIT_ENV}={v:?} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve(args: &ParamArgs) -> Result<RunConfig, CliError> {
    let mut raw = match &args.config {
        Some(path) => config::load_params(path)?,
        None => RawParams {
            p: Rat::new(1, 2),
            stages: vec![Stage { m: 3, n: 3 }],
        },
    };
    if let Some(p) = &args.p {
        raw.p = parse_rat("--p", p)?;
    }
    if let Some(s) = &args.stages {
        raw.stages = config::parse_stages(s)?;
    }
    let params = validate(raw)?;
    let limit = match args.exhaustive_limit {
        Some(l) => l,
        None => env_limit()?.unwrap_or(DEFAULT_EXHAUSTIVE_LIMIT),
    };
    Ok(RunConfig::new(params, limit))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Outcome of a command: a JSON document and whether its checks passed.
struct Output {
    doc: Value,
    passed: bool,
}

fn ok(doc: Value) -> Output {
    Output { doc, passed: true }
}

fn verify_doc(cfg: &RunConfig, sample: Option<(u64, u64)>) -> Result<(DoublingReport, Value), CliError> {
    let depth = cfg.depth.expect("depth set");
    let opts = SweepOptions {
        exhaustive_limit: cfg.exhaustive_limit,
    };
    let mut rep = verify_lemma(depth, &cfg.params, &opts)?;
    if let Some((trials, seed)) = sample {
        let res = depth.clamp(1, cfg.params.total_steps() as u32);
        rep.sampled_general_ratio = Some(sampled_doubling_estimate(res, trials, seed, &cfg.params)?);
    }
    let doc = to_json(&rep);
    Ok((rep, doc))
}

fn ledger_doc(ledger: &BoundsLedger) -> Value {
    let mut v = to_json(ledger);
    v["total_estimate"] = json!(format!("{:.12}", ledger.total.to_f64()));
    v
}

fn graph_mass(cfg: &RunConfig, k: usize) -> Result<Output, CliError> {
    let mass = mu_s(k, &cfg.params)?;
    let ledger = bounds(&cfg.params);
    let partial: Rat = ledger
        .stages
        .iter()
        .take(k)
        .fold(Rat::one(), |acc, s| acc - &s.tail_term - &s.leftover_term);
    let above = mass >= partial;
    Ok(Output {
        passed: above && ledger.all_ok(),
        doc: json!({
            "config": to_json(cfg),
            "k": k,
            "mu_s": mass,
            "mu_s_estimate": format!("{:.12}", mass.to_f64()),
            "bound_through_k": partial,
            "mu_s_at_least_bound": above,
            "bounds": ledger_doc(&ledger),
        }),
    })
}

fn plan(epsilon: &str, stages: usize) -> Result<Output, CliError> {
    let eps = parse_rat("--epsilon", epsilon)?;
    let params = plan_schedule(&eps, stages)?;
    let ledger = bounds(&params);
    let ratio_ok = params.ratio_q_over_p() <= Rat::one() + &eps;
    let bound_ok = ledger.total > Rat::one() - &eps;
    let mut doc = to_json(&params);
    doc["q_over_p"] = to_json(&params.ratio_q_over_p());
    doc["bound_total"] = to_json(&ledger.total);
    doc["bound_total_estimate"] = json!(format!("{:.12}", ledger.total.to_f64()));
    doc["epsilon"] = to_json(&eps);
    Ok(Output {
        doc,
        passed: ratio_ok && bound_ok,
    })
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn graph_export(
    cfg: &RunConfig,
    k: usize,
    resolution: Option<u64>,
    out: &PathBuf,
) -> Result<Output, CliError> {
    let mut csv = String::new();
    let rows = match resolution {
        Some(r) => {
            let (samples, _) = sample_graph(k, r, &cfg.params)?;
            csv.push_str("x,y_lo,y_hi,y_mid\n");
            for s in &samples {
                csv.push_str(&format!("{},{},{},{}\n", s.x, s.lo, s.hi, s.mid));
            }
            samples.len()
        }
        None => {
            let rects = chosen_rects(k, &cfg.params)?;
            csv.push_str("x_lo,x_hi,y_lo,y_hi\n");
            for r in &rects {
                let b = &r.bounds;
                csv.push_str(&format!("{},{},{},{}\n", b.l, b.r, b.b, b.t));
            }
            rects.len()
        }
    };
    write_file(out, csv.as_bytes())?;
    Ok(ok(json!({ "out": out.display().to_string(), "rows": rows, "k": k })))
}

fn heatmap(cfg: &RunConfig, spec: &HeatmapSpec, out: &PathBuf) -> Result<Output, CliError> {
    let img = render(spec, &cfg.params)?;
    write_file(out, &img.encode())?;
    Ok(ok(json!({
        "out": out.display().to_string(),
        "width": img.width,
        "height": img.height,
        "gray_levels": img.distinct_levels(),
        "spec": to_json(spec),
    })))
}

fn classify(cfg: &RunConfig, x: &str, y: &str, level: u32) -> Result<Output, CliError> {
    let (x, y) = (parse_rat("--x", x)?, parse_rat("--y", y)?);
    let cell = Cell::containing(&x, &y, level)?;
    let params = &cfg.params;
    let regions: Vec<Value> = (0..=params.stage_count())
        .map(|k| match locate(&cell, k, params) {
            Ok(r) => json!({ "k": k, "region": to_json(&r) }),
            Err(e) => json!({ "k": k, "unresolved": e.to_string() }),
        })
        .collect();
    let word = weight_word(&cell, params)?;
    Ok(ok(json!({
        "cell": to_json(&cell),
        "regions": regions,
        "weight_word": word.to_string(),
        "density": word.density(params),
        "mu_cell": mu_cell(&cell, params)?,
    })))
}

fn report(cfg: &RunConfig, epsilon: Option<Rat>) -> Result<Output, CliError> {
    let params = &cfg.params;
    let (rep, doubling) = verify_doc(cfg, None)?;
    let ledger = bounds(params);
    let masses: Vec<Rat> = (0..=params.stage_count())
        .map(|k| mu_s(k, params))
        .collect::<Result<_, _>>()?;
    let final_mass = masses.last().expect("k = 0 present").clone();
    let mut flags = json!({
        "probability": rep.measure.total_mass == Rat::one(),
        "conservation": rep.conditions.c2,
        "constant_density": rep.conditions.c1,
        "ratio_within_q_over_p": rep.ratio_within_q_over_p,
        "divergence_within_one": rep.divergence_within_one,
        "edge_ratio_within_q_over_p": rep.edge_max_ratio <= rep.q_over_p,
        "edge_divergence_within_one": rep.edge_max_divergence <= 1,
        "bound_terms": ledger.all_ok(),
        "mu_s_at_least_bound": final_mass >= ledger.total,
    });
    if let Some(eps) = &epsilon {
        flags["q_over_p_within_epsilon"] = json!(params.ratio_q_over_p() <= Rat::one() + eps);
        flags["bound_above_one_minus_epsilon"] = json!(ledger.total > Rat::one() - eps);
    }
    let passed = flags
        .as_object()
        .expect("object")
        .values()
        .all(|v| v.as_bool() == Some(true));
    let mut cfg_out = cfg.clone();
    cfg_out.epsilon = epsilon;
    Ok(Output {
        passed,
        doc: json!({
            "config": to_json(&cfg_out),
            "doubling": doubling,
            "bounds": ledger_doc(&ledger),
            "mu_s": masses,
            "flags": flags,
            "passed": passed,
        }),
    })
}

fn dispatch(cmd: Command) -> Result<Output, CliError> {
    match cmd {
        Command::Plan { epsilon, stages } => plan(&epsilon, stages),
        Command::Verify {
            params,
            depth,
            sample,
        } => {
            let mut cfg = resolve(&params)?;
            cfg.depth = Some(depth);
            let sample = sample.map(|v| (v[0], v[1]));
            if let Some((t, s)) = sample {
                cfg.trials = Some(t);
                cfg.seed = Some(s);
            }
            let (rep, mut doc) = verify_doc(&cfg, sample)?;
            doc["config"] = to_json(&cfg);
            doc["passed"] = json!(rep.passed());
            Ok(Output {
                doc,
                passed: rep.passed(),
            })
        }
        Command::GraphMass { params, k } => graph_mass(&resolve(&params)?, k),
        Command::GraphExport {
            params,
            k,
            resolution,
            out,
        } => graph_export(&resolve(&params)?, k, resolution, &out),
        Command::Heatmap {
            params,
            depth,
            pixels,
            overlay,
            out,
        } => {
            let cfg = resolve(&params)?;
            let pixels = pixels.unwrap_or_else(|| fatgraph_core::grid::side_count(depth.min(5)));
            heatmap(&cfg, &HeatmapSpec { depth, pixels, overlay }, &out)
        }
        Command::Classify {
            params,
            x,
            y,
            level,
        } => classify(&resolve(&params)?, &x, &y, level),
        Command::Report {
            params,
            depth,
            epsilon,
        } => {
            let mut cfg = resolve(&params)?;
            cfg.depth = Some(depth);
            let eps = epsilon.map(|e| parse_rat("--epsilon", &e)).transpose()?;
            report(&cfg, eps)
        }
    }
}

fn emit_error(err: &mut dyn Write, kind: &str, message: &str, hint: Option<String>) {
    let mut v = json!({ "error": kind, "message": message });
    if let Some(h) = hint {
        v["hint"] = json!(h);
    }
    let _ = writeln!(err, "{v}");
}

/// Run the CLI on `argv` (including the program name); returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            emit_error(err, "usage", e.to_string().trim(), None);
            return EXIT_USAGE;
        }
    };
    let work = || dispatch(cli.command);
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(e) => Err(CliError::Usage(format!("--threads {n}: {e}"))),
        },
        None => work(),
    };
    match result {
        Ok(o) => {
            let text = serde_json::to_string_pretty(&o.doc).expect("json");
            if writeln!(out, "{text}").is_err() {
                return EXIT_IO;
            }
            if o.passed {
                EXIT_OK
            } else {
                EXIT_VERIFY
            }
        }
        Err(e) => {
            emit_error(err, e.kind(), &e.to_string(), e.hint());
            e.exit_code()
        }
    }
}
