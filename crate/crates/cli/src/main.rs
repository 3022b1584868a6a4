//! Command-line front end: run simulations, detect regenerations,
//! analyze runs, execute preset experiments, and export graphs.

use acm_cli::config::{parse_construction, parse_delay, RunConfig};
use acm_cli::presets::{lambda_report, run_preset};
use acm_core::analysis::{
    anchor_times, confirmed_exact, foster_drift, leaf_exponent_of_series,
    single_leaf_hitting, ConfirmedSet, EXACT_CONFIRMATION_MAX,
};
use acm_core::construction::ConstructionSpec;
use acm_core::delay::DelayModel;
use acm_core::engine::{run, RunResult};
use acm_core::export;
use acm_core::height::height_recursion;
use acm_core::regen::{detect_regeneration_intervals, gap_statistics};
use acm_core::trace::Trace;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

/// Memory guard: one run allocates tens of bytes per vertex, so this
/// caps a single graph at a few GB.
const MAX_RUN_HORIZON: u32 = 20_000_000;

#[derive(Parser)]
#[command(
    name = "acm",
    version,
    about = "Simulate DAG growth under random attachment delays and check its limit laws"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print closed-form constants of a delay law as JSON
    Lambda {
        /// Delay law, e.g. geometric:0.5, det:1, shifted-geometric:1:0.5,
        /// finite:1=0.5,2=0.5
        #[arg(long)]
        delay: String,
        #[arg(long)]
        censor_eps: Option<f64>,
    },
    /// Run one replica; write series.csv, edges.csv, graph.dot, summary.json
    Simulate(CommonArgs),
    /// Detect certified regeneration times; write regen.csv, regen.json
    Regen(CommonArgs),
    /// Run one replica and write the combined analysis.json report
    Analyze(CommonArgs),
    /// Run a named preset experiment; write <preset>-result.json
    Experiment {
        /// One of: nakamoto-rate, nakamoto-clt, regen-stats, palm,
        /// f1-growth, f2-stability, phase-sweep, commuting
        preset: String,
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Write a Graphviz rendering of one run
    ExportDot {
        #[command(flatten)]
        args: CommonArgs,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delay: Option<String>,
    #[arg(long)]
    construction: Option<String>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    replicas: Option<u32>,
    /// Seed base; replica i uses seed + i
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the ACM_OUT_DIR environment variable overrides
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Confirmation margin; defaults to the delay's censor margin
    #[arg(long)]
    margin: Option<u32>,
    #[arg(long)]
    censor_eps: Option<f64>,
    /// Skip exact confirmation
    #[arg(long)]
    no_confirm: bool,
}

enum Failure {
    /// Exit 1: an experiment ran fine but its thresholds failed.
    Criterion,
    /// Exit 2: the request itself is malformed.
    Config(String),
    /// Exit 3: the request would exceed a resource bound.
    Resource(String),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Criterion) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(msg)) => {
            eprintln!("resource bound exceeded: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Lambda { delay, censor_eps } => {
            let model = parse_delay(&delay).map_err(Failure::Config)?;
            let eps = censor_eps.unwrap_or(acm_core::delay::DEFAULT_CENSOR_EPS);
            print!("{}", export::to_json_pretty(&lambda_report(&model, &delay, eps)));
            Ok(())
        }
        Cmd::Simulate(args) => simulate(&merged(&args)?),
        Cmd::Regen(args) => regen(&merged(&args)?),
        Cmd::Analyze(args) => analyze(&merged(&args)?),
        Cmd::Experiment { preset, args } => experiment(&preset, &merged(&args)?),
        Cmd::ExportDot { args, out } => export_dot(&merged(&args)?, out.as_deref()),
    }
}

fn merged(args: &CommonArgs) -> Result<RunConfig, Failure> {
    let base = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        delay: args.delay.clone(),
        construction: args.construction.clone(),
        horizon: args.horizon,
        replicas: args.replicas,
        seed: args.seed,
        out_dir: args.out_dir.clone(),
        margin: args.margin,
        censor_eps: args.censor_eps,
        no_confirm: args.no_confirm,
    };
    Ok(base.merged_with(&flags).apply_env())
}

struct RunInputs {
    model: DelayModel,
    delay: String,
    construction: ConstructionSpec,
    construction_str: String,
    horizon: u32,
    seed: u64,
}

fn run_inputs(cfg: &RunConfig) -> Result<RunInputs, Failure> {
    let delay = cfg
        .delay
        .clone()
        .ok_or_else(|| Failure::Config("missing delay".to_string()))?;
    let model = parse_delay(&delay).map_err(Failure::Config)?;
    let construction_str = cfg
        .construction
        .clone()
        .ok_or_else(|| Failure::Config("missing construction".to_string()))?;
    let construction = parse_construction(&construction_str).map_err(Failure::Config)?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| Failure::Config("missing horizon".to_string()))?;
    if horizon == 0 {
        return Err(Failure::Config("horizon must be at least 1".to_string()));
    }
    if horizon > MAX_RUN_HORIZON {
        return Err(Failure::Resource(format!(
            "horizon {horizon} exceeds the single-run cap {MAX_RUN_HORIZON}"
        )));
    }
    Ok(RunInputs {
        model,
        delay,
        construction,
        construction_str,
        horizon,
        seed: cfg.seed(),
    })
}

fn simulate_run(inputs: &RunInputs) -> Result<RunResult, Failure> {
    run(
        &inputs.model,
        &inputs.construction,
        inputs.horizon,
        inputs.seed,
    )
    .map_err(|e| Failure::Config(e.to_string()))
}

/// Exact confirmation when enabled and affordable; the margin falls back
/// to the delay's censor margin.
fn confirmation(
    state: &acm_core::engine::ProcessState,
    cfg: &RunConfig,
    model: &DelayModel,
) -> (Option<ConfirmedSet>, u32) {
    let margin = cfg
        .margin
        .unwrap_or_else(|| model.censor_margin(cfg.censor_eps()));
    if cfg.no_confirm {
        return (None, margin);
    }
    if state.time() > EXACT_CONFIRMATION_MAX {
        eprintln!(
            "warning: exact confirmation disabled, horizon {} exceeds {}",
            state.time(),
            EXACT_CONFIRMATION_MAX
        );
        return (None, margin);
    }
    let set = confirmed_exact(state, margin).expect("horizon is within the bound");
    (Some(set), margin)
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = fs::File::create(&path)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_out(cfg: &RunConfig, name: &str, text: &str) -> Result<(), Failure> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn confirmation_json(conf: &Option<ConfirmedSet>, margin: u32) -> Value {
    match conf {
        Some(set) => json!({
            "enabled": true,
            "margin": margin,
            "cutoff_mark": set.cutoff_mark(),
            "confirmed_count": set.count(),
        }),
        None => json!({"enabled": false, "margin": margin}),
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let inputs = run_inputs(cfg)?;
    let rr = simulate_run(&inputs)?;
    let (conf, margin) = confirmation(&rr.state, cfg, &inputs.model);

    export::write_series_csv(&mut out_file(cfg, "series.csv")?, &rr.state)
        .map_err(|e| Failure::Config(e.to_string()))?;
    export::write_edges_csv(&mut out_file(cfg, "edges.csv")?, &rr.state)
        .map_err(|e| Failure::Config(e.to_string()))?;
    export::write_dot(&mut out_file(cfg, "graph.dot")?, &rr.state, conf.as_ref())
        .map_err(|e| Failure::Config(e.to_string()))?;

    let summary = json!({
        "schema": "acm-summary-v1",
        "config": {
            "delay": inputs.delay,
            "construction": inputs.construction_str,
            "horizon": inputs.horizon,
            "seed": inputs.seed,
        },
        "confirmation": confirmation_json(&conf, margin),
        "final": {
            "vertices": rr.state.vertex_count(),
            "edges": rr.state.edge_count(),
            "leaf_count": rr.state.leaf_series().last().copied().unwrap(),
            "max_depth": rr.state.max_depth_series().last().copied().unwrap(),
        },
    });
    let text = export::to_json_pretty(&summary);
    write_out(cfg, "summary.json", &text)?;
    print!("{text}");
    Ok(())
}

fn regen(cfg: &RunConfig) -> Result<(), Failure> {
    let delay = cfg
        .delay
        .clone()
        .ok_or_else(|| Failure::Config("missing delay".to_string()))?;
    let model = parse_delay(&delay).map_err(Failure::Config)?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| Failure::Config("missing horizon".to_string()))?;
    if horizon == 0 {
        return Err(Failure::Config("horizon must be at least 1".to_string()));
    }
    if horizon > MAX_RUN_HORIZON {
        return Err(Failure::Resource(format!(
            "horizon {horizon} exceeds the single-run cap {MAX_RUN_HORIZON}"
        )));
    }
    let trace = Trace::sample(&model, horizon, cfg.seed());
    let rep = detect_regeneration_intervals(&trace, &model, cfg.censor_eps())
        .map_err(|e| Failure::Config(e.to_string()))?;
    export::write_regen_csv(&mut out_file(cfg, "regen.csv")?, &rep)
        .map_err(|e| Failure::Config(e.to_string()))?;

    let gaps = gap_statistics(&rep).ok();
    let report = json!({
        "schema": "acm-regen-v1",
        "config": {
            "delay": delay,
            "horizon": horizon,
            "seed": cfg.seed(),
            "censor_eps": cfg.censor_eps(),
        },
        "r": rep.r,
        "censor_margin": rep.censor_margin,
        "detectable_horizon": rep.detectable_horizon(),
        "certified_count": rep.times.len(),
        "candidate_count": rep.candidates.len(),
        "density": rep.density(),
        "gap_stats": gaps.map(|g| serde_json::to_value(&g).unwrap()),
    });
    let text = export::to_json_pretty(&report);
    write_out(cfg, "regen.json", &text)?;
    print!("{text}");
    Ok(())
}

fn analyze(cfg: &RunConfig) -> Result<(), Failure> {
    let inputs = run_inputs(cfg)?;
    let rr = simulate_run(&inputs)?;
    let rep = detect_regeneration_intervals(&rr.trace, &inputs.model, cfg.censor_eps())
        .map_err(|e| Failure::Config(e.to_string()))?;
    let heights = height_recursion(&rr.trace);
    let anchors = anchor_times(&heights, &rep).expect("same trace");
    let hits = single_leaf_hitting(&rr.state, &rep).expect("same trace");
    let drift = foster_drift(&rr.state, &rep).ok();
    let (conf, margin) = confirmation(&rr.state, cfg, &inputs.model);

    let all_confirmed = |times: &[u32]| -> Value {
        match &conf {
            Some(set) => times
                .iter()
                .all(|&t| set.contains_id(rr.state.id_of_mark(t)))
                .into(),
            None => Value::Null,
        }
    };
    // Containment is a guarantee only where the theorem applies: anchors
    // pin vertices of deepest-attachment runs, single-leaf hits pin cut
    // vertices of any rule that never attaches to a non-leaf. Outside
    // that scope the field is null rather than a coin flip.
    let anchors_confirmed = if matches!(inputs.construction, ConstructionSpec::Nakamoto) {
        all_confirmed(&anchors)
    } else {
        Value::Null
    };
    let hits_confirmed =
        if matches!(inputs.construction, ConstructionSpec::TwoEndedExample) {
            Value::Null
        } else {
            all_confirmed(&hits)
        };
    let drift_json = drift.map(|d| {
        let pooled = d.pooled_at_or_above(20);
        json!({
            "r": d.r,
            "pairs": d.total_pairs(),
            "max_level": d.max_level(),
            "dyadic_bands": d
                .dyadic_bands()
                .iter()
                .map(|b| json!({"lo": b.lo, "hi": b.hi, "count": b.count, "mean": b.mean}))
                .collect::<Vec<Value>>(),
            "pooled_at_20": {
                "count": pooled.count,
                "mean": pooled.mean,
                "ci_half_width": pooled.ci_half_width,
            },
        })
    });
    let exponent = if inputs.horizon >= 100 {
        let fit = leaf_exponent_of_series(rr.state.leaf_series(), 1000);
        json!({"slope": fit.slope, "r2": fit.r2})
    } else {
        Value::Null
    };

    let report = json!({
        "schema": "acm-analysis-v1",
        "config": {
            "delay": inputs.delay,
            "construction": inputs.construction_str,
            "horizon": inputs.horizon,
            "seed": inputs.seed,
            "censor_eps": cfg.censor_eps(),
        },
        "regeneration": {
            "r": rep.r,
            "certified_count": rep.times.len(),
            "density": rep.density(),
            "censor_margin": rep.censor_margin,
        },
        "height": {
            "final": heights.final_height(),
            "increments": heights.increment_times().len(),
        },
        "anchors": {"count": anchors.len(), "all_confirmed": anchors_confirmed},
        "single_leaf_hits": {"count": hits.len(), "all_confirmed": hits_confirmed},
        "drift": drift_json,
        "leaf_exponent": exponent,
        "confirmation": confirmation_json(&conf, margin),
    });
    let text = export::to_json_pretty(&report);
    write_out(cfg, "analysis.json", &text)?;
    print!("{text}");
    Ok(())
}

fn experiment(preset: &str, cfg: &RunConfig) -> Result<(), Failure> {
    let started = std::time::Instant::now();
    let out = run_preset(preset, cfg).map_err(Failure::Config)?;
    eprintln!("runtime_s {:.3}", started.elapsed().as_secs_f64());
    let text = export::to_json_pretty(&out.result);
    write_out(cfg, &format!("{preset}-result.json"), &text)?;
    print!("{text}");
    if out.passed {
        Ok(())
    } else {
        Err(Failure::Criterion)
    }
}

fn export_dot(cfg: &RunConfig, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let inputs = run_inputs(cfg)?;
    let rr = simulate_run(&inputs)?;
    let (conf, _) = confirmation(&rr.state, cfg, &inputs.model);
    let mut buf = Vec::new();
    export::write_dot(&mut buf, &rr.state, conf.as_ref())
        .map_err(|e| Failure::Config(e.to_string()))?;
    match out {
        Some(path) => fs::write(path, &buf)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{}", String::from_utf8(buf).expect("dot output is utf-8")),
    }
    Ok(())
}
