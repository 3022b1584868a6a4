//! Named experiments with pinned thresholds. Each result embeds the
//! claim it tests and reproduces byte-identically for a fixed config.

use crate::config::{parse_construction, parse_delay, RunConfig};
use acm_core::analysis::{
    foster_drift, phase_transition_sweep, single_leaf_hitting, commuting_check,
    leaf_growth_exponent, DriftReport, PhaseClass,
};
use acm_core::delay::{lambda_closed_form, regeneration_density, DelayModel};
use acm_core::engine::run;
use acm_core::height::{clt_test, growth_rate_test};
use acm_core::regen::{detect_regeneration_intervals, gap_statistics, palm_identity_check};
use acm_core::trace::Trace;
use rayon::prelude::*;
use serde_json::{json, Value};

pub const PRESETS: &[&str] = &[
    "nakamoto-rate",
    "nakamoto-clt",
    "regen-stats",
    "palm",
    "f1-growth",
    "f2-stability",
    "phase-sweep",
    "commuting",
];

const RATE_REL_TOL: f64 = 0.01;
const CLT_KS_MAX: f64 = 0.06;
const DENSITY_REL_TOL: f64 = 0.02;
const GAP_MEAN_REL_TOL: f64 = 0.02;
const PALM_REL_TOL: f64 = 0.05;
const F1_SLOPE_RANGE: (f64, f64) = (0.45, 0.55);
const F2_MIN_HITS: usize = 10;
const F2_DRIFT_LEVEL: u32 = 20;
const SWEEP_ALPHAS: [f64; 5] = [0.1, 0.5, 2.0, 10.0, 50.0];
const SWEEP_MONOTONE_MIN: u32 = 18;
const COMMUTING_JS: [u32; 5] = [2, 4, 8, 16, 32];

#[derive(Debug)]
pub struct PresetOutcome {
    pub passed: bool,
    pub result: Value,
}

pub fn run_preset(name: &str, cfg: &RunConfig) -> Result<PresetOutcome, String> {
    match name {
        "nakamoto-rate" => nakamoto_rate(cfg),
        "nakamoto-clt" => nakamoto_clt(cfg),
        "regen-stats" => regen_stats(cfg),
        "palm" => palm(cfg),
        "f1-growth" => f1_growth(cfg),
        "f2-stability" => f2_stability(cfg),
        "phase-sweep" => phase_sweep(cfg),
        "commuting" => commuting(cfg),
        other => Err(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESETS.join(", ")
        )),
    }
}

struct Resolved {
    model: DelayModel,
    delay: String,
    horizon: u32,
    replicas: u32,
    seed: u64,
    censor_eps: f64,
}

fn resolve(
    cfg: &RunConfig,
    default_delay: &str,
    default_horizon: u32,
    default_replicas: u32,
) -> Result<Resolved, String> {
    let delay = cfg.delay.clone().unwrap_or_else(|| default_delay.to_string());
    let model = parse_delay(&delay)?;
    let horizon = cfg.horizon.unwrap_or(default_horizon);
    if horizon == 0 {
        return Err("horizon must be at least 1".to_string());
    }
    let replicas = cfg.replicas.unwrap_or(default_replicas);
    if replicas == 0 {
        return Err("replicas must be at least 1".to_string());
    }
    Ok(Resolved {
        model,
        delay,
        horizon,
        replicas,
        seed: cfg.seed(),
        censor_eps: cfg.censor_eps(),
    })
}

fn outcome(
    preset: &str,
    claim: &str,
    config: Value,
    metrics: Value,
    failures: Vec<String>,
) -> PresetOutcome {
    let passed = failures.is_empty();
    PresetOutcome {
        passed,
        result: json!({
            "schema": "acm-result-v1",
            "preset": preset,
            "claim": claim,
            "config": config,
            "metrics": metrics,
            "passed": passed,
            "failures": failures,
        }),
    }
}

fn nakamoto_rate(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.5", 1_000_000, 1)?;
    let rep = growth_rate_test(&r.model, r.horizon, r.replicas, r.seed);
    let mut failures = Vec::new();
    if rep.max_rel_error > RATE_REL_TOL {
        failures.push(format!(
            "worst relative rate error {:.6} exceeds {RATE_REL_TOL}",
            rep.max_rel_error
        ));
    }
    Ok(outcome(
        "nakamoto-rate",
        "height-growth-law-of-large-numbers",
        json!({"delay": r.delay, "horizon": r.horizon, "replicas": r.replicas, "seed": r.seed}),
        json!({
            "lambda_predicted": rep.lambda_predicted,
            "per_replica_rate": rep.per_replica_rate,
            "mean_rate": rep.mean_rate,
            "max_rel_error": rep.max_rel_error,
        }),
        failures,
    ))
}

fn nakamoto_clt(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.5", 10_000, 1000)?;
    let rep = clt_test(&r.model, r.horizon, r.replicas, r.seed);
    let mut failures = Vec::new();
    match rep.ks_distance {
        None => failures.push(
            "gap law is deterministic, the standardized limit degenerates".to_string(),
        ),
        Some(ks) if ks > CLT_KS_MAX => failures.push(format!(
            "KS distance to standard normal {ks:.4} exceeds {CLT_KS_MAX}"
        )),
        Some(_) => {}
    }
    Ok(outcome(
        "nakamoto-clt",
        "height-growth-central-limit",
        json!({"delay": r.delay, "horizon": r.horizon, "replicas": r.replicas, "seed": r.seed}),
        serde_json::to_value(&rep).unwrap(),
        failures,
    ))
}

fn regen_stats(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.5", 1_000_000, 1)?;
    let trace = Trace::sample(&r.model, r.horizon, r.seed);
    let rep = detect_regeneration_intervals(&trace, &r.model, r.censor_eps)
        .map_err(|e| e.to_string())?;
    let q = regeneration_density(&r.model, r.censor_eps);
    let density = rep.density();
    let density_rel_err = (density - q.value).abs() / q.value;
    let mut failures = Vec::new();
    if density_rel_err > DENSITY_REL_TOL {
        failures.push(format!(
            "certified density {density:.6} is {:.2}% from the predicted {:.6}",
            100.0 * density_rel_err,
            q.value
        ));
    }
    let gaps = gap_statistics(&rep).map_err(|e| e.to_string())?;
    let gap_mean_rel_err = (gaps.mean - 1.0 / q.value).abs() * q.value;
    if gap_mean_rel_err > GAP_MEAN_REL_TOL {
        failures.push(format!(
            "gap mean {:.4} is {:.2}% from the predicted {:.4}",
            gaps.mean,
            100.0 * gap_mean_rel_err,
            1.0 / q.value
        ));
    }
    Ok(outcome(
        "regen-stats",
        "regeneration-density-and-gap-law",
        json!({"delay": r.delay, "horizon": r.horizon, "seed": r.seed, "censor_eps": r.censor_eps}),
        json!({
            "r": rep.r,
            "censor_margin": rep.censor_margin,
            "certified_count": rep.times.len(),
            "density": density,
            "density_predicted": q.value,
            "density_rel_err": density_rel_err,
            "gap_mean": gaps.mean,
            "gap_mean_predicted": 1.0 / q.value,
            "gap_mean_rel_err": gap_mean_rel_err,
            "gap_variance": gaps.variance,
            "gap_lag1_autocorrelation": gaps.lag1_autocorrelation,
        }),
        failures,
    ))
}

fn palm(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.5", 1_000_000, 1)?;
    let trace = Trace::sample(&r.model, r.horizon, r.seed);
    let rep = detect_regeneration_intervals(&trace, &r.model, r.censor_eps)
        .map_err(|e| e.to_string())?;
    // H(x) = x^2
    let check = palm_identity_check(&rep, &[0.0, 0.0, 1.0]).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    if check.rel_discrepancy > PALM_REL_TOL {
        failures.push(format!(
            "sides differ by {:.2}% (lhs {:.6}, rhs {:.6})",
            100.0 * check.rel_discrepancy,
            check.lhs,
            check.rhs
        ));
    }
    Ok(outcome(
        "palm",
        "palm-inversion-identity",
        json!({"delay": r.delay, "horizon": r.horizon, "seed": r.seed, "censor_eps": r.censor_eps}),
        serde_json::to_value(&check).unwrap(),
        failures,
    ))
}

fn f1_growth(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.5", 1_000_000, 20)?;
    let rep = leaf_growth_exponent(&r.model, r.horizon, r.replicas, r.seed);
    let mut failures = Vec::new();
    if rep.degenerate {
        failures.push("leaf count never moves; exponent undefined".to_string());
    } else if rep.fit.slope < F1_SLOPE_RANGE.0 || rep.fit.slope > F1_SLOPE_RANGE.1 {
        failures.push(format!(
            "log-log slope {:.4} outside [{}, {}]",
            rep.fit.slope, F1_SLOPE_RANGE.0, F1_SLOPE_RANGE.1
        ));
    }
    if !rep.bound_ok {
        let worst = rep
            .grid
            .iter()
            .filter(|p| p.mean_leaves > p.bound)
            .map(|p| format!("t={} mean {:.2} > bound {:.2}", p.t, p.mean_leaves, p.bound))
            .next()
            .unwrap_or_default();
        failures.push(format!("square-root envelope violated: {worst}"));
    }
    Ok(outcome(
        "f1-growth",
        "single-leaf-square-root-scaling",
        json!({"delay": r.delay, "horizon": r.horizon, "replicas": r.replicas, "seed": r.seed}),
        serde_json::to_value(&rep).unwrap(),
        failures,
    ))
}

fn f2_stability(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.75", 100_000, 20)?;
    let construction = parse_construction(
        cfg.construction.as_deref().unwrap_or("kleaves:2"),
    )?;
    let per_seed: Vec<Result<(usize, DriftReport), String>> = (0..r.replicas)
        .into_par_iter()
        .map(|i| {
            let rr = run(&r.model, &construction, r.horizon, r.seed + i as u64)
                .map_err(|e| e.to_string())?;
            let rep = detect_regeneration_intervals(&rr.trace, &r.model, r.censor_eps)
                .map_err(|e| e.to_string())?;
            let hits = single_leaf_hitting(&rr.state, &rep).map_err(|e| e.to_string())?;
            let drift = foster_drift(&rr.state, &rep).map_err(|e| e.to_string())?;
            Ok((hits.len(), drift))
        })
        .collect();
    let mut hits = Vec::with_capacity(per_seed.len());
    let mut merged: Option<DriftReport> = None;
    for row in per_seed {
        let (h, drift) = row?;
        hits.push(h);
        match merged.as_mut() {
            Some(m) => m.merge(&drift),
            None => merged = Some(drift),
        }
    }
    let drift = merged.expect("at least one replica");
    let pooled = drift.pooled_at_or_above(F2_DRIFT_LEVEL);
    let mut failures = Vec::new();
    for (i, &h) in hits.iter().enumerate() {
        if h < F2_MIN_HITS {
            failures.push(format!(
                "seed {} saw only {h} single-leaf regenerations (need {F2_MIN_HITS})",
                r.seed + i as u64
            ));
        }
    }
    if pooled.count == 0 {
        failures.push(format!(
            "no drift samples at level >= {F2_DRIFT_LEVEL}: the chain never reaches it \
             (max regeneration-time level {}; the criterion is vacuous at this scale)",
            drift.max_level().unwrap_or(0)
        ));
    } else if !pooled.negative_excluding_zero() {
        failures.push(format!(
            "pooled drift at level >= {F2_DRIFT_LEVEL} is {:.4} +- {:.4} over {} samples; \
             interval does not exclude zero",
            pooled.mean, pooled.ci_half_width, pooled.count
        ));
    }
    let bands: Vec<Value> = drift
        .dyadic_bands()
        .iter()
        .map(|b| json!({"lo": b.lo, "hi": b.hi, "count": b.count, "mean": b.mean}))
        .collect();
    Ok(outcome(
        "f2-stability",
        "two-leaf-positive-recurrence-drift",
        json!({
            "delay": r.delay, "construction": "kleaves:2", "horizon": r.horizon,
            "replicas": r.replicas, "seed": r.seed, "censor_eps": r.censor_eps,
        }),
        json!({
            "hits_per_seed": hits,
            "min_hits": hits.iter().min().copied().unwrap_or(0),
            "drift_pairs": drift.total_pairs(),
            "max_level": drift.max_level(),
            "dyadic_bands": bands,
            "pooled": {
                "threshold": pooled.threshold,
                "count": pooled.count,
                "mean": pooled.mean,
                "ci_half_width": pooled.ci_half_width,
            },
        }),
        failures,
    ))
}

fn phase_sweep(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.75", 100_000, 20)?;
    let rep = phase_transition_sweep(&r.model, 2, &SWEEP_ALPHAS, r.horizon, r.replicas, r.seed);
    let mut failures = Vec::new();
    let first = rep.majority.first().copied().unwrap();
    let last = rep.majority.last().copied().unwrap();
    if first != PhaseClass::DivergingLeaves {
        failures.push(format!(
            "alpha {} classified {:?} by majority, expected DivergingLeaves",
            SWEEP_ALPHAS[0], first
        ));
    }
    if last != PhaseClass::Recurrent {
        failures.push(format!(
            "alpha {} classified {:?} by majority, expected Recurrent",
            SWEEP_ALPHAS[4], last
        ));
    }
    if rep.monotone_batteries < SWEEP_MONOTONE_MIN.min(r.replicas) {
        failures.push(format!(
            "only {} of {} batteries classified monotonically (need {})",
            rep.monotone_batteries,
            r.replicas,
            SWEEP_MONOTONE_MIN.min(r.replicas)
        ));
    }
    Ok(outcome(
        "phase-sweep",
        "state-varying-phase-transition",
        json!({
            "delay": r.delay, "k": 2, "alphas": SWEEP_ALPHAS.to_vec(),
            "horizon": r.horizon, "batteries": r.replicas, "seed": r.seed,
        }),
        serde_json::to_value(&rep).unwrap(),
        failures,
    ))
}

fn commuting(cfg: &RunConfig) -> Result<PresetOutcome, String> {
    let r = resolve(cfg, "geometric:0.75", 10_000, 1)?;
    let rep = commuting_check(&r.model, r.horizon, r.seed, &COMMUTING_JS);
    let mut failures = Vec::new();
    if !rep.bounds_hold() {
        for row in rep.rows.iter().filter(|w| w.equality_horizon < w.coupling_bound) {
            failures.push(format!(
                "j={}: runs diverge at t={} before the leaf bound t={}",
                row.j, row.equality_horizon, row.coupling_bound
            ));
        }
    }
    if !rep.d_star_non_increasing() {
        failures.push(format!(
            "ball distance to the take-all run is not non-increasing in j: {:?}",
            rep.rows.iter().map(|w| w.d_star).collect::<Vec<f64>>()
        ));
    }
    Ok(outcome(
        "commuting",
        "k-leaf-take-all-commuting-limit",
        json!({"delay": r.delay, "horizon": r.horizon, "seed": r.seed, "js": COMMUTING_JS.to_vec()}),
        serde_json::to_value(&rep).unwrap(),
        failures,
    ))
}

/// Closed-form constants surfaced by the lambda subcommand.
pub fn lambda_report(model: &DelayModel, delay: &str, censor_eps: f64) -> Value {
    let chi = acm_core::delay::chi_law(model, acm_core::delay::DEFAULT_TAIL_EPS);
    let q = regeneration_density(model, censor_eps);
    json!({
        "delay": delay,
        "r": model.min_support(),
        "lambda": lambda_closed_form(model),
        "expected_gap": chi.mean(),
        "gap_variance": chi.variance(),
        "regeneration_density": q.value,
        "density_truncation_gap": q.truncation_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_preset_is_rejected() {
        let err = run_preset("nope", &RunConfig::default()).unwrap_err();
        assert!(err.contains("unknown preset"));
    }

    #[test]
    fn nakamoto_rate_passes_at_reduced_scale() {
        let cfg = RunConfig {
            horizon: Some(100_000),
            ..RunConfig::default()
        };
        let out = run_preset("nakamoto-rate", &cfg).unwrap();
        assert!(out.passed, "{}", out.result);
        assert_eq!(out.result["claim"], "height-growth-law-of-large-numbers");
        assert_eq!(out.result["schema"], "acm-result-v1");
    }

    #[test]
    fn clt_preset_flags_degenerate_gap_laws() {
        let cfg = RunConfig {
            delay: Some("det:1".to_string()),
            horizon: Some(100),
            replicas: Some(10),
            ..RunConfig::default()
        };
        let out = run_preset("nakamoto-clt", &cfg).unwrap();
        assert!(!out.passed);
        assert!(out.result["failures"][0]
            .as_str()
            .unwrap()
            .contains("degenerates"));
    }

    #[test]
    fn commuting_preset_passes_at_reduced_scale() {
        let cfg = RunConfig {
            horizon: Some(2000),
            ..RunConfig::default()
        };
        let out = run_preset("commuting", &cfg).unwrap();
        assert!(out.passed, "{}", out.result);
    }

    #[test]
    fn preset_results_are_deterministic() {
        let cfg = RunConfig {
            horizon: Some(20_000),
            ..RunConfig::default()
        };
        let a = run_preset("regen-stats", &cfg).unwrap();
        let b = run_preset("regen-stats", &cfg).unwrap();
        assert_eq!(a.result, b.result);
    }

    #[test]
    fn zero_horizon_is_a_config_error() {
        let cfg = RunConfig {
            horizon: Some(0),
            ..RunConfig::default()
        };
        assert!(run_preset("palm", &cfg).is_err());
    }
}
