//! The longest-path recursion X_t = X_{t-1} max (1 + X_{(t-xi_t)_+}),
//! computed directly from the delay trace. Independent of the DAG engine
//! on purpose: the two must agree exactly on deepest-vertex runs, which
//! makes each the other's oracle.
//!
//! Increment times pi_k split X into gaps chi_k = pi_{k+1} - pi_k. The
//! first gap is the deterministic unit step to X = 1 and is excluded from
//! distributional checks; the remaining gaps are i.i.d. with survival
//! P(chi >= k) = prod_{i<=k} P(xi >= i).

use crate::delay::{chi_law, lambda_closed_form, ChiLaw, DelayModel, DEFAULT_TAIL_EPS};
use crate::engine::RunResult;
use crate::stats;
use crate::trace::Trace;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HeightError {
    #[error("series from seed {series_seed} cannot be checked against run seed {run_seed}")]
    TraceMismatch { series_seed: u64, run_seed: u64 },
    #[error("need at least {needed} gaps, found {found}")]
    TooFewGaps { needed: usize, found: usize },
}

#[derive(Clone, Debug)]
pub struct HeightSeries {
    seed: u64,
    x: Vec<u32>,
    pi: Vec<u32>,
}

impl HeightSeries {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> u32 {
        self.x.len() as u32 - 1
    }

    /// X_0..X_T.
    pub fn x(&self) -> &[u32] {
        &self.x
    }

    pub fn final_height(&self) -> u32 {
        *self.x.last().unwrap()
    }

    /// Times of the increments: pi_k is the first t with X_t = k.
    pub fn increment_times(&self) -> &[u32] {
        &self.pi
    }

    /// Complete gaps between successive increments, skipping the
    /// deterministic first one.
    pub fn chi_gaps(&self) -> Vec<u32> {
        if self.pi.len() < 2 {
            return Vec::new();
        }
        self.pi.windows(2).skip(1).map(|w| w[1] - w[0]).collect()
    }
}

pub fn height_recursion(trace: &Trace) -> HeightSeries {
    let t_end = trace.horizon();
    let mut x = Vec::with_capacity(t_end as usize + 1);
    x.push(0u32);
    let mut pi = Vec::new();
    for t in 1..=t_end {
        let s = t.saturating_sub(trace.xi(t));
        let candidate = 1 + x[s as usize];
        let prev = x[t as usize - 1];
        let next = prev.max(candidate);
        if next > prev {
            pi.push(t);
        }
        x.push(next);
    }
    HeightSeries { seed: trace.seed(), x, pi }
}

/// Exact cross-check: the recursion must reproduce the max depth of a
/// deepest-attaching run at every time.
pub fn verify_against_dag(series: &HeightSeries, run: &RunResult) -> Result<bool, HeightError> {
    if series.seed != run.trace.seed() || series.horizon() != run.trace.horizon() {
        return Err(HeightError::TraceMismatch {
            series_seed: series.seed,
            run_seed: run.trace.seed(),
        });
    }
    Ok(series.x() == run.state.max_depth_series())
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub lambda_predicted: f64,
    pub per_replica_rate: Vec<f64>,
    pub mean_rate: f64,
    pub ci_half_width: f64,
    pub max_rel_error: f64,
}

/// Final-slope check X_T/T against the closed-form growth rate, across
/// replicas seeded seed_base, seed_base+1, ...
pub fn growth_rate_test(
    model: &DelayModel,
    horizon: u32,
    replicas: u32,
    seed_base: u64,
) -> GrowthReport {
    let lambda = lambda_closed_form(model);
    let rates: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let tr = Trace::sample(model, horizon, seed_base + i as u64);
            height_recursion(&tr).final_height() as f64 / horizon as f64
        })
        .collect();
    let (mean, ci) = stats::mean_ci95(&rates);
    let max_rel_error = rates
        .iter()
        .map(|r| (r - lambda).abs() / lambda)
        .fold(0.0, f64::max);
    GrowthReport {
        lambda_predicted: lambda,
        per_replica_rate: rates,
        mean_rate: mean,
        ci_half_width: ci,
        max_rel_error,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiGapReport {
    pub gap_count: usize,
    pub gof: stats::GofResult,
    pub lag1_autocorrelation: f64,
}

/// Goodness of fit of the observed gaps against the product-form law,
/// plus a lag-1 dependence statistic (near 0 for i.i.d. gaps).
pub fn chi_gap_gof(series: &HeightSeries, model: &DelayModel) -> Result<ChiGapReport, HeightError> {
    let gaps = series.chi_gaps();
    if gaps.len() < 1000 {
        return Err(HeightError::TooFewGaps { needed: 1000, found: gaps.len() });
    }
    let law = chi_law(model, DEFAULT_TAIL_EPS);
    let gof = stats::gof_integer_law(&gaps, |k| law.pmf(k), law.max_k(), 5.0);
    let as_f64: Vec<f64> = gaps.iter().map(|&g| g as f64).collect();
    Ok(ChiGapReport {
        gap_count: gaps.len(),
        gof,
        lag1_autocorrelation: stats::lag1_autocorrelation(&as_f64),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub replicas: u32,
    pub horizon: u32,
    pub lambda: f64,
    pub gap_variance: f64,
    /// Set when the gap law is deterministic; the limit degenerates.
    pub degenerate: bool,
    pub ks_distance: Option<f64>,
}

/// Standardize X_T over replicas by the predicted mean and variance and
/// measure the Kolmogorov-Smirnov distance to the standard normal.
pub fn clt_test(model: &DelayModel, horizon: u32, replicas: u32, seed_base: u64) -> CltReport {
    let law: ChiLaw = chi_law(model, DEFAULT_TAIL_EPS);
    let lambda = 1.0 / law.mean();
    let var = law.variance();
    if var <= 0.0 {
        return CltReport {
            replicas,
            horizon,
            lambda,
            gap_variance: var,
            degenerate: true,
            ks_distance: None,
        };
    }
    let scale = (lambda.powi(3) * var * horizon as f64).sqrt();
    let zs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let tr = Trace::sample(model, horizon, seed_base + i as u64);
            let x_t = height_recursion(&tr).final_height() as f64;
            (x_t - lambda * horizon as f64) / scale
        })
        .collect();
    CltReport {
        replicas,
        horizon,
        lambda,
        gap_variance: var,
        degenerate: false,
        ks_distance: Some(stats::ks_distance_standard_normal(&zs)),
    }
}

/// Scaled fluctuation Z(u) = (X_{floor(uT)} - lambda uT)/sqrt(T) on a grid
/// of u in [0,1].
pub fn path_functional(
    series: &HeightSeries,
    model: &DelayModel,
    grid: &[f64],
) -> Vec<(f64, f64)> {
    let lambda = lambda_closed_form(model);
    let n = series.horizon() as f64;
    grid.iter()
        .map(|&u| {
            let idx = ((n * u).floor() as usize).min(series.x.len() - 1);
            let z = (series.x[idx] as f64 - lambda * n * u) / n.sqrt();
            (u, z)
        })
        .collect()
}
