//! Regeneration detection on a delay trace.
//!
//! With minimal delay r, time t starts a regeneration interval when
//! xi_{t+s} = r for s in [0, r) and xi_{t+s} <= s for all s >= r: nothing
//! arriving after t+r looks past t, so the graph's past at t is sealed.
//! For r = 1 this is the single-time predicate xi_t = 1, xi_{t+s} <= s.
//!
//! The predicate quantifies over the entire future, which a finite trace
//! cannot observe, so detection is censored: with W the smallest margin
//! whose unobserved tail mass sum_{s>W} P(xi > s) falls below `censor_eps`,
//! times t <= T - W whose observed predicate holds are reported as
//! certified, and later consistent times only as candidates. For bounded
//! delays W makes certification exact; otherwise each certified time is
//! wrong with probability below the eps.

use crate::delay::DelayModel;
use crate::stats;
use crate::trace::Trace;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegenError {
    #[error("detector expects minimal delay {expected}, model has {got}")]
    WrongMinimumSupport { expected: u32, got: u32 },
    #[error("need at least {needed} regeneration times, found {found}")]
    TooFewRegenerations { needed: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegenReport {
    /// Minimal delay; regeneration intervals have this length.
    pub r: u32,
    pub horizon: u32,
    /// Censoring margin W; certification covers t in [1, horizon - W].
    pub censor_margin: u32,
    pub censor_eps: f64,
    /// Certified interval starts, ascending.
    pub times: Vec<u32>,
    /// Times past the censor margin whose observed predicate holds.
    pub candidates: Vec<u32>,
}

impl RegenReport {
    /// Gaps between consecutive certified times.
    pub fn gaps(&self) -> Vec<u32> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Last time that can be certified at all.
    pub fn detectable_horizon(&self) -> u32 {
        self.horizon.saturating_sub(self.censor_margin)
    }

    /// N_n: certified times up to and including n.
    pub fn count_up_to(&self, n: u32) -> usize {
        self.times.partition_point(|&t| t <= n)
    }

    /// Certified times per detectable step.
    pub fn density(&self) -> f64 {
        if self.detectable_horizon() == 0 {
            return 0.0;
        }
        self.times.len() as f64 / self.detectable_horizon() as f64
    }
}

/// Suffix minima of u - xi_u; entry [t] covers steps u in [t, T].
fn crossing_suffix_min(trace: &Trace) -> Vec<i64> {
    let t_end = trace.horizon() as usize;
    let mut sm = vec![i64::MAX; t_end + 2];
    for u in (1..=t_end).rev() {
        let reach = u as i64 - trace.xi(u as u32) as i64;
        sm[u] = reach.min(sm[u + 1]);
    }
    sm
}

/// Regeneration times for laws with minimal delay 1: xi_t = 1 and no later
/// step reaches past t.
pub fn detect_regeneration_times(
    trace: &Trace,
    model: &DelayModel,
    censor_eps: f64,
) -> Result<RegenReport, RegenError> {
    if model.min_support() != 1 {
        return Err(RegenError::WrongMinimumSupport {
            expected: 1,
            got: model.min_support(),
        });
    }
    let horizon = trace.horizon();
    let censor_margin = model.censor_margin(censor_eps);
    let sm = crossing_suffix_min(trace);
    let mut times = Vec::new();
    let mut candidates = Vec::new();
    let detectable = horizon.saturating_sub(censor_margin);
    for t in 1..=horizon {
        if trace.xi(t) != 1 {
            continue;
        }
        if sm[t as usize + 1] < t as i64 {
            continue;
        }
        if t <= detectable {
            times.push(t);
        } else {
            candidates.push(t);
        }
    }
    Ok(RegenReport {
        r: 1,
        horizon,
        censor_margin,
        censor_eps,
        times,
        candidates,
    })
}

/// Interval starts for arbitrary minimal delay r. Agrees exactly with
/// `detect_regeneration_times` when r = 1.
pub fn detect_regeneration_intervals(
    trace: &Trace,
    model: &DelayModel,
    censor_eps: f64,
) -> Result<RegenReport, RegenError> {
    let r = model.min_support();
    let horizon = trace.horizon();
    let censor_margin = model.censor_margin(censor_eps);
    let sm = crossing_suffix_min(trace);
    // run[t] = length of the run of xi == r starting at t (within horizon)
    let mut run = vec![0u32; horizon as usize + 2];
    for t in (1..=horizon as usize).rev() {
        run[t] = if trace.xi(t as u32) == r { run[t + 1] + 1 } else { 0 };
    }
    let mut times = Vec::new();
    let mut candidates = Vec::new();
    let detectable = horizon.saturating_sub(censor_margin);
    for t in 1..=horizon {
        // the whole interval [t, t+r) must be delay-r steps we observed
        if (t + r).saturating_sub(1) > horizon || run[t as usize] < r {
            continue;
        }
        // steps at t+r and beyond must not reach past t
        let from = (t + r) as usize;
        if from <= horizon as usize && sm[from] < t as i64 {
            continue;
        }
        if t <= detectable {
            times.push(t);
        } else {
            candidates.push(t);
        }
    }
    Ok(RegenReport {
        r,
        horizon,
        censor_margin,
        censor_eps,
        times,
        candidates,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub lag1_autocorrelation: f64,
}

/// Statistics of the gaps between consecutive certified times.
pub fn gap_statistics(report: &RegenReport) -> Result<GapStats, RegenError> {
    if report.times.len() < 2 {
        return Err(RegenError::TooFewRegenerations {
            needed: 2,
            found: report.times.len(),
        });
    }
    let gaps: Vec<f64> = report.gaps().iter().map(|&g| g as f64).collect();
    let (mean, variance) = stats::mean_and_variance(&gaps);
    Ok(GapStats {
        count: gaps.len(),
        mean,
        variance,
        lag1_autocorrelation: stats::lag1_autocorrelation(&gaps),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PalmCheck {
    /// Time average of h(next regeneration - t) with h the forward
    /// difference of H.
    pub lhs: f64,
    /// Certified density times the gap average of H.
    pub rhs: f64,
    pub rel_discrepancy: f64,
    pub gap_count: usize,
}

/// Check the exchange identity E h(distance to next regeneration)
/// = density * E H(gap), for a polynomial H with H(0) = 0 given by its
/// coefficients (index = power).
pub fn palm_identity_check(
    report: &RegenReport,
    h_coeffs: &[f64],
) -> Result<PalmCheck, RegenError> {
    assert!(
        h_coeffs.first().copied().unwrap_or(0.0) == 0.0,
        "H must vanish at 0"
    );
    if report.times.len() < 2 {
        return Err(RegenError::TooFewRegenerations {
            needed: 2,
            found: report.times.len(),
        });
    }
    let poly = |x: f64| -> f64 {
        let mut acc = 0.0;
        for &c in h_coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    };
    let h = |x: f64| poly(x + 1.0) - poly(x);

    let last = *report.times.last().unwrap();
    let mut next_idx = 0;
    let mut sum = 0.0;
    for t in 1..=last {
        while report.times[next_idx] < t {
            next_idx += 1;
        }
        sum += h((report.times[next_idx] - t) as f64);
    }
    let lhs = sum / last as f64;

    let gaps = report.gaps();
    let mean_h_gap =
        gaps.iter().map(|&g| poly(g as f64)).sum::<f64>() / gaps.len() as f64;
    let rhs = report.density() * mean_h_gap;
    Ok(PalmCheck {
        lhs,
        rhs,
        rel_discrepancy: (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE),
        gap_count: gaps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{
        regeneration_density, DelayModel, DelaySpec, DEFAULT_CENSOR_EPS, DEFAULT_TAIL_EPS,
    };

    fn geo(p: f64) -> DelayModel {
        DelayModel::new(DelaySpec::Geometric(p)).unwrap()
    }

    fn bounded_123() -> DelayModel {
        DelayModel::new(DelaySpec::FiniteSupport(vec![(1, 0.5), (2, 0.3), (3, 0.2)])).unwrap()
    }

    #[test]
    fn hand_trace_certifies_only_the_sealed_time() {
        // step 3 reaches back to time 1, so 2 cannot regenerate; 4 is
        // within the censor margin and stays a candidate
        let tr = Trace::from_xi(0, vec![1, 1, 2, 1]);
        let m = bounded_123();
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        assert_eq!(rep.censor_margin, 2);
        assert_eq!(rep.times, vec![1]);
        assert_eq!(rep.candidates, vec![4]);
    }

    #[test]
    fn unit_delays_certify_everything() {
        let m = DelayModel::new(DelaySpec::Deterministic(1)).unwrap();
        let tr = Trace::sample(&m, 50, 0);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        assert_eq!(rep.censor_margin, 0);
        assert_eq!(rep.times, (1..=50).collect::<Vec<_>>());
        assert!(rep.candidates.is_empty());
        assert_eq!(rep.density(), 1.0);
    }

    #[test]
    fn wrong_minimum_support_is_rejected() {
        let m = DelayModel::new(DelaySpec::Deterministic(2)).unwrap();
        let tr = Trace::sample(&m, 10, 0);
        assert_eq!(
            detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS),
            Err(RegenError::WrongMinimumSupport { expected: 1, got: 2 })
        );
    }

    #[test]
    fn interval_detection_handles_longer_minimal_delay() {
        let m = DelayModel::new(DelaySpec::Deterministic(2)).unwrap();
        let tr = Trace::from_xi(0, vec![2, 2, 2, 2]);
        let rep = detect_regeneration_intervals(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        assert_eq!(rep.r, 2);
        assert_eq!(rep.censor_margin, 1);
        // every start works for constant delay-2 traces
        assert_eq!(rep.times, vec![1, 2, 3]);
    }

    #[test]
    fn interval_and_time_detection_agree_for_unit_minimum() {
        let m = bounded_123();
        for seed in 0..20 {
            let tr = Trace::sample(&m, 300, seed);
            let a = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
            let b = detect_regeneration_intervals(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
            assert_eq!(a.times, b.times);
            assert_eq!(a.candidates, b.candidates);
        }
    }

    #[test]
    fn certified_times_have_no_crossing_steps() {
        let m = geo(0.5);
        let tr = Trace::sample(&m, 2000, 3);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        assert!(rep.times.len() > 100);
        for &t in rep.times.iter().take(60) {
            for u in (t + 1)..=tr.horizon() {
                assert!(u.saturating_sub(tr.xi(u)) >= t, "step {u} crosses {t}");
            }
        }
    }

    #[test]
    fn prefix_detection_agrees_on_certified_region() {
        // bounded support makes certification exact, so a longer trace can
        // never overturn what a prefix certified
        let m = bounded_123();
        for seed in 0..10 {
            let tr = Trace::sample(&m, 400, seed);
            let full = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
            let pre =
                detect_regeneration_times(&tr.prefix(250), &m, DEFAULT_CENSOR_EPS).unwrap();
            let cut = pre.detectable_horizon();
            let full_cut: Vec<u32> =
                full.times.iter().copied().filter(|&t| t <= cut).collect();
            assert_eq!(pre.times, full_cut);
        }
    }

    #[test]
    fn certified_density_tracks_the_law() {
        let m = geo(0.5);
        let tr = Trace::sample(&m, 1_000_000, 42);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let q = regeneration_density(&m, DEFAULT_TAIL_EPS).value;
        let density = rep.density();
        assert!(
            (density / q - 1.0).abs() < 0.02,
            "density {density} vs {q}"
        );

        // block counts concentrate: variance of per-block density shrinks
        // as blocks grow
        let var_at = |block: u32| {
            let mut densities = Vec::new();
            let mut lo = 0u32;
            while lo + block <= rep.detectable_horizon() {
                let n = rep.count_up_to(lo + block) - rep.count_up_to(lo);
                densities.push(n as f64 / block as f64);
                lo += block;
            }
            stats::mean_and_variance(&densities).1
        };
        assert!(var_at(100_000) < var_at(1_000));
    }

    #[test]
    fn shifted_geometric_interval_density_tracks_the_law() {
        let m = DelayModel::new(DelaySpec::ShiftedGeometric { shift: 1, p: 0.5 }).unwrap();
        let tr = Trace::sample(&m, 1_000_000, 7);
        let rep = detect_regeneration_intervals(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let q = regeneration_density(&m, DEFAULT_TAIL_EPS).value;
        assert!(
            (rep.density() / q - 1.0).abs() < 0.02,
            "density {} vs {q}",
            rep.density()
        );
    }

    #[test]
    fn gap_statistics_match_the_renewal_mean() {
        let m = geo(0.5);
        let tr = Trace::sample(&m, 1_000_000, 11);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let st = gap_statistics(&rep).unwrap();
        let q = regeneration_density(&m, DEFAULT_TAIL_EPS).value;
        assert!((st.mean * q - 1.0).abs() < 0.02, "gap mean {}", st.mean);
        // certified gaps are i.i.d.; allow 4 sigma on the lag-1 correlation
        let bound = 4.0 / (st.count as f64).sqrt();
        assert!(
            st.lag1_autocorrelation.abs() < bound,
            "lag1 {} vs {bound}",
            st.lag1_autocorrelation
        );
    }

    #[test]
    fn too_few_regenerations_is_reported() {
        let m = geo(0.5);
        let tr = Trace::from_xi(0, vec![2, 2]);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        assert!(matches!(
            gap_statistics(&rep),
            Err(RegenError::TooFewRegenerations { .. })
        ));
        assert!(matches!(
            palm_identity_check(&rep, &[0.0, 1.0]),
            Err(RegenError::TooFewRegenerations { .. })
        ));
    }

    #[test]
    fn palm_identity_linear_case_is_exact_for_unit_delays() {
        let m = DelayModel::new(DelaySpec::Deterministic(1)).unwrap();
        let tr = Trace::sample(&m, 200, 0);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let pc = palm_identity_check(&rep, &[0.0, 1.0]).unwrap();
        assert!((pc.lhs - 1.0).abs() < 1e-12);
        assert!((pc.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn palm_identity_linear_case_telescopes() {
        // with H(x) = x the time average telescopes to exactly 1
        let m = geo(0.5);
        let tr = Trace::sample(&m, 100_000, 5);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let pc = palm_identity_check(&rep, &[0.0, 1.0]).unwrap();
        assert!((pc.lhs - 1.0).abs() < 1e-9, "lhs {}", pc.lhs);
        assert!(pc.rel_discrepancy < 0.02, "{pc:?}");
    }

    #[test]
    fn palm_identity_quadratic_case_balances() {
        let m = geo(0.5);
        let tr = Trace::sample(&m, 1_000_000, 13);
        let rep = detect_regeneration_times(&tr, &m, DEFAULT_CENSOR_EPS).unwrap();
        let pc = palm_identity_check(&rep, &[0.0, 0.0, 1.0]).unwrap();
        assert!(pc.rel_discrepancy < 0.05, "{pc:?}");
    }
}
