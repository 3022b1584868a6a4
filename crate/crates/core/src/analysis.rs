//! Finite-horizon proxies for the limit claims: exact confirmation by
//! reverse reachability, anchor events, single-leaf hitting, conditional
//! drift of the leaf count at regeneration times, leaf-growth exponents,
//! coupled-run equality horizons, the rooted-ball metric, and the
//! state-varying phase sweep.

use crate::construction::ConstructionSpec;
use crate::delay::DelayModel;
use crate::engine::{run_with_trace, G0Spec, ProcessState};
use crate::height::HeightSeries;
use crate::regen::{detect_regeneration_intervals, RegenReport};
use crate::stats::{self, OlsFit};
use crate::trace::Trace;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Exact confirmation is quadratic in the horizon; refuse beyond this.
pub const EXACT_CONFIRMATION_MAX: u32 = 20_000;

/// Grid start and tail-hit cutoff for exponent fits and sweep
/// classification. Both are reporting conventions, not claims.
pub const FIT_WINDOW_START: u32 = 1_000;
pub const DIVERGENCE_EXPONENT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("horizon {horizon} exceeds the exact-confirmation bound {max}")]
    HorizonTooLargeForExact { horizon: u32, max: u32 },
    #[error("inputs cover different horizons: {a} vs {b}")]
    HorizonMismatch { a: u32, b: u32 },
    #[error("need at least {needed} regeneration times, found {found}")]
    TooFewRegenerations { needed: usize, found: usize },
}

/// Vertices referenced, directly or through a path, by every vertex in
/// the window (their mark, horizon - margin]. Vertices inside the margin
/// tail are confirmed vacuously, which keeps the set antitone in the
/// margin.
#[derive(Clone, Debug)]
pub struct ConfirmedSet {
    flags: Vec<bool>,
    margin: u32,
    cutoff_mark: u32,
}

impl ConfirmedSet {
    pub fn margin(&self) -> u32 {
        self.margin
    }

    /// Last mark whose confirmation was actually tested.
    pub fn cutoff_mark(&self) -> u32 {
        self.cutoff_mark
    }

    pub fn contains_id(&self, id: u32) -> bool {
        self.flags[id as usize]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn confirmed_ids(&self) -> Vec<u32> {
        (0..self.flags.len() as u32)
            .filter(|&id| self.flags[id as usize])
            .collect()
    }
}

pub fn confirmed_exact(state: &ProcessState, margin: u32) -> Result<ConfirmedSet, AnalysisError> {
    let horizon = state.time();
    if horizon > EXACT_CONFIRMATION_MAX {
        return Err(AnalysisError::HorizonTooLargeForExact {
            horizon,
            max: EXACT_CONFIRMATION_MAX,
        });
    }
    let n = state.vertex_count() as usize;
    let words = n.div_ceil(64);
    // reach[id] = bitset of vertices reachable from id, own bit included;
    // targets are older, so ascending id order completes each row at once
    let mut reach = vec![0u64; n * words];
    for id in 0..n {
        let (older, current) = reach.split_at_mut(id * words);
        let row = &mut current[..words];
        for &tgt in state.out_targets(id as u32) {
            let trow = &older[tgt as usize * words..(tgt as usize + 1) * words];
            for (w, &bits) in trow.iter().enumerate() {
                row[w] |= bits;
            }
        }
        row[id / 64] |= 1u64 << (id % 64);
    }

    let cutoff_mark = horizon.saturating_sub(margin);
    let mut flags = vec![false; n];
    for mark in (cutoff_mark + 1)..=horizon {
        flags[state.id_of_mark(mark) as usize] = true;
    }
    // sweep the window newest first, testing each vertex against the
    // intersection of everything newer inside the window
    let mut inter = vec![!0u64; words];
    for mark in (1..=cutoff_mark).rev() {
        let id = state.id_of_mark(mark) as usize;
        flags[id] = inter[id / 64] >> (id % 64) & 1 == 1;
        let row = &reach[id * words..(id + 1) * words];
        for (w, &bits) in row.iter().enumerate() {
            inter[w] &= bits;
        }
    }
    for id in 0..state.initial_vertex_count() as usize {
        flags[id] = inter[id / 64] >> (id % 64) & 1 == 1;
    }
    Ok(ConfirmedSet { flags, margin, cutoff_mark })
}

/// Times whose vertex the deepest-attachment proof pins down: a height
/// increment at the start of a double regeneration interval.
pub fn anchor_times(
    series: &HeightSeries,
    report: &RegenReport,
) -> Result<Vec<u32>, AnalysisError> {
    if series.horizon() != report.horizon {
        return Err(AnalysisError::HorizonMismatch {
            a: series.horizon(),
            b: report.horizon,
        });
    }
    let x = series.x();
    Ok(report
        .times
        .iter()
        .copied()
        .filter(|&t| {
            x[t as usize] == x[t as usize - 1] + 1
                && report.times.binary_search(&(t + report.r)).is_ok()
        })
        .collect())
}

/// Certified regeneration times at which the graph has a single leaf.
/// The leaf is then the just-created vertex, a cut point of the final
/// graph.
pub fn single_leaf_hitting(
    state: &ProcessState,
    report: &RegenReport,
) -> Result<Vec<u32>, AnalysisError> {
    if state.time() != report.horizon {
        return Err(AnalysisError::HorizonMismatch { a: state.time(), b: report.horizon });
    }
    Ok(report
        .times
        .iter()
        .copied()
        .filter(|&t| state.leaf_series()[t as usize] == 1)
        .collect())
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
struct LevelAgg {
    count: u64,
    sum: f64,
    sum_sq: f64,
}

/// Empirical conditional drift of the regeneration-time leaf statistic:
/// for each observed level, the distribution of the change to the next
/// regeneration. For minimal delay r > 1 the statistic is the sum of the
/// leaf counts over the r interval slots.
#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub r: u32,
    levels: BTreeMap<u32, LevelAgg>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PooledDrift {
    pub threshold: u32,
    pub count: u64,
    pub mean: f64,
    pub ci_half_width: f64,
}

impl PooledDrift {
    /// True when the 95% interval lies strictly below zero.
    pub fn negative_excluding_zero(&self) -> bool {
        self.count >= 2 && self.mean + self.ci_half_width < 0.0
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DriftBand {
    pub lo: u32,
    pub hi: u32,
    pub count: u64,
    pub mean: f64,
}

impl DriftReport {
    pub fn total_pairs(&self) -> u64 {
        self.levels.values().map(|a| a.count).sum()
    }

    pub fn max_level(&self) -> Option<u32> {
        self.levels.keys().next_back().copied()
    }

    pub fn level_stats(&self, level: u32) -> Option<(u64, f64)> {
        self.levels.get(&level).map(|a| (a.count, a.sum / a.count as f64))
    }

    pub fn levels(&self) -> impl Iterator<Item = (u32, u64, f64)> + '_ {
        self.levels
            .iter()
            .map(|(&l, a)| (l, a.count, a.sum / a.count as f64))
    }

    pub fn merge(&mut self, other: &DriftReport) {
        assert_eq!(self.r, other.r, "cannot merge drifts across interval lengths");
        for (&l, a) in &other.levels {
            let e = self.levels.entry(l).or_default();
            e.count += a.count;
            e.sum += a.sum;
            e.sum_sq += a.sum_sq;
        }
    }

    pub fn pooled_at_or_above(&self, threshold: u32) -> PooledDrift {
        let mut agg = LevelAgg::default();
        for (&l, a) in &self.levels {
            if l >= threshold {
                agg.count += a.count;
                agg.sum += a.sum;
                agg.sum_sq += a.sum_sq;
            }
        }
        if agg.count == 0 {
            return PooledDrift {
                threshold,
                count: 0,
                mean: f64::NAN,
                ci_half_width: f64::INFINITY,
            };
        }
        let mean = agg.sum / agg.count as f64;
        let ci_half_width = if agg.count < 2 {
            f64::INFINITY
        } else {
            let var =
                (agg.sum_sq - agg.sum * agg.sum / agg.count as f64) / (agg.count - 1) as f64;
            1.96 * (var.max(0.0) / agg.count as f64).sqrt()
        };
        PooledDrift { threshold, count: agg.count, mean, ci_half_width }
    }

    /// Aggregate sparse levels into bands [2^i, 2^{i+1}).
    pub fn dyadic_bands(&self) -> Vec<DriftBand> {
        let Some(max) = self.max_level() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut lo = 1u32;
        while lo <= max {
            let hi = lo.saturating_mul(2) - 1;
            let mut agg = LevelAgg::default();
            for (&l, a) in self.levels.range(lo..=hi) {
                let _ = l;
                agg.count += a.count;
                agg.sum += a.sum;
                agg.sum_sq += a.sum_sq;
            }
            if agg.count > 0 {
                out.push(DriftBand {
                    lo,
                    hi,
                    count: agg.count,
                    mean: agg.sum / agg.count as f64,
                });
            }
            lo = hi + 1;
        }
        out
    }
}

pub fn foster_drift(
    state: &ProcessState,
    report: &RegenReport,
) -> Result<DriftReport, AnalysisError> {
    if state.time() != report.horizon {
        return Err(AnalysisError::HorizonMismatch { a: state.time(), b: report.horizon });
    }
    if report.times.len() < 2 {
        return Err(AnalysisError::TooFewRegenerations {
            needed: 2,
            found: report.times.len(),
        });
    }
    let leaves = state.leaf_series();
    let statistic = |t: u32| -> i64 {
        (0..report.r)
            .map(|i| leaves[(t + i) as usize] as i64)
            .sum()
    };
    let values: Vec<i64> = report.times.iter().map(|&t| statistic(t)).collect();
    let mut levels: BTreeMap<u32, LevelAgg> = BTreeMap::new();
    for w in values.windows(2) {
        let delta = (w[1] - w[0]) as f64;
        let e = levels.entry(w[0] as u32).or_default();
        e.count += 1;
        e.sum += delta;
        e.sum_sq += delta * delta;
    }
    Ok(DriftReport { r: report.r, levels })
}

fn log_grid(lo: u32, hi: u32, points: u32) -> Vec<u32> {
    assert!(lo >= 1 && lo <= hi);
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u32> = (0..points)
        .map(|i| {
            let u = i as f64 / (points - 1) as f64;
            (a + u * (b - a)).exp().round() as u32
        })
        .collect();
    out.dedup();
    out
}

/// Log-log slope of a single leaf-count series over a geometric grid
/// starting at `lo`.
pub fn leaf_exponent_of_series(leaf_series: &[u32], lo: u32) -> OlsFit {
    let hi = leaf_series.len() as u32 - 1;
    let grid = log_grid(lo.min(hi.saturating_sub(2)).max(1), hi, 25);
    let xs: Vec<f64> = grid.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = grid
        .iter()
        .map(|&t| (leaf_series[t as usize] as f64).ln())
        .collect();
    stats::ols_fit(&xs, &ys)
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthGridPoint {
    pub t: u32,
    pub mean_leaves: f64,
    pub bound: f64,
}

/// Replica-averaged leaf growth of single-leaf attachment, its log-log
/// slope, and the explicit square-root envelope with drift constant
/// c = 2 E(xi - 1).
#[derive(Clone, Debug, Serialize)]
pub struct LeafGrowthReport {
    pub horizon: u32,
    pub replicas: u32,
    pub drift_constant: f64,
    pub grid: Vec<GrowthGridPoint>,
    pub fit: OlsFit,
    pub bound_ok: bool,
    pub degenerate: bool,
}

pub fn leaf_growth_exponent(
    model: &DelayModel,
    horizon: u32,
    replicas: u32,
    seed_base: u64,
) -> LeafGrowthReport {
    let grid = log_grid(FIT_WINDOW_START.min(horizon / 2).max(1), horizon, 25);
    // collect per replica, then fold in index order: float sums stay
    // byte-identical whatever the thread count
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let tr = Trace::sample(model, horizon, seed_base + i as u64);
            let st = run_with_trace(&tr, &ConstructionSpec::KLeaves(1), &G0Spec::SingleRoot)
                .unwrap();
            grid.iter()
                .map(|&t| st.leaf_series()[t as usize] as f64)
                .collect::<Vec<f64>>()
        })
        .collect();
    let mut sums = vec![0.0; grid.len()];
    for row in &rows {
        for (a, b) in sums.iter_mut().zip(row) {
            *a += b;
        }
    }
    let c = 2.0 * (model.mean() - 1.0);
    let points: Vec<GrowthGridPoint> = grid
        .iter()
        .zip(&sums)
        .map(|(&t, &s)| GrowthGridPoint {
            t,
            mean_leaves: s / replicas as f64,
            bound: ((2.0 * c + 1.0) * t as f64 + 1.0).sqrt(),
        })
        .collect();
    let bound_ok = points.iter().all(|p| p.mean_leaves <= p.bound);
    let degenerate = points
        .windows(2)
        .all(|w| (w[0].mean_leaves - w[1].mean_leaves).abs() < 1e-12);
    let xs: Vec<f64> = points.iter().map(|p| (p.t as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_leaves.ln()).collect();
    LeafGrowthReport {
        horizon,
        replicas,
        drift_constant: c,
        grid: points,
        fit: stats::ols_fit(&xs, &ys),
        bound_ok,
        degenerate,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutingRow {
    pub j: u32,
    /// Largest t with G_t(k-leaves j) identical to G_t(take-all).
    pub equality_horizon: u32,
    /// Largest t whose running max take-all leaf count stays within j.
    pub coupling_bound: u32,
    pub d_star: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutingReport {
    pub horizon: u32,
    pub seed: u64,
    pub take_all_max_leaves: u32,
    pub rows: Vec<CommutingRow>,
}

impl CommutingReport {
    pub fn bounds_hold(&self) -> bool {
        self.rows.iter().all(|r| r.equality_horizon >= r.coupling_bound)
    }

    pub fn d_star_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].d_star <= w[0].d_star + 1e-12)
    }

    pub fn equality_horizon_non_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].equality_horizon >= w[0].equality_horizon)
    }
}

/// Couple k-leaf runs against the take-all run on one trace and measure
/// how far each agrees with the limit rule.
pub fn commuting_check(
    model: &DelayModel,
    horizon: u32,
    seed: u64,
    js: &[u32],
) -> CommutingReport {
    let trace = Trace::sample(model, horizon, seed);
    let all = run_with_trace(&trace, &ConstructionSpec::AllLeaves, &G0Spec::SingleRoot)
        .unwrap();
    let mut prefix_max = Vec::with_capacity(horizon as usize + 1);
    let mut m = 0;
    for &l in all.leaf_series() {
        m = m.max(l);
        prefix_max.push(m);
    }
    let rows: Vec<CommutingRow> = js
        .par_iter()
        .map(|&j| {
            let st =
                run_with_trace(&trace, &ConstructionSpec::KLeaves(j), &G0Spec::SingleRoot)
                    .unwrap();
            let mut equality_horizon = horizon;
            for t in 1..=horizon {
                if st.out_targets(st.id_of_mark(t)) != all.out_targets(all.id_of_mark(t)) {
                    equality_horizon = t - 1;
                    break;
                }
            }
            let coupling_bound = (0..=horizon)
                .take_while(|&t| prefix_max[t as usize] <= j)
                .last()
                .unwrap_or(0);
            CommutingRow {
                j,
                equality_horizon,
                coupling_bound,
                d_star: graph_distance(&st, &all),
            }
        })
        .collect();
    CommutingReport {
        horizon,
        seed,
        take_all_max_leaves: *prefix_max.last().unwrap(),
        rows,
    }
}

fn undirected_distances(state: &ProcessState) -> Vec<u32> {
    let n = state.vertex_count() as usize;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for id in 0..n as u32 {
        for &tgt in state.out_targets(id) {
            adj[id as usize].push(tgt);
            adj[tgt as usize].push(id);
        }
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::from([0u32]);
    dist[0] = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v as usize] {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = dist[v as usize] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Rooted-ball distance 1/(1+s): s is the largest radius at which the
/// induced balls around the root, with marks, coincide. Identical graphs
/// give 0. Computed by scanning discrepancies and taking the smallest
/// radius at which one becomes visible.
pub fn graph_distance(a: &ProcessState, b: &ProcessState) -> f64 {
    let da = undirected_distances(a);
    let db = undirected_distances(b);
    let na = a.vertex_count();
    let nb = b.vertex_count();
    let common = na.min(nb);
    let mut first_diff = u32::MAX;
    let mut note = |radius: u32| {
        if radius < first_diff {
            first_diff = radius;
        }
    };
    for id in common..na {
        if da[id as usize] != u32::MAX {
            note(da[id as usize]);
        }
    }
    for id in common..nb {
        if db[id as usize] != u32::MAX {
            note(db[id as usize]);
        }
    }
    for id in 0..common {
        let (ra, rb) = (da[id as usize], db[id as usize]);
        if ra == u32::MAX && rb == u32::MAX {
            continue;
        }
        if ra != rb || a.mark_of(id) != b.mark_of(id) {
            note(ra.min(rb));
            continue;
        }
        // same placement in both: any asymmetric edge shows up when
        // both endpoints enter the ball
        let (ta, tb) = (a.out_targets(id), b.out_targets(id));
        if ta != tb {
            let (mut i, mut j) = (0, 0);
            while i < ta.len() || j < tb.len() {
                match (ta.get(i), tb.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                    }
                    (Some(&x), y) if y.is_none() || x < *y.unwrap() => {
                        note(ra.max(da[x as usize]));
                        i += 1;
                    }
                    (_, Some(&y)) => {
                        note(rb.max(db[y as usize]));
                        j += 1;
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    if first_diff == u32::MAX {
        0.0
    } else {
        1.0 / first_diff as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PhaseClass {
    DivergingLeaves,
    Ambiguous,
    Recurrent,
}

impl PhaseClass {
    /// Order along the expected transition: diverging < ambiguous <
    /// recurrent.
    pub fn rank(self) -> u8 {
        match self {
            PhaseClass::DivergingLeaves => 0,
            PhaseClass::Ambiguous => 1,
            PhaseClass::Recurrent => 2,
        }
    }
}

pub fn classify_phase(exponent: f64, tail_hits: u64) -> PhaseClass {
    if tail_hits == 0 && exponent > DIVERGENCE_EXPONENT_THRESHOLD {
        PhaseClass::DivergingLeaves
    } else if tail_hits > 0 && exponent < DIVERGENCE_EXPONENT_THRESHOLD {
        PhaseClass::Recurrent
    } else {
        PhaseClass::Ambiguous
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub exponent: f64,
    pub tail_hits: u64,
    pub max_leaves: u32,
    pub class: PhaseClass,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepBattery {
    pub seed: u64,
    pub cells: Vec<SweepCell>,
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub horizon: u32,
    pub k: u32,
    pub alphas: Vec<f64>,
    pub batteries: Vec<SweepBattery>,
    pub monotone_batteries: u32,
    /// Per alpha, the majority classification across batteries.
    pub majority: Vec<PhaseClass>,
}

/// Sweep the mixing weight of the state-varying rule over one trace per
/// battery, classifying each point by leaf-growth exponent and late
/// single-leaf regenerations.
pub fn phase_transition_sweep(
    model: &DelayModel,
    k: u32,
    alphas: &[f64],
    horizon: u32,
    batteries: u32,
    seed_base: u64,
) -> SweepReport {
    assert!(alphas.windows(2).all(|w| w[0] < w[1]), "alphas must ascend");
    let battery_rows: Vec<SweepBattery> = (0..batteries)
        .into_par_iter()
        .map(|b| {
            let seed = seed_base + b as u64;
            let trace = Trace::sample(model, horizon, seed);
            let regen = detect_regeneration_intervals(
                &trace,
                model,
                crate::delay::DEFAULT_CENSOR_EPS,
            )
            .expect("interval detection accepts any law");
            let cells: Vec<SweepCell> = alphas
                .iter()
                .map(|&alpha| {
                    let spec = ConstructionSpec::StateVarying { k, alpha };
                    let st = run_with_trace(&trace, &spec, &G0Spec::SingleRoot).unwrap();
                    let exponent =
                        leaf_exponent_of_series(st.leaf_series(), FIT_WINDOW_START).slope;
                    let tail_hits = regen
                        .times
                        .iter()
                        .filter(|&&t| {
                            t >= FIT_WINDOW_START && st.leaf_series()[t as usize] == 1
                        })
                        .count() as u64;
                    let max_leaves = *st.leaf_series().iter().max().unwrap();
                    SweepCell {
                        alpha,
                        exponent,
                        tail_hits,
                        max_leaves,
                        class: classify_phase(exponent, tail_hits),
                    }
                })
                .collect();
            let monotone = cells
                .windows(2)
                .all(|w| w[1].class.rank() >= w[0].class.rank());
            SweepBattery { seed, cells, monotone }
        })
        .collect();
    let monotone_batteries = battery_rows.iter().filter(|b| b.monotone).count() as u32;
    let majority: Vec<PhaseClass> = (0..alphas.len())
        .map(|i| {
            let mut counts = [0u32; 3];
            for b in &battery_rows {
                counts[b.cells[i].class.rank() as usize] += 1;
            }
            let best = (0..3).max_by_key(|&r| counts[r]).unwrap();
            if counts.iter().filter(|&&c| c == counts[best]).count() > 1 {
                PhaseClass::Ambiguous
            } else {
                match best {
                    0 => PhaseClass::DivergingLeaves,
                    2 => PhaseClass::Recurrent,
                    _ => PhaseClass::Ambiguous,
                }
            }
        })
        .collect();
    SweepReport {
        horizon,
        k,
        alphas: alphas.to_vec(),
        batteries: battery_rows,
        monotone_batteries,
        majority,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayModel, DelaySpec, DEFAULT_CENSOR_EPS};
    use crate::engine::run;
    use crate::height::height_recursion;
    use crate::regen::detect_regeneration_times;

    fn geo(p: f64) -> DelayModel {
        DelayModel::new(DelaySpec::Geometric(p)).unwrap()
    }

    fn det(c: u32) -> DelayModel {
        DelayModel::new(DelaySpec::Deterministic(c)).unwrap()
    }

    #[test]
    fn chain_confirms_everything() {
        let st = run(&det(1), &ConstructionSpec::AllLeaves, 50, 0).unwrap().state;
        let conf = confirmed_exact(&st, 5).unwrap();
        assert_eq!(conf.count(), 51);
        assert_eq!(conf.cutoff_mark(), 45);
    }

    #[test]
    fn unreferenced_initial_leaves_are_not_confirmed() {
        let g0 = G0Spec::Explicit { vertex_count: 3, edges: vec![(1, 0), (2, 0)] };
        let tr = Trace::sample(&det(1), 40, 0);
        let st = run_with_trace(&tr, &ConstructionSpec::TwoEndedExample, &g0).unwrap();
        let conf = confirmed_exact(&st, 0).unwrap();
        assert!(conf.contains_id(0));
        assert!(!conf.contains_id(1));
        assert!(!conf.contains_id(2));
        // the two-ended rule splits the future into parity chains, so no
        // late vertex is referenced by everyone
        assert!(conf.count() < 8);
    }

    #[test]
    fn confirmation_is_antitone_in_the_margin() {
        let st = run(&geo(0.75), &ConstructionSpec::KLeaves(2), 800, 3).unwrap().state;
        let tight = confirmed_exact(&st, 0).unwrap();
        let mid = confirmed_exact(&st, 10).unwrap();
        let loose = confirmed_exact(&st, 50).unwrap();
        for id in 0..st.vertex_count() {
            if tight.contains_id(id) {
                assert!(mid.contains_id(id), "margin 10 dropped {id}");
            }
            if mid.contains_id(id) {
                assert!(loose.contains_id(id), "margin 50 dropped {id}");
            }
        }
        assert!(tight.count() <= mid.count() && mid.count() <= loose.count());
    }

    #[test]
    fn single_leaf_growth_confirms_only_a_sparse_prefix() {
        let model = geo(0.5);
        let rr = run(&model, &ConstructionSpec::KLeaves(1), 2000, 1).unwrap();
        let w = model.censor_margin(DEFAULT_CENSOR_EPS);
        let conf = confirmed_exact(&rr.state, w).unwrap();
        let non_vacuous = conf
            .confirmed_ids()
            .iter()
            .filter(|&&id| rr.state.mark_of(id) <= conf.cutoff_mark())
            .count();
        let leaves_at_end = *rr.state.leaf_series().last().unwrap() as usize;
        assert!(
            non_vacuous < leaves_at_end,
            "{non_vacuous} confirmed vs {leaves_at_end} leaves"
        );
    }

    #[test]
    fn exact_confirmation_refuses_large_horizons() {
        let st = run(&det(1), &ConstructionSpec::AllLeaves, 20_001, 0).unwrap().state;
        assert!(matches!(
            confirmed_exact(&st, 0),
            Err(AnalysisError::HorizonTooLargeForExact { .. })
        ));
    }

    #[test]
    fn synchronous_anchors_are_every_interior_time() {
        let model = det(1);
        let tr = Trace::sample(&model, 30, 0);
        let h = height_recursion(&tr);
        let rep = detect_regeneration_times(&tr, &model, DEFAULT_CENSOR_EPS).unwrap();
        let anchors = anchor_times(&h, &rep).unwrap();
        assert_eq!(anchors, (1..30).collect::<Vec<u32>>());
    }

    #[test]
    fn no_regenerations_means_no_anchors() {
        let model = geo(0.5);
        let tr = Trace::from_xi(0, vec![3, 3, 2]);
        let h = height_recursion(&tr);
        let rep = detect_regeneration_times(&tr, &model, DEFAULT_CENSOR_EPS).unwrap();
        assert!(rep.times.is_empty());
        assert_eq!(anchor_times(&h, &rep).unwrap(), Vec::<u32>::new());

        let other = height_recursion(&Trace::sample(&model, 50, 1));
        assert!(matches!(
            anchor_times(&other, &rep),
            Err(AnalysisError::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn anchor_vertices_are_confirmed() {
        let model = geo(0.5);
        for seed in 0..3 {
            let rr = run(&model, &ConstructionSpec::Nakamoto, 2000, seed).unwrap();
            let h = height_recursion(&rr.trace);
            let rep =
                detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
            let anchors = anchor_times(&h, &rep).unwrap();
            assert!(anchors.len() > 50, "few anchors: {}", anchors.len());
            let conf =
                confirmed_exact(&rr.state, model.censor_margin(DEFAULT_CENSOR_EPS)).unwrap();
            for &t in &anchors {
                assert!(
                    conf.contains_id(rr.state.id_of_mark(t)),
                    "anchor {t} unconfirmed (seed {seed})"
                );
            }
        }
    }

    #[test]
    fn single_leaf_hits_are_cut_vertices() {
        let model = geo(0.75);
        for seed in 0..3 {
            let rr = run(&model, &ConstructionSpec::KLeaves(2), 2000, seed).unwrap();
            let rep =
                detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
            let hits = single_leaf_hitting(&rr.state, &rep).unwrap();
            assert!(hits.len() > 50, "few hits: {}", hits.len());
            let conf =
                confirmed_exact(&rr.state, model.censor_margin(DEFAULT_CENSOR_EPS)).unwrap();
            for &t in &hits {
                assert!(
                    conf.contains_id(rr.state.id_of_mark(t)),
                    "hit {t} unconfirmed (seed {seed})"
                );
            }
        }
    }

    #[test]
    fn synchronous_chain_hits_every_certified_time() {
        let model = det(1);
        let rr = run(&model, &ConstructionSpec::AllLeaves, 100, 0).unwrap();
        let rep = detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
        let hits = single_leaf_hitting(&rr.state, &rep).unwrap();
        assert_eq!(hits, rep.times);
    }

    #[test]
    fn monotone_leaf_growth_never_revisits_one() {
        let model = geo(0.5);
        let rr = run(&model, &ConstructionSpec::KLeaves(1), 30_000, 2).unwrap();
        let rep = detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
        let hits = single_leaf_hitting(&rr.state, &rep).unwrap();
        assert!(hits.iter().all(|&t| t < 1000));
    }

    #[test]
    fn drift_of_monotone_leaf_growth_is_non_negative() {
        let model = geo(0.5);
        let rr = run(&model, &ConstructionSpec::KLeaves(1), 20_000, 4).unwrap();
        let rep = detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
        let drift = foster_drift(&rr.state, &rep).unwrap();
        for (level, count, mean) in drift.levels() {
            assert!(mean >= 0.0, "level {level} ({count} samples) has mean {mean}");
        }
        assert_eq!(drift.total_pairs() as usize, rep.times.len() - 1);
    }

    #[test]
    fn two_leaf_rule_pulls_high_levels_down() {
        let model = geo(0.75);
        let mut pooled = DriftReport { r: 1, levels: BTreeMap::new() };
        for seed in 0..4 {
            let rr = run(&model, &ConstructionSpec::KLeaves(2), 100_000, seed).unwrap();
            let rep =
                detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
            pooled.merge(&foster_drift(&rr.state, &rep).unwrap());
        }
        // level 1 drift is strictly positive (the count cannot drop),
        // so at stationarity everything above it must pull down
        let high = pooled.pooled_at_or_above(2);
        assert!(high.count > 100, "only {} high-level samples", high.count);
        assert!(
            high.negative_excluding_zero(),
            "drift at >=2: mean {} +- {}",
            high.mean,
            high.ci_half_width
        );
        assert!(!pooled.dyadic_bands().is_empty());
    }

    #[test]
    fn empty_pool_is_reported_as_such() {
        let model = det(1);
        let rr = run(&model, &ConstructionSpec::AllLeaves, 100, 0).unwrap();
        let rep = detect_regeneration_times(&rr.trace, &model, DEFAULT_CENSOR_EPS).unwrap();
        let drift = foster_drift(&rr.state, &rep).unwrap();
        let pooled = drift.pooled_at_or_above(20);
        assert_eq!(pooled.count, 0);
        assert!(!pooled.negative_excluding_zero());
        assert_eq!(drift.max_level(), Some(1));
    }

    #[test]
    fn leaf_growth_slope_is_near_square_root() {
        let rep = leaf_growth_exponent(&geo(0.5), 100_000, 6, 0);
        assert!(
            rep.fit.slope > 0.4 && rep.fit.slope < 0.6,
            "slope {}",
            rep.fit.slope
        );
        assert!(rep.bound_ok);
        assert!(!rep.degenerate);

        let flat = leaf_growth_exponent(&det(1), 2000, 2, 0);
        assert!(flat.degenerate);
        assert!(flat.fit.slope.abs() < 1e-9);
    }

    #[test]
    fn coupled_runs_agree_at_least_as_long_as_the_leaf_bound() {
        let rep = commuting_check(&geo(0.75), 2000, 11, &[2, 4, 8, 16]);
        assert!(rep.bounds_hold(), "{:?}", rep.rows);
        assert!(rep.d_star_non_increasing(), "{:?}", rep.rows);
        assert!(rep.equality_horizon_non_decreasing(), "{:?}", rep.rows);
        // a j beyond any observed leaf count reproduces take-all exactly
        let top = commuting_check(&geo(0.75), 2000, 11, &[2001]);
        assert_eq!(top.rows[0].equality_horizon, 2000);
        assert_eq!(top.rows[0].d_star, 0.0);
    }

    #[test]
    fn ball_metric_hand_examples() {
        let a = run(&det(1), &ConstructionSpec::AllLeaves, 5, 0).unwrap().state;
        let b = run(&det(1), &ConstructionSpec::AllLeaves, 7, 0).unwrap().state;
        let c = run(&det(1), &ConstructionSpec::AllLeaves, 5, 1).unwrap().state;
        assert_eq!(graph_distance(&a, &c), 0.0);
        assert!((graph_distance(&a, &b) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(graph_distance(&b, &a), graph_distance(&a, &b));

        let root_only = run(&det(1), &ConstructionSpec::AllLeaves, 0, 0).unwrap().state;
        assert_eq!(graph_distance(&root_only, &a), 1.0);
    }

    #[test]
    fn ball_metric_is_an_ultrametric_on_varied_runs() {
        let model = geo(0.5);
        let specs = [
            ConstructionSpec::KLeaves(1),
            ConstructionSpec::KLeaves(2),
            ConstructionSpec::AllLeaves,
            ConstructionSpec::Nakamoto,
        ];
        let mut states = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            for seed in 0..3u64 {
                states.push(run(&model, spec, 30 + 5 * i as u32, seed).unwrap().state);
            }
        }
        for x in &states {
            for y in &states {
                let dxy = graph_distance(x, y);
                assert!((graph_distance(y, x) - dxy).abs() < 1e-15);
                for z in &states {
                    let dxz = graph_distance(x, z);
                    let dzy = graph_distance(z, y);
                    assert!(
                        dxy <= dxz.max(dzy) + 1e-15,
                        "ultrametric violated: {dxy} > max({dxz}, {dzy})"
                    );
                }
            }
        }
    }

    #[test]
    fn sweep_extremes_classify_as_expected() {
        let rep = phase_transition_sweep(&geo(0.75), 2, &[0.0, 100.0], 20_000, 2, 0);
        for battery in &rep.batteries {
            assert_eq!(battery.cells[0].class, PhaseClass::DivergingLeaves);
            assert_eq!(battery.cells[1].class, PhaseClass::Recurrent);
            assert!(battery.monotone);
        }
        assert_eq!(rep.monotone_batteries, 2);
        assert_eq!(rep.majority[0], PhaseClass::DivergingLeaves);
        assert_eq!(rep.majority[1], PhaseClass::Recurrent);
    }
}
