//! The growth process: vertex t attaches to the selection made from the
//! delayed snapshot G_{(t - xi_t)_+}, with edges always pointing from
//! newer to older vertices.
//!
//! Internal ids run 0..n: the initial vertices take ids 0..n0 (all marked
//! 0, id 0 is the distinguished root) and the vertex created at time t
//! takes id n0 - 1 + t with mark t. Id order therefore equals mark order.
//!
//! Snapshots are answered retrospectively from cover times instead of
//! storing per-time leaf sets: a vertex is a leaf of G_s exactly when it
//! exists at s and its first in-neighbor arrived after s.

use crate::construction::{select, ConstructionSpec, SelectError, SnapshotAccess};
use crate::delay::DelayModel;
use crate::fenwick::PresenceTree;
use crate::trace::Trace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNCOVERED: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum G0Spec {
    SingleRoot,
    /// Explicit initial DAG on ids 0..vertex_count, all marked 0; edges
    /// are (source, target) pairs; id 0 must be the unique sink.
    Explicit { vertex_count: u32, edges: Vec<(u32, u32)> },
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("malformed initial graph: {0}")]
    MalformedInitialGraph(String),
    #[error("snapshot time {requested} is past the current time {now}")]
    FutureSnapshot { requested: u32, now: u32 },
    #[error(transparent)]
    Selection(#[from] SelectError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessState {
    n0: u32,
    time: u32,
    edge_offsets: Vec<u32>,
    edge_targets: Vec<u32>,
    cover_time: Vec<u32>,
    depth: Vec<u32>,
    leaf_series: Vec<u32>,
    max_depth_series: Vec<u32>,
    /// (cover time, id), ascending in time, ids ascending within a time.
    cover_events: Vec<(u32, u32)>,
    /// Ids at each depth, ascending.
    depth_buckets: Vec<Vec<u32>>,
    /// Ids currently uncovered.
    uncovered: PresenceTree,
}

fn validate_initial(
    vertex_count: u32,
    edges: &[(u32, u32)],
) -> Result<Vec<Vec<u32>>, EngineError> {
    let bad = |msg: String| Err(EngineError::MalformedInitialGraph(msg));
    if vertex_count == 0 {
        return bad("no vertices".into());
    }
    let n = vertex_count as usize;
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(src, dst) in edges {
        if src as usize >= n || dst as usize >= n {
            return bad(format!("edge ({src},{dst}) out of range"));
        }
        if src == dst {
            return bad(format!("self-loop at {src}"));
        }
        out[src as usize].push(dst);
    }
    for (id, targets) in out.iter_mut().enumerate() {
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[0] == w[1]) {
            return bad(format!("duplicate edge from {id}"));
        }
    }
    if !out[0].is_empty() {
        return bad("root must have no outgoing edges".into());
    }
    for (id, targets) in out.iter().enumerate().skip(1) {
        if targets.is_empty() {
            return bad(format!("vertex {id} has no outgoing edge"));
        }
    }
    // cycle check: every vertex must drain to the root
    let mut in_adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut pending: Vec<u32> = out.iter().map(|t| t.len() as u32).collect();
    for (src, targets) in out.iter().enumerate() {
        for &dst in targets {
            in_adj[dst as usize].push(src as u32);
        }
    }
    let mut queue = vec![0u32];
    let mut seen = 1;
    while let Some(v) = queue.pop() {
        for &u in &in_adj[v as usize] {
            pending[u as usize] -= 1;
            if pending[u as usize] == 0 {
                seen += 1;
                queue.push(u);
            }
        }
    }
    if seen != n {
        return bad("initial edges contain a cycle".into());
    }
    Ok(out)
}

impl ProcessState {
    fn init(g0: &G0Spec, horizon: u32) -> Result<ProcessState, EngineError> {
        let out: Vec<Vec<u32>> = match g0 {
            G0Spec::SingleRoot => vec![Vec::new()],
            G0Spec::Explicit { vertex_count, edges } => {
                validate_initial(*vertex_count, edges)?
            }
        };
        let n0 = out.len() as u32;
        let capacity = (n0 + horizon) as usize;

        let mut cover_time = vec![UNCOVERED; n0 as usize];
        for targets in &out {
            for &dst in targets {
                cover_time[dst as usize] = 0;
            }
        }

        // depth in dependency order: a vertex is ready once all targets are
        let mut depth = vec![0u32; n0 as usize];
        let mut pending: Vec<u32> = out.iter().map(|t| t.len() as u32).collect();
        let mut in_adj: Vec<Vec<u32>> = vec![Vec::new(); n0 as usize];
        for (src, targets) in out.iter().enumerate() {
            for &dst in targets {
                in_adj[dst as usize].push(src as u32);
            }
        }
        let mut ready: Vec<u32> = (0..n0).filter(|&v| pending[v as usize] == 0).collect();
        while let Some(v) = ready.pop() {
            depth[v as usize] = out[v as usize]
                .iter()
                .map(|&d| depth[d as usize] + 1)
                .max()
                .unwrap_or(0);
            for &u in &in_adj[v as usize] {
                pending[u as usize] -= 1;
                if pending[u as usize] == 0 {
                    ready.push(u);
                }
            }
        }

        let mut edge_offsets = Vec::with_capacity(capacity + 1);
        let mut edge_targets = Vec::new();
        edge_offsets.push(0);
        for targets in &out {
            edge_targets.extend_from_slice(targets);
            edge_offsets.push(edge_targets.len() as u32);
        }

        let mut uncovered = PresenceTree::new(capacity);
        let mut cover_events = Vec::new();
        for id in 0..n0 {
            if cover_time[id as usize] == UNCOVERED {
                uncovered.insert(id);
            } else {
                cover_events.push((0, id));
            }
        }

        let max_depth0 = depth.iter().copied().max().unwrap();
        let mut depth_buckets: Vec<Vec<u32>> = vec![Vec::new(); max_depth0 as usize + 1];
        for id in 0..n0 {
            depth_buckets[depth[id as usize] as usize].push(id);
        }

        Ok(ProcessState {
            n0,
            time: 0,
            edge_offsets,
            edge_targets,
            leaf_series: vec![uncovered.len()],
            max_depth_series: vec![max_depth0],
            cover_time,
            depth,
            cover_events,
            depth_buckets,
            uncovered,
        })
    }

    pub fn initial_vertex_count(&self) -> u32 {
        self.n0
    }

    /// Steps completed so far.
    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn vertex_count(&self) -> u32 {
        self.n0 + self.time
    }

    pub fn mark_of(&self, id: u32) -> u32 {
        id.saturating_sub(self.n0 - 1)
    }

    pub fn id_of_mark(&self, mark: u32) -> u32 {
        if mark == 0 {
            0
        } else {
            self.n0 - 1 + mark
        }
    }

    /// L_0..L_T.
    pub fn leaf_series(&self) -> &[u32] {
        &self.leaf_series
    }

    /// Max depth of G_s for s = 0..T.
    pub fn max_depth_series(&self) -> &[u32] {
        &self.max_depth_series
    }

    pub fn depth_of(&self, id: u32) -> u32 {
        self.depth[id as usize]
    }

    pub fn cover_time_of(&self, id: u32) -> Option<u32> {
        match self.cover_time[id as usize] {
            UNCOVERED => None,
            t => Some(t),
        }
    }

    pub fn out_targets(&self, id: u32) -> &[u32] {
        let lo = self.edge_offsets[id as usize] as usize;
        let hi = self.edge_offsets[id as usize + 1] as usize;
        &self.edge_targets[lo..hi]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_targets.len()
    }

    fn id_end(&self, s: u32) -> u32 {
        self.n0 + s
    }

    pub fn snapshot(&self, s: u32) -> Result<SnapshotView<'_>, EngineError> {
        if s > self.time {
            return Err(EngineError::FutureSnapshot { requested: s, now: self.time });
        }
        let id_end = self.id_end(s);
        // events strictly after s cover vertices that were still leaves at s
        let from = self.cover_events.partition_point(|&(t, _)| t <= s);
        let mut later_covered: Vec<u32> = self.cover_events[from..]
            .iter()
            .map(|&(_, id)| id)
            .filter(|&id| id < id_end)
            .collect();
        later_covered.sort_unstable();
        let leaf_count = id_end - from as u32;
        debug_assert_eq!(
            leaf_count,
            self.uncovered.rank(id_end) + later_covered.len() as u32
        );
        Ok(SnapshotView { state: self, s, id_end, leaf_count, later_covered })
    }

    fn step(
        &mut self,
        trace: &Trace,
        t: u32,
        spec: &ConstructionSpec,
    ) -> Result<(), EngineError> {
        let s = t.saturating_sub(trace.xi(t));
        let targets = {
            let view = self.snapshot(s)?;
            let mut rng = trace.theta_stream(t);
            select(spec, &view, &mut rng)?
        };

        let new_id = self.n0 - 1 + t;
        let mut newly_covered = 0;
        let mut new_depth = 0;
        for &tgt in &targets {
            self.edge_targets.push(tgt);
            new_depth = new_depth.max(self.depth[tgt as usize] + 1);
            if self.cover_time[tgt as usize] == UNCOVERED {
                self.cover_time[tgt as usize] = t;
                self.uncovered.remove(tgt);
                self.cover_events.push((t, tgt));
                newly_covered += 1;
            }
        }
        self.edge_offsets.push(self.edge_targets.len() as u32);
        self.cover_time.push(UNCOVERED);
        self.depth.push(new_depth);
        if new_depth as usize >= self.depth_buckets.len() {
            self.depth_buckets.push(Vec::new());
        }
        self.depth_buckets[new_depth as usize].push(new_id);
        self.uncovered.insert(new_id);

        let prev_leaves = self.leaf_series[t as usize - 1];
        self.leaf_series.push(prev_leaves + 1 - newly_covered);
        let prev_depth = self.max_depth_series[t as usize - 1];
        self.max_depth_series.push(prev_depth.max(new_depth));
        self.time = t;
        Ok(())
    }
}

/// View of G_s answering the selection queries.
pub struct SnapshotView<'a> {
    state: &'a ProcessState,
    s: u32,
    id_end: u32,
    leaf_count: u32,
    /// Ids in G_s covered only after s, ascending.
    later_covered: Vec<u32>,
}

impl SnapshotView<'_> {
    /// Leaves of G_s with id <= bound.
    fn leaves_through(&self, id: u32) -> u32 {
        let lim = (id + 1).min(self.id_end);
        let in_b = self.later_covered.partition_point(|&b| b < lim) as u32;
        self.state.uncovered.rank(lim) + in_b
    }

    pub fn leaf_ids(&self) -> Vec<u32> {
        (0..self.leaf_count).map(|j| self.leaf_id(j)).collect()
    }
}

impl SnapshotAccess for SnapshotView<'_> {
    fn time(&self) -> u32 {
        self.s
    }

    fn leaf_count(&self) -> u32 {
        self.leaf_count
    }

    fn leaf_id(&self, j: u32) -> u32 {
        debug_assert!(j < self.leaf_count);
        let mut lo = 0u32;
        let mut hi = self.id_end - 1;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.leaves_through(mid) >= j + 1 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    fn deepest_count(&self) -> u32 {
        let d = self.state.max_depth_series[self.s as usize] as usize;
        self.state.depth_buckets[d].partition_point(|&id| id < self.id_end) as u32
    }

    fn deepest_id(&self, j: u32) -> u32 {
        let d = self.state.max_depth_series[self.s as usize] as usize;
        self.state.depth_buckets[d][j as usize]
    }

    fn id_with_mark(&self, mark: u32) -> u32 {
        debug_assert!(mark <= self.s);
        self.state.id_of_mark(mark)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: ProcessState,
    pub trace: Trace,
}

/// Run the recursion over an existing trace.
pub fn run_with_trace(
    trace: &Trace,
    spec: &ConstructionSpec,
    g0: &G0Spec,
) -> Result<ProcessState, EngineError> {
    let mut state = ProcessState::init(g0, trace.horizon())?;
    for t in 1..=trace.horizon() {
        state.step(trace, t, spec)?;
    }
    Ok(state)
}

/// Sample a fresh trace and run, starting from a single root.
pub fn run(
    model: &DelayModel,
    spec: &ConstructionSpec,
    horizon: u32,
    seed: u64,
) -> Result<RunResult, EngineError> {
    let trace = Trace::sample(model, horizon, seed);
    let state = run_with_trace(&trace, spec, &G0Spec::SingleRoot)?;
    Ok(RunResult { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayModel, DelaySpec};

    fn geo(p: f64) -> DelayModel {
        DelayModel::new(DelaySpec::Geometric(p)).unwrap()
    }

    fn det(c: u32) -> DelayModel {
        DelayModel::new(DelaySpec::Deterministic(c)).unwrap()
    }

    #[test]
    fn single_root_init() {
        let st = ProcessState::init(&G0Spec::SingleRoot, 10).unwrap();
        assert_eq!(st.vertex_count(), 1);
        assert_eq!(st.leaf_series(), &[1]);
        assert_eq!(st.max_depth_series(), &[0]);
        assert_eq!(st.depth_of(0), 0);
        assert_eq!(st.cover_time_of(0), None);
    }

    #[test]
    fn star_init_has_two_leaves() {
        let g0 = G0Spec::Explicit { vertex_count: 3, edges: vec![(1, 0), (2, 0)] };
        let st = ProcessState::init(&g0, 10).unwrap();
        assert_eq!(st.leaf_series(), &[2]);
        assert_eq!(st.cover_time_of(0), Some(0));
        assert_eq!(st.depth_of(1), 1);
        assert_eq!(st.max_depth_series(), &[1]);
        let view = st.snapshot(0).unwrap();
        assert_eq!(view.leaf_ids(), vec![1, 2]);
    }

    #[test]
    fn malformed_initial_graphs_are_rejected() {
        let cyclic = G0Spec::Explicit {
            vertex_count: 3,
            edges: vec![(1, 2), (2, 1), (1, 0), (2, 0)],
        };
        assert!(matches!(
            ProcessState::init(&cyclic, 5),
            Err(EngineError::MalformedInitialGraph(_))
        ));
        let dangling = G0Spec::Explicit { vertex_count: 2, edges: vec![] };
        assert!(ProcessState::init(&dangling, 5).is_err());
        let rooted_wrong = G0Spec::Explicit { vertex_count: 2, edges: vec![(0, 1)] };
        assert!(ProcessState::init(&rooted_wrong, 5).is_err());
        let out_of_range = G0Spec::Explicit { vertex_count: 2, edges: vec![(1, 5)] };
        assert!(ProcessState::init(&out_of_range, 5).is_err());
    }

    #[test]
    fn hand_stepped_two_vertex_run() {
        // delays [1,2]: step 2 looks back to G_0 and re-selects the root
        let tr = Trace::from_xi(0, vec![1, 2]);
        let st = run_with_trace(&tr, &ConstructionSpec::KLeaves(1), &G0Spec::SingleRoot)
            .unwrap();
        assert_eq!(st.out_targets(1), &[0]);
        assert_eq!(st.out_targets(2), &[0]);
        assert_eq!(st.leaf_series(), &[1, 1, 2]);
        assert_eq!(st.cover_time_of(0), Some(1));
        assert_eq!(st.snapshot(1).unwrap().leaf_ids(), vec![1]);
        assert_eq!(st.snapshot(2).unwrap().leaf_ids(), vec![1, 2]);
    }

    #[test]
    fn synchronous_all_leaves_is_a_chain() {
        let st = run(&det(1), &ConstructionSpec::AllLeaves, 10, 0).unwrap().state;
        for t in 1..=10u32 {
            assert_eq!(st.out_targets(t), &[t - 1]);
        }
        assert!(st.leaf_series().iter().all(|&l| l == 1));
        assert_eq!(st.max_depth_series()[10], 10);
    }

    #[test]
    fn synchronous_nakamoto_adds_one_level_per_step() {
        let st = run(&det(1), &ConstructionSpec::Nakamoto, 100, 5).unwrap().state;
        let expect: Vec<u32> = (0..=100).collect();
        assert_eq!(st.max_depth_series(), expect.as_slice());
    }

    #[test]
    fn nakamoto_runs_are_trees() {
        for seed in 0..5 {
            let st = run(&geo(0.5), &ConstructionSpec::Nakamoto, 500, seed).unwrap().state;
            for id in 1..st.vertex_count() {
                assert_eq!(st.out_targets(id).len(), 1, "vertex {id}");
            }
        }
    }

    #[test]
    fn leaf_count_stays_positive_and_f1_is_monotone() {
        let st = run(&geo(0.5), &ConstructionSpec::KLeaves(1), 3000, 9).unwrap().state;
        assert!(st.leaf_series().iter().all(|&l| l >= 1));
        assert!(st.leaf_series().windows(2).all(|w| w[1] >= w[0]));

        let st2 = run(&geo(0.75), &ConstructionSpec::KLeaves(2), 3000, 9).unwrap().state;
        assert!(st2.leaf_series().iter().all(|&l| l >= 1));
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = ConstructionSpec::KLeaves(2);
        let a = run(&geo(0.75), &spec, 1000, 42).unwrap();
        let b = run(&geo(0.75), &spec, 1000, 42).unwrap();
        assert_eq!(a.state, b.state);
        let c = run(&geo(0.75), &spec, 1000, 43).unwrap();
        assert_ne!(a.state, c.state);
    }

    /// Replays a run with per-query full scans instead of the indexed
    /// snapshot structures; selections must agree draw for draw.
    struct NaiveRun {
        n0: u32,
        out: Vec<Vec<u32>>,
        cover: Vec<u32>,
        depth: Vec<u32>,
        leaf_series: Vec<u32>,
    }

    struct NaiveView<'a> {
        run: &'a NaiveRun,
        s: u32,
        leaves: Vec<u32>,
        deepest: Vec<u32>,
    }

    impl SnapshotAccess for NaiveView<'_> {
        fn time(&self) -> u32 {
            self.s
        }
        fn leaf_count(&self) -> u32 {
            self.leaves.len() as u32
        }
        fn leaf_id(&self, j: u32) -> u32 {
            self.leaves[j as usize]
        }
        fn deepest_count(&self) -> u32 {
            self.deepest.len() as u32
        }
        fn deepest_id(&self, j: u32) -> u32 {
            self.deepest[j as usize]
        }
        fn id_with_mark(&self, mark: u32) -> u32 {
            if mark == 0 {
                0
            } else {
                self.run.n0 - 1 + mark
            }
        }
    }

    impl NaiveRun {
        fn new() -> Self {
            NaiveRun {
                n0: 1,
                out: vec![Vec::new()],
                cover: vec![u32::MAX],
                depth: vec![0],
                leaf_series: vec![1],
            }
        }

        fn view(&self, s: u32) -> NaiveView<'_> {
            let id_end = self.n0 + s;
            let leaves: Vec<u32> = (0..id_end)
                .filter(|&id| self.cover[id as usize] > s)
                .collect();
            let dmax = (0..id_end).map(|id| self.depth[id as usize]).max().unwrap();
            let deepest: Vec<u32> = (0..id_end)
                .filter(|&id| self.depth[id as usize] == dmax)
                .collect();
            NaiveView { run: self, s, leaves, deepest }
        }

        fn run(trace: &Trace, spec: &ConstructionSpec) -> NaiveRun {
            let mut me = NaiveRun::new();
            for t in 1..=trace.horizon() {
                let s = t.saturating_sub(trace.xi(t));
                let targets = {
                    let view = me.view(s);
                    let mut rng = trace.theta_stream(t);
                    select(spec, &view, &mut rng).unwrap()
                };
                let mut covered = 0;
                let mut d = 0;
                for &tgt in &targets {
                    d = d.max(me.depth[tgt as usize] + 1);
                    if me.cover[tgt as usize] == u32::MAX {
                        me.cover[tgt as usize] = t;
                        covered += 1;
                    }
                }
                me.out.push(targets);
                me.cover.push(u32::MAX);
                me.depth.push(d);
                let prev = me.leaf_series[t as usize - 1];
                me.leaf_series.push(prev + 1 - covered);
            }
            me
        }
    }

    #[test]
    fn indexed_snapshots_match_full_scans() {
        for (spec, seed) in [
            (ConstructionSpec::KLeaves(1), 1u64),
            (ConstructionSpec::KLeaves(2), 2),
            (ConstructionSpec::AllLeaves, 3),
            (ConstructionSpec::Nakamoto, 4),
            (ConstructionSpec::TwoEndedExample, 5),
            (ConstructionSpec::StateVarying { k: 2, alpha: 1.0 }, 6),
        ] {
            let tr = Trace::sample(&geo(0.5), 200, seed);
            let fast = run_with_trace(&tr, &spec, &G0Spec::SingleRoot).unwrap();
            let naive = NaiveRun::run(&tr, &spec);
            assert_eq!(fast.leaf_series(), naive.leaf_series.as_slice(), "{spec:?}");
            for id in 1..fast.vertex_count() {
                assert_eq!(fast.out_targets(id), naive.out[id as usize], "{spec:?} {id}");
            }
            for s in 0..=200u32 {
                let view = fast.snapshot(s).unwrap();
                let nview = naive.view(s);
                assert_eq!(view.leaf_ids(), nview.leaves, "{spec:?} s={s}");
                assert_eq!(view.deepest_count(), nview.deepest.len() as u32);
                for j in 0..view.deepest_count() {
                    assert_eq!(view.deepest_id(j), nview.deepest[j as usize]);
                }
            }
        }
    }

    #[test]
    fn snapshot_of_the_future_is_an_error() {
        let st = run(&det(1), &ConstructionSpec::AllLeaves, 5, 0).unwrap().state;
        assert!(matches!(
            st.snapshot(6),
            Err(EngineError::FutureSnapshot { requested: 6, now: 5 })
        ));
    }

    #[test]
    fn take_all_coupling_holds_while_leaf_count_stays_below_k() {
        // shared trace: KLeaves(j) and AllLeaves agree exactly while the
        // running max leaf count of the take-all run stays <= j
        let tr = Trace::sample(&geo(0.75), 2000, 12);
        let all = run_with_trace(&tr, &ConstructionSpec::AllLeaves, &G0Spec::SingleRoot)
            .unwrap();
        let mut prefix_max = 0;
        let bound: Vec<u32> = all
            .leaf_series()
            .iter()
            .map(|&l| {
                prefix_max = prefix_max.max(l);
                prefix_max
            })
            .collect();
        for j in [2u32, 3, 5] {
            let run_j =
                run_with_trace(&tr, &ConstructionSpec::KLeaves(j), &G0Spec::SingleRoot)
                    .unwrap();
            let mut equal_through = 0;
            for t in 1..=2000u32 {
                if run_j.out_targets(t) == all.out_targets(t) {
                    equal_through = t;
                } else {
                    break;
                }
            }
            let last_bounded = (0..=2000u32)
                .take_while(|&t| bound[t as usize] <= j)
                .last()
                .unwrap_or(0);
            assert!(
                equal_through >= last_bounded,
                "j={j}: equal through {equal_through}, bounded through {last_bounded}"
            );
        }
    }

    #[test]
    fn two_ended_runs_reference_the_second_newest_mark() {
        let st = run(&det(1), &ConstructionSpec::TwoEndedExample, 20, 0).unwrap().state;
        // t attaches to (m-1)_+ of G_{t-1}, whose largest mark is t-1
        for t in 1..=20u32 {
            let expect = (t - 1).saturating_sub(1);
            assert_eq!(st.out_targets(t), &[st.id_of_mark(expect)]);
        }
    }
}
