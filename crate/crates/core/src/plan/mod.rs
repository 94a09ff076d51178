//! Activity-aware path planning over a segment graph.
//!
//! Each segment may be viewed by a camera (optionally a subset of its
//! blocks). Off-line planning prices a segment by its learned activity at a
//! minute of day and excludes segments on which no activity was ever
//! observed. Real-time planning blends that long-term term with live
//! short-term activity.

pub mod costmap;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::minute_of_day;
use crate::isochron::{BinaryProfile, IsochronalStore, DEFAULT_EPSILON};
use crate::motion::MotionFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: String,
    pub from: String,
    pub to: String,
    pub len_m: f64,
    /// Camera viewing the segment; uncovered segments carry no activity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cam: Option<String>,
    /// Block indices of the camera view covering the segment; all blocks
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    /// Traversal cost before activity; defaults to `len_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_cost: Option<f64>,
}

impl Segment {
    pub fn base(&self) -> f64 {
        self.base_cost.unwrap_or(self.len_m)
    }

    fn region(&self) -> Option<&[usize]> {
        self.blocks.as_deref()
    }
}

/// Undirected segment graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Segment>,
}

impl PathGraph {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: PathGraph = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate node id {:?}", n.id)));
            }
        }
        let mut edge_ids = HashSet::new();
        for e in &self.edges {
            if !edge_ids.insert(e.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate edge id {:?}", e.id)));
            }
            for end in [&e.from, &e.to] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::InvalidInput(format!("edge {:?} references unknown node {:?}", e.id, end)));
                }
            }
            if !(e.len_m > 0.0 && e.len_m.is_finite()) {
                return Err(Error::InvalidInput(format!("edge {:?} must have positive length", e.id)));
            }
            if !(e.base() >= 0.0 && e.base().is_finite()) {
                return Err(Error::InvalidInput(format!("edge {:?} has a negative base cost", e.id)));
            }
        }
        Ok(())
    }

    pub fn edge(&self, id: &str) -> Result<&Segment> {
        self.edges
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::Query(format!("unknown segment {id:?}")))
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.iter().any(|n| n.id == id)
    }
}

/// Live short-term bands of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveBands {
    pub m_s1: MotionFrame,
    pub m_s2: Option<MotionFrame>,
}

impl LiveBands {
    pub fn timestamp_ms(&self) -> u64 {
        let t1 = self.m_s1.timestamp_ms;
        self.m_s2.as_ref().map_or(t1, |f| t1.min(f.timestamp_ms))
    }
}

/// Everything the cost functions read: per-camera stores, binary
/// profiles and (for real-time queries) live bands.
#[derive(Debug, Clone, Default)]
pub struct ActivityContext {
    pub stores: HashMap<String, IsochronalStore>,
    pub profiles: HashMap<String, BinaryProfile>,
    pub live: HashMap<String, LiveBands>,
}

impl ActivityContext {
    /// Builds a context from stores, deriving binary profiles at `epsilon`.
    pub fn from_stores(stores: impl IntoIterator<Item = IsochronalStore>, epsilon: f64) -> Result<Self> {
        let mut ctx = Self::default();
        for s in stores {
            ctx.profiles.insert(s.camera_id().to_string(), s.binarize(epsilon)?);
            ctx.stores.insert(s.camera_id().to_string(), s);
        }
        Ok(ctx)
    }

    fn store(&self, cam: &str) -> Result<&IsochronalStore> {
        self.stores
            .get(cam)
            .ok_or_else(|| Error::Query(format!("no isochronal store for camera {cam:?}")))
    }

    /// Whether activity was ever observed on the segment. Uncovered segments
    /// count as traversable.
    pub fn segment_flag(&self, seg: &Segment) -> Result<bool> {
        match &seg.cam {
            None => Ok(true),
            Some(cam) => {
                let profile = self
                    .profiles
                    .get(cam)
                    .ok_or_else(|| Error::Query(format!("no binary profile for camera {cam:?}")))?;
                check_region(seg, profile.flags.len())?;
                Ok(profile.any_in(seg.region()))
            }
        }
    }

    /// Long-term activity cost of one segment at `minute`.
    pub fn long_term_cost(&self, seg: &Segment, minute: usize, lambda: f64) -> Result<f64> {
        match &seg.cam {
            None => Ok(0.0),
            Some(cam) => {
                let snap = self.store(cam)?.query(minute)?;
                check_region(seg, snap.mean.len())?;
                Ok(segment_cost(&snap.mean, seg.region(), lambda))
            }
        }
    }

    /// Live activity cost of one segment, or `None` when the camera has no
    /// live data fresh enough.
    pub fn live_cost(&self, seg: &Segment, t_ms: u64, lambda: f64, params: &PlannerParams) -> Result<Option<f64>> {
        let Some(cam) = &seg.cam else {
            return Ok(Some(0.0));
        };
        let Some(live) = self.live.get(cam) else {
            return Ok(None);
        };
        let age_ms = t_ms.abs_diff(live.timestamp_ms());
        if age_ms as f64 > params.staleness_s * 1000.0 {
            return Ok(None);
        }
        check_region(seg, live.m_s1.len())?;
        let mut cost = segment_cost(&live.m_s1, seg.region(), lambda);
        if params.include_moving {
            if let Some(s2) = &live.m_s2 {
                cost += segment_cost(s2, seg.region(), lambda);
            }
        }
        Ok(Some(cost))
    }
}

fn check_region(seg: &Segment, blocks: usize) -> Result<()> {
    if let Some(r) = &seg.blocks {
        if let Some(&bad) = r.iter().find(|&&i| i >= blocks) {
            return Err(Error::Query(format!(
                "segment {:?} references block {bad} of a {blocks}-block view",
                seg.id
            )));
        }
    }
    Ok(())
}

/// `lambda` times the mean block density of the segment's view.
pub fn segment_cost(profile: &MotionFrame, region: Option<&[usize]>, lambda: f64) -> f64 {
    lambda * profile.mean_density_over(region)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    pub w1: f64,
    pub w2: f64,
    pub lambda: f64,
    /// Live bands older than this are ignored.
    pub staleness_s: f64,
    /// Add the moving band to the live term.
    pub include_moving: bool,
    pub epsilon: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 0.5,
            lambda: 1.0,
            staleness_s: 5.0,
            include_moving: false,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::param("planner weights must be >= 0"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda must be positive"));
        }
        if !(self.staleness_s >= 0.0) {
            return Err(Error::param("staleness_s must be >= 0"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::param("epsilon must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanMode {
    /// Learned activity at a minute of day.
    Offline { minute: usize },
    /// Learned activity at the current minute plus live activity.
    Realtime { t_ms: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanQuery {
    pub origin: String,
    pub goal: String,
    pub mode: PlanMode,
}

/// Path activity cost, or infeasible when a segment was never active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathCost {
    Feasible(f64),
    Infeasible,
}

impl PathCost {
    pub fn value(self) -> Option<f64> {
        match self {
            PathCost::Feasible(v) => Some(v),
            PathCost::Infeasible => None,
        }
    }
}

/// Off-line activity cost of a path of segment ids at `minute`.
pub fn cost1(graph: &PathGraph, path: &[&str], minute: usize, ctx: &ActivityContext, lambda: f64) -> Result<PathCost> {
    let mut total = 0.0;
    let mut feasible = true;
    for id in path {
        let seg = graph.edge(id)?;
        if !ctx.segment_flag(seg)? {
            feasible = false;
        }
        total += ctx.long_term_cost(seg, minute, lambda)?;
    }
    Ok(if feasible {
        PathCost::Feasible(total)
    } else {
        PathCost::Infeasible
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealtimeCost {
    pub cost: PathCost,
    /// Live data was missing or stale, so only the long-term term was used.
    pub degraded: bool,
}

/// Real-time cost: `w1 * cost1(minute of t) + w2 * sum(live segment costs)`.
pub fn cost2(graph: &PathGraph, path: &[&str], t_ms: u64, ctx: &ActivityContext, params: &PlannerParams) -> Result<RealtimeCost> {
    let long = cost1(graph, path, minute_of_day(t_ms), ctx, params.lambda)?;
    let mut live_sum = 0.0;
    let mut degraded = false;
    for id in path {
        match ctx.live_cost(graph.edge(id)?, t_ms, params.lambda, params)? {
            Some(c) => live_sum += c,
            None => degraded = true,
        }
    }
    let cost = match long {
        PathCost::Infeasible => PathCost::Infeasible,
        PathCost::Feasible(c1) if degraded => PathCost::Feasible(params.w1 * c1),
        PathCost::Feasible(c1) => PathCost::Feasible(params.w1 * c1 + params.w2 * live_sum),
    };
    Ok(RealtimeCost { cost, degraded })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentCost {
    pub edge: String,
    pub base: f64,
    pub activity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub feasible: bool,
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
    pub total_cost: Option<f64>,
    pub degraded: bool,
    pub segments: Vec<SegmentCost>,
}

impl PlanResult {
    fn no_path(degraded: bool) -> Self {
        Self {
            feasible: false,
            nodes: Vec::new(),
            edges: Vec::new(),
            total_cost: None,
            degraded,
            segments: Vec::new(),
        }
    }
}

/// Per-edge weights for a query: `None` marks an excluded segment.
pub fn edge_weights(graph: &PathGraph, mode: PlanMode, ctx: &ActivityContext, params: &PlannerParams) -> Result<(Vec<Option<SegmentCost>>, bool)> {
    let (minute, live_t) = match mode {
        PlanMode::Offline { minute } => (minute, None),
        PlanMode::Realtime { t_ms } => (minute_of_day(t_ms), Some(t_ms)),
    };
    // a camera without fresh live data degrades the whole query
    let mut degraded = false;
    if let Some(t) = live_t {
        for seg in &graph.edges {
            if ctx.live_cost(seg, t, params.lambda, params)?.is_none() {
                degraded = true;
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(graph.edges.len());
    for seg in &graph.edges {
        if !ctx.segment_flag(seg)? {
            out.push(None);
            continue;
        }
        let long = ctx.long_term_cost(seg, minute, params.lambda)?;
        let activity = match live_t {
            None => long,
            Some(_) if degraded => params.w1 * long,
            Some(t) => {
                let live = ctx.live_cost(seg, t, params.lambda, params)?.unwrap_or(0.0);
                params.w1 * long + params.w2 * live
            }
        };
        out.push(Some(SegmentCost {
            edge: seg.id.clone(),
            base: seg.base(),
            activity,
        }));
    }
    Ok((out, degraded))
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Label {
    fn key_cmp(&self, other: &Self, names: &[String], edge_names: &[String]) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.edges.len().cmp(&other.edges.len()))
            .then_with(|| {
                let a = self.nodes.iter().map(|&i| &names[i]);
                let b = other.nodes.iter().map(|&i| &names[i]);
                a.cmp(b)
            })
            .then_with(|| {
                let a = self.edges.iter().map(|&i| &edge_names[i]);
                let b = other.edges.iter().map(|&i| &edge_names[i]);
                a.cmp(b)
            })
    }
}

struct HeapEntry<'a> {
    label: Label,
    names: &'a [String],
    edge_names: &'a [String],
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry<'_> {}
impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other.label.key_cmp(&self.label, self.names, self.edge_names)
    }
}

/// Uniform-cost search for the cheapest feasible route. Ties prefer fewer
/// segments, then the lexicographically smaller node sequence.
pub fn plan_path(graph: &PathGraph, query: &PlanQuery, ctx: &ActivityContext, params: &PlannerParams) -> Result<PlanResult> {
    params.validate()?;
    if query.origin == query.goal {
        return Err(Error::param("origin and goal must differ"));
    }
    let index: HashMap<&str, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let origin = *index
        .get(query.origin.as_str())
        .ok_or_else(|| Error::Query(format!("unknown origin node {:?}", query.origin)))?;
    let goal = *index
        .get(query.goal.as_str())
        .ok_or_else(|| Error::Query(format!("unknown goal node {:?}", query.goal)))?;

    let (weights, degraded) = edge_weights(graph, query.mode, ctx, params)?;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph.nodes.len()];
    for (ei, e) in graph.edges.iter().enumerate() {
        if weights[ei].is_none() {
            continue;
        }
        let (a, b) = (index[e.from.as_str()], index[e.to.as_str()]);
        adj[a].push((b, ei));
        if a != b {
            adj[b].push((a, ei));
        }
    }

    let names: Vec<String> = graph.nodes.iter().map(|n| n.id.clone()).collect();
    let edge_names: Vec<String> = graph.edges.iter().map(|e| e.id.clone()).collect();
    let mut settled = vec![false; graph.nodes.len()];
    let mut best: Vec<Option<Label>> = vec![None; graph.nodes.len()];
    let mut heap = BinaryHeap::new();
    let start = Label {
        cost: 0.0,
        nodes: vec![origin],
        edges: Vec::new(),
    };
    best[origin] = Some(start.clone());
    heap.push(HeapEntry {
        label: start,
        names: &names,
        edge_names: &edge_names,
    });

    while let Some(HeapEntry { label, .. }) = heap.pop() {
        let at = *label.nodes.last().expect("non-empty");
        if settled[at] {
            continue;
        }
        settled[at] = true;
        if at == goal {
            let segments: Vec<SegmentCost> = label
                .edges
                .iter()
                .map(|&ei| weights[ei].clone().expect("usable edge"))
                .collect();
            return Ok(PlanResult {
                feasible: true,
                nodes: label.nodes.iter().map(|&i| names[i].clone()).collect(),
                edges: label.edges.iter().map(|&i| edge_names[i].clone()).collect(),
                total_cost: Some(label.cost),
                degraded,
                segments,
            });
        }
        for &(next, ei) in &adj[at] {
            if settled[next] {
                continue;
            }
            let w = weights[ei].as_ref().expect("usable edge");
            let mut nodes = label.nodes.clone();
            nodes.push(next);
            let mut edges = label.edges.clone();
            edges.push(ei);
            let cand = Label {
                cost: label.cost + (w.base + w.activity),
                nodes,
                edges,
            };
            let better = match &best[next] {
                None => true,
                Some(b) => cand.key_cmp(b, &names, &edge_names) == Ordering::Less,
            };
            if better {
                best[next] = Some(cand.clone());
                heap.push(HeapEntry {
                    label: cand,
                    names: &names,
                    edge_names: &edge_names,
                });
            }
        }
    }
    Ok(PlanResult::no_path(degraded))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str) -> Node {
        Node {
            id: id.into(),
            x: 0.0,
            y: 0.0,
        }
    }

    fn seg(id: &str, a: &str, b: &str, len: f64, cam: Option<&str>) -> Segment {
        Segment {
            id: id.into(),
            from: a.into(),
            to: b.into(),
            len_m: len,
            cam: cam.map(Into::into),
            blocks: None,
            base_cost: None,
        }
    }

    fn store_with(cam: &str, minute: usize, density: f64) -> IsochronalStore {
        let mut s = IsochronalStore::new(cam, 2, 1, 10.0).unwrap();
        if density > 0.0 {
            let mut f = MotionFrame::zeros(2, 1, 0);
            for b in f.blocks.iter_mut() {
                b.density = density;
            }
            s.update(minute, &f).unwrap();
        }
        s
    }

    #[test]
    fn segment_cost_arithmetic() {
        let mut f = MotionFrame::zeros(2, 2, 0);
        assert_eq!(segment_cost(&f, None, 1.5), 0.0);
        for b in f.blocks.iter_mut() {
            b.density = 2.0;
        }
        assert_eq!(segment_cost(&f, None, 1.5), 3.0);
        f.blocks[0].density = 6.0;
        assert_eq!(segment_cost(&f, Some(&[0, 1]), 1.0), 4.0);
    }

    #[test]
    fn cost1_cases() {
        let g = PathGraph {
            nodes: vec![node("a"), node("b"), node("c")],
            edges: vec![seg("ab", "a", "b", 1.0, Some("busy")), seg("bc", "b", "c", 1.0, Some("dead"))],
        };
        let ctx = ActivityContext::from_stores([store_with("busy", 10, 4.0), store_with("dead", 10, 0.0)], 1e-3).unwrap();
        assert_eq!(cost1(&g, &["ab"], 10, &ctx, 1.0).unwrap(), PathCost::Feasible(4.0));
        assert_eq!(cost1(&g, &["ab", "bc"], 10, &ctx, 1.0).unwrap(), PathCost::Infeasible);
        assert!(matches!(cost1(&g, &["zz"], 10, &ctx, 1.0), Err(Error::Query(_))));
        // the store remembers activity at minute 10 only, but the profile is
        // time-collapsed so another minute is feasible at zero cost
        assert_eq!(cost1(&g, &["ab"], 11, &ctx, 1.0).unwrap(), PathCost::Feasible(0.0));
    }

    #[test]
    fn cost2_weight_collapse_and_staleness() {
        let g = PathGraph {
            nodes: vec![node("a"), node("b")],
            edges: vec![seg("ab", "a", "b", 1.0, Some("cam"))],
        };
        let mut ctx = ActivityContext::from_stores([store_with("cam", 1, 2.0)], 1e-3).unwrap();
        let t = 60_000 + 500;
        let params = PlannerParams {
            w1: 0.7,
            w2: 0.0,
            ..Default::default()
        };
        let mut live = MotionFrame::zeros(2, 1, t);
        live.blocks[0].density = 10.0;
        ctx.live.insert("cam".into(), LiveBands { m_s1: live.clone(), m_s2: None });
        let c = cost2(&g, &["ab"], t, &ctx, &params).unwrap();
        assert_eq!(c.cost, PathCost::Feasible(0.7 * 2.0));
        assert!(!c.degraded);

        let params = PlannerParams { w1: 1.0, w2: 1.0, ..Default::default() };
        assert_eq!(cost2(&g, &["ab"], t, &ctx, &params).unwrap().cost, PathCost::Feasible(2.0 + 5.0));

        let late = t + 60_000;
        let c = cost2(&g, &["ab"], late, &ctx, &params).unwrap();
        assert!(c.degraded);
        assert_eq!(c.cost, PathCost::Feasible(0.0));
    }

    #[test]
    fn single_route_and_no_path() {
        let g = PathGraph {
            nodes: vec![node("a"), node("b"), node("c"), node("island")],
            edges: vec![seg("ab", "a", "b", 2.0, None), seg("bc", "b", "c", 3.0, None)],
        };
        let ctx = ActivityContext::default();
        let p = PlannerParams::default();
        let q = |o: &str, g: &str| PlanQuery {
            origin: o.into(),
            goal: g.into(),
            mode: PlanMode::Offline { minute: 0 },
        };
        let r = plan_path(&g, &q("a", "c"), &ctx, &p).unwrap();
        assert!(r.feasible);
        assert_eq!(r.nodes, vec!["a", "b", "c"]);
        assert_eq!(r.total_cost, Some(5.0));
        let r = plan_path(&g, &q("a", "island"), &ctx, &p).unwrap();
        assert!(!r.feasible);
        assert!(plan_path(&g, &q("a", "a"), &ctx, &p).is_err());
        assert!(matches!(plan_path(&g, &q("a", "zz"), &ctx, &p), Err(Error::Query(_))));
    }

    #[test]
    fn ties_prefer_fewer_edges_then_lexicographic() {
        let g = PathGraph {
            nodes: vec![node("s"), node("m"), node("n"), node("t")],
            edges: vec![
                seg("sn", "s", "n", 1.0, None),
                seg("nt", "n", "t", 1.0, None),
                seg("sm", "s", "m", 1.0, None),
                seg("mt", "m", "t", 1.0, None),
            ],
        };
        let q = PlanQuery {
            origin: "s".into(),
            goal: "t".into(),
            mode: PlanMode::Offline { minute: 0 },
        };
        let r = plan_path(&g, &q, &ActivityContext::default(), &PlannerParams::default()).unwrap();
        assert_eq!(r.nodes, vec!["s", "m", "t"]);

        let mut g2 = g.clone();
        g2.edges.push(Segment {
            base_cost: Some(2.0),
            ..seg("st", "s", "t", 9.0, None)
        });
        let r = plan_path(&g2, &q, &ActivityContext::default(), &PlannerParams::default()).unwrap();
        assert_eq!(r.nodes, vec!["s", "t"]);
    }

    #[test]
    fn graph_validation() {
        let bad = r#"{"nodes":[{"id":"a","x":0,"y":0}],"edges":[{"id":"e","from":"a","to":"b","len_m":1}]}"#;
        assert!(PathGraph::from_json(bad).is_err());
        let neg = r#"{"nodes":[{"id":"a","x":0,"y":0},{"id":"b","x":1,"y":0}],"edges":[{"id":"e","from":"a","to":"b","len_m":0}]}"#;
        assert!(PathGraph::from_json(neg).is_err());
        let unknown = r#"{"nodes":[],"edges":[],"extra":1}"#;
        assert!(PathGraph::from_json(unknown).is_err());
    }
}
