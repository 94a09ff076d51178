//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cascade_activity::isochron::IsochronalStore;
use cascade_activity::motion::MotionFrame;
use cascade_activity::plan::{plan_path, ActivityContext, Node, PathGraph, PlanMode, PlanQuery, PlannerParams, Segment};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MINUTE: usize = 600;

/// Random segment graph over two 2x2 cameras whose stores hold one sample
/// at [`MINUTE`]; `samples` keeps those densities for the oracle.
#[derive(Clone)]
pub struct RandomWorld {
    pub graph: PathGraph,
    pub samples: [[f64; 4]; 2],
}

impl RandomWorld {
    pub fn new(rng: &mut ChaCha8Rng, max_nodes: usize) -> Self {
        let n = rng.random_range(2..=max_nodes);
        let nodes: Vec<Node> = (0..n).map(|i| Node { id: format!("n{i}"), x: i as f64, y: 0.0 }).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.45) {
                    let cam = match rng.random_range(0..3) {
                        0 => None,
                        c => Some(format!("c{}", c - 1)),
                    };
                    let blocks = if rng.random_bool(0.5) {
                        let mut b: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.5)).collect();
                        if b.is_empty() {
                            b.push(rng.random_range(0..4));
                        }
                        Some(b)
                    } else {
                        None
                    };
                    edges.push(Segment {
                        id: format!("e{i}_{j}"),
                        from: format!("n{i}"),
                        to: format!("n{j}"),
                        len_m: rng.random_range(0.5..5.0),
                        cam,
                        blocks,
                        base_cost: None,
                    });
                }
            }
        }
        let mut samples = [[0.0; 4]; 2];
        for cam in samples.iter_mut() {
            for d in cam.iter_mut() {
                if rng.random_bool(0.7) {
                    *d = rng.random_range(0.0..2.0);
                }
            }
        }
        Self { graph: PathGraph { nodes, edges }, samples }
    }

    pub fn context_with(&self, epsilon: f64) -> ActivityContext {
        let stores = (0..2).map(|c| {
            let mut s = IsochronalStore::new(format!("c{c}"), 2, 2, 10.0).unwrap();
            let mut f = MotionFrame::zeros(2, 2, 0);
            for (b, d) in f.blocks.iter_mut().zip(self.samples[c]) {
                b.density = d;
            }
            s.update(MINUTE, &f).unwrap();
            s
        });
        ActivityContext::from_stores(stores, epsilon).unwrap()
    }

    pub fn context(&self) -> ActivityContext {
        self.context_with(PlannerParams::default().epsilon)
    }

    pub fn query(&self, rng: &mut ChaCha8Rng) -> PlanQuery {
        let n = self.graph.nodes.len();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        PlanQuery { origin: format!("n{a}"), goal: format!("n{b}"), mode: PlanMode::Offline { minute: MINUTE } }
    }

    /// Weight of a segment computed from the raw samples, or `None` when
    /// none of its blocks ever saw activity.
    pub fn oracle_weight(&self, e: &Segment, lambda: f64, epsilon: f64) -> Option<f64> {
        let Some(cam) = &e.cam else {
            return Some(e.base());
        };
        let c: usize = cam[1..].parse().unwrap();
        let region: Vec<usize> = e.blocks.clone().unwrap_or_else(|| (0..4).collect());
        let vals: Vec<f64> = region.iter().map(|&b| self.samples[c][b]).collect();
        if !vals.iter().any(|&v| v > epsilon) {
            return None;
        }
        Some(e.base() + lambda * vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn brute_force(&self, origin: &str, goal: &str, params: &PlannerParams) -> Option<f64> {
        let mut adj: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
        for e in &self.graph.edges {
            if let Some(w) = self.oracle_weight(e, params.lambda, params.epsilon) {
                adj.entry(&e.from).or_default().push((&e.to, w));
                adj.entry(&e.to).or_default().push((&e.from, w));
            }
        }
        fn dfs<'a>(at: &'a str, goal: &str, cost: f64, seen: &mut Vec<&'a str>, adj: &HashMap<&'a str, Vec<(&'a str, f64)>>, best: &mut Option<f64>) {
            if at == goal {
                *best = Some(best.map_or(cost, |b| b.min(cost)));
                return;
            }
            for &(next, w) in adj.get(at).map(Vec::as_slice).unwrap_or(&[]) {
                if !seen.contains(&next) {
                    seen.push(next);
                    dfs(next, goal, cost + w, seen, adj, best);
                    seen.pop();
                }
            }
        }
        let mut best = None;
        dfs(origin, goal, 0.0, &mut vec![origin], &adj, &mut best);
        best
    }

    pub fn check(&self, rng: &mut ChaCha8Rng) -> Result<(), String> {
        let params = PlannerParams::default();
        let ctx = self.context();
        for _ in 0..4 {
            let q = self.query(rng);
            let got = plan_path(&self.graph, &q, &ctx, &params).unwrap();
            let want = self.brute_force(&q.origin, &q.goal, &params);
            match (got.total_cost, want) {
                (None, None) if got.feasible => return Err("planner returned a path where none exists".into()),
                (None, None) => {}
                (Some(g), Some(w)) => {
                    if (g - w).abs() > 1e-9 * (1.0 + w) {
                        return Err(format!("planner {g} vs brute force {w}"));
                    }
                    for id in &got.edges {
                        let e = self.graph.edge(id).unwrap();
                        if self.oracle_weight(e, params.lambda, params.epsilon).is_none() {
                            return Err(format!("returned excluded segment {id}"));
                        }
                    }
                }
                (g, w) => return Err(format!("planner {g:?} vs brute force {w:?}")),
            }
        }
        Ok(())
    }
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade-activity"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn binary")
}

pub fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub const GRAPH: &str = r#"{
  "nodes": [
    {"id": "A", "x": 0, "y": 0},
    {"id": "B", "x": 1, "y": 1},
    {"id": "C", "x": 1, "y": -1},
    {"id": "D", "x": 2, "y": 0}
  ],
  "edges": [
    {"id": "ab", "from": "A", "to": "B", "len_m": 1, "cam": "cam0", "blocks": [16, 17, 18]},
    {"id": "bd", "from": "B", "to": "D", "len_m": 1, "cam": "cam0", "blocks": [19, 20, 21]},
    {"id": "ac", "from": "A", "to": "C", "len_m": 1, "cam": "cam0", "blocks": [0, 1]},
    {"id": "cd", "from": "C", "to": "D", "len_m": 1, "cam": "cam0", "blocks": [6, 7]}
  ]
}"#;

pub fn write_config(dir: &Path) -> String {
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "preset": "walkers", "bands": {"frame_rate": 5.0, "t_l1_s": 60.0}, "planner": {"epsilon": 0.01}}"#).unwrap();
    cfg.to_str().unwrap().to_string()
}

/// simulate -> filter -> learn -> events -> plan under one output dir.
pub fn pipeline(dir: &Path) {
    let cfg = write_config(dir);
    let out = dir.join("out");
    let out = out.to_str().unwrap();
    let stream = format!("{out}/stream.jsonl");
    let truth = format!("{out}/truth.json");
    let graph = dir.join("graph.json");
    fs::write(&graph, GRAPH).unwrap();

    ok(&["--config", &cfg, "--out-dir", out, "simulate"]);
    ok(&["--config", &cfg, "--out-dir", out, "filter", "--input", &stream]);
    ok(&["--config", &cfg, "--out-dir", out, "learn", "--input", &stream]);
    ok(&["--config", &cfg, "--out-dir", out, "events", "--input", &stream, "--truth", &truth]);
    ok(&["--config", &cfg, "--out-dir", out, "plan", "--graph", graph.to_str().unwrap(), "--origin", "A", "--goal", "D", "--minute", "560"]);
}

pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

