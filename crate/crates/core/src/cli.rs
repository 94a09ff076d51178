//! Command-line front end.
//!
//! Every subcommand loads one JSON config (defaults when none is given),
//! applies flag overrides, validates, and only then writes its fixed-name
//! artifacts under `--out-dir`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::events::{duty_cycle, energy_table_csv, write_events_jsonl, DetectorStub, GateRunner};
use crate::isochron::IsochronalStore;
use crate::motion::{extract_motion, read_jsonl, GrayFrame, MotionBlock, MotionFrame, DIRECTIONS};
use crate::pgm::GrayImage;
use crate::pipeline::CameraPipeline;
use crate::plan::costmap::{export_costmap, CameraView, Homography, OccupancyGrid};
use crate::plan::{plan_path, ActivityContext, LiveBands, PathGraph, PlanMode, PlanQuery};
use crate::sim::{derive_seed, GroundTruth, StreamGenerator};
use crate::tfilter::{read_bands_jsonl, Band, BandFilter, CascadeState, ReferenceFilter};

pub const STREAM_FILE: &str = "stream.jsonl";
pub const TRUTH_FILE: &str = "truth.json";
pub const FRAMES_DIR: &str = "frames";
pub const BANDS_FILE: &str = "bands.jsonl";
pub const PROFILE_FILE: &str = "profile.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const EVENTS_SUMMARY_FILE: &str = "events_summary.json";
pub const PLAN_FILE: &str = "plan.json";
pub const COSTMAP_STEM: &str = "costmap";
pub const COSTMAP_REPORT_FILE: &str = "costmap_report.json";
pub const BENCH_FILE: &str = "bench_filters.csv";
pub const ENERGY_FILE: &str = "energy.csv";

#[derive(Debug, Parser)]
#[command(name = "cascade-activity", version, about = "Multi-band temporal activity filtering, event gating and activity-aware planning")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub k_sigma: Option<f64>,
    #[arg(long, global = true)]
    pub cooldown_s: Option<f64>,
    #[arg(long, global = true)]
    pub reinvoke_every_s: Option<f64>,
    #[arg(long, global = true)]
    pub detector_power_w: Option<f64>,
    #[arg(long, global = true)]
    pub detector_fps: Option<f64>,
    #[arg(long, global = true)]
    pub workday_h: Option<f64>,
    #[arg(long, global = true)]
    pub w1: Option<f64>,
    #[arg(long, global = true)]
    pub w2: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub camera_id: Option<String>,
    /// Store directory (default: the output directory).
    #[arg(long, global = true)]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stream and its ground truth.
    Simulate {
        #[arg(long)]
        days: Option<u64>,
        #[arg(long)]
        preset: Option<String>,
        /// Render grayscale PGM frames instead of motion features.
        #[arg(long)]
        pixels: bool,
    },
    /// Run the band filter over a stream.
    Filter {
        /// Motion JSON-lines stream, or a directory of PGM frames.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "cascade")]
        r#impl: FilterImpl,
        /// Block size for PGM input.
        #[arg(long)]
        block_size: Option<usize>,
        /// Luminance difference below which PGM pixels count as still.
        #[arg(long)]
        noise_floor: Option<f64>,
    },
    /// Build the isochronal store from a stream.
    Learn {
        #[arg(long)]
        input: PathBuf,
    },
    /// Gate a stream against the learned store.
    Events {
        #[arg(long)]
        input: PathBuf,
        /// Ground truth; lets the detector stub answer with person blocks.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Plan a path over a segment graph.
    Plan {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        origin: String,
        #[arg(long)]
        goal: String,
        /// Off-line query at this minute of day.
        #[arg(long, conflicts_with = "time_ms")]
        minute: Option<usize>,
        /// Real-time query at this stream time.
        #[arg(long)]
        time_ms: Option<u64>,
        /// Live bands as `camera=path` (or just `path` for the config camera).
        #[arg(long)]
        live: Vec<String>,
    },
    /// Export a cost map with an activity layer.
    Costmap {
        /// Static map YAML.
        #[arg(long)]
        map: PathBuf,
        /// JSON object of camera id to 3x3 homography.
        #[arg(long)]
        homographies: PathBuf,
        /// Live bands as `camera=path`; the last in-place frame is used.
        #[arg(long)]
        live: Vec<String>,
        /// Use stored activity at this minute instead of live bands.
        #[arg(long)]
        minute: Option<usize>,
    },
    /// Compare filter layouts and tabulate energy.
    Bench {
        #[arg(long, value_enum, default_value = "both")]
        r#impl: BenchImpl,
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        #[arg(long, default_value_t = 10)]
        streams: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterImpl {
    Cascade,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchImpl {
    Cascade,
    Reference,
    Both,
}

/// Exit status for an error: 2 for configuration and validation problems,
/// 1 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) => 2,
        _ => 1,
    }
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.k_sigma {
        cfg.events.k_sigma = v;
    }
    if let Some(v) = common.cooldown_s {
        cfg.events.cooldown_s = v;
    }
    if let Some(v) = common.reinvoke_every_s {
        cfg.events.reinvoke_every_s = v;
    }
    for m in [&mut cfg.energy.single, &mut cfg.energy.network] {
        if let Some(v) = common.detector_power_w {
            m.detector_power_w = v;
        }
        if let Some(v) = common.detector_fps {
            m.detector_fps = v;
        }
        if let Some(v) = common.workday_h {
            m.workday_h = v;
        }
    }
    if let Some(v) = common.w1 {
        cfg.planner.w1 = v;
    }
    if let Some(v) = common.w2 {
        cfg.planner.w2 = v;
    }
    if let Some(v) = common.lambda {
        cfg.planner.lambda = v;
    }
    if let Some(v) = &common.camera_id {
        cfg.camera_id = v.clone();
    }
    if let Some(v) = &common.store_dir {
        cfg.store_dir = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn store_dir(cfg: &Config, common: &Common) -> PathBuf {
    cfg.store_dir.clone().unwrap_or_else(|| common.out_dir.clone())
}

fn store_path(dir: &Path, camera: &str) -> PathBuf {
    dir.join(format!("{camera}.iso"))
}

/// Frames from a JSON-lines stream or a directory of PGM images (sorted by
/// name, timestamps from the configured frame rate).
fn read_frames(input: &Path, cfg: &Config) -> Result<Vec<MotionFrame>> {
    if input.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| Error::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        names.sort();
        let period = 1000.0 / cfg.bands.frame_rate;
        let mut prev: Option<GrayFrame> = None;
        let mut out = Vec::new();
        for (i, p) in names.iter().enumerate() {
            let frame = GrayFrame::from_image(GrayImage::read(p)?, (i as f64 * period).round() as u64);
            if let Some(prev) = &prev {
                out.push(extract_motion(prev, &frame, cfg.motion.block_size, cfg.motion.noise_floor)?);
            }
            prev = Some(frame);
        }
        return Ok(out);
    }
    let f = File::open(input).map_err(|e| Error::io(input, e))?;
    let frames = read_jsonl(BufReader::new(f))?;
    if let [a, b, ..] = frames.as_slice() {
        let period = b.timestamp_ms.saturating_sub(a.timestamp_ms) as f64;
        let expected = 1000.0 / cfg.bands.frame_rate;
        if (period - expected).abs() > 1.0 {
            return Err(Error::Config {
                field: "bands.frame_rate".into(),
                reason: format!(
                    "{} has a {period} ms frame period but frame_rate {} implies {expected:.1} ms",
                    input.display(),
                    cfg.bands.frame_rate
                ),
            });
        }
    }
    Ok(frames)
}

fn read_truth(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Detector stub answering from ground-truth event intervals.
fn detector_from_truth(truth: &serde_json::Value) -> DetectorStub {
    let intervals = truth["events"]
        .as_array()
        .map(|evs| {
            evs.iter()
                .filter_map(|e| {
                    let s = e["start_ms"].as_u64()?;
                    let t = e["end_ms"].as_u64()?;
                    let blocks = e["blocks"].as_array()?.iter().filter_map(|b| b.as_u64().map(|b| b as usize)).collect();
                    Some((s, t, blocks))
                })
                .collect()
        })
        .unwrap_or_default();
    DetectorStub::from_intervals(intervals)
}

/// Parses `camera=path` (or bare `path` for `default_cam`).
fn parse_live(spec: &str, default_cam: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((c, p)) => (c.to_string(), PathBuf::from(p)),
        None => (default_cam.to_string(), PathBuf::from(spec)),
    }
}

/// Last in-place and moving frames of a bands file.
fn last_live(path: &Path) -> Result<LiveBands> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut s1 = None;
    let mut s2 = None;
    for (band, frame) in read_bands_jsonl(BufReader::new(f))? {
        match band {
            Band::S1 => s1 = Some(frame),
            Band::S2 => s2 = Some(frame),
            Band::L1 => {}
        }
    }
    let m_s1 = s1.ok_or_else(|| Error::InvalidInput(format!("{}: no S1 records", path.display())))?;
    Ok(LiveBands { m_s1, m_s2: s2 })
}

fn load_stores(dir: &Path) -> Result<Vec<IsochronalStore>> {
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "iso"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(dir, e)),
    };
    paths.sort();
    paths.iter().map(|p| IsochronalStore::load(p)).collect()
}

#[derive(Serialize)]
struct EventsSummary {
    camera_id: String,
    events: usize,
    invocations: u64,
    detector_frames: u64,
    frames_processed: u64,
    duty_cycle: f64,
    workday_h: f64,
    planted_events: Option<usize>,
    recall: Option<f64>,
}

#[derive(Serialize)]
struct CostmapReport {
    skipped_blocks: usize,
    elevated_cells: usize,
    source: String,
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    let out = &common.out_dir;
    match &cli.command {
        Command::Simulate { days, preset, pixels } => {
            let mut cfg = cfg.clone();
            if let Some(p) = preset {
                cfg.preset = p.clone();
                cfg.scenario = None;
            }
            if let Some(d) = days {
                cfg.days = *d;
            }
            cfg.validate()?;
            let scenario = cfg.load_scenario()?;
            let mut gen = StreamGenerator::new(&scenario, cfg.days)?;
            create_out(out)?;
            if *pixels {
                let dir = out.join(FRAMES_DIR);
                create_out(&dir)?;
                let mut i = 0u64;
                while let Some(f) = gen.next_gray() {
                    f.to_image().write(&dir.join(format!("frame_{i:06}.pgm")))?;
                    i += 1;
                }
            } else {
                let path = out.join(STREAM_FILE);
                let mut w = writer(&path)?;
                while let Some(f) = gen.next_motion() {
                    writeln!(w, "{}", f.to_json_line()).map_err(|e| Error::io(&path, e))?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
            let truth: GroundTruth = gen.into_truth();
            write_json(&out.join(TRUTH_FILE), &truth)
        }
        Command::Filter {
            input,
            r#impl,
            block_size,
            noise_floor,
        } => {
            let mut cfg = cfg.clone();
            if let Some(b) = block_size {
                cfg.motion.block_size = *b;
            }
            if let Some(n) = noise_floor {
                cfg.motion.noise_floor = *n;
            }
            cfg.motion.validate().map_err(|e| Error::Config {
                field: "motion".into(),
                reason: e.to_string(),
            })?;
            let frames = read_frames(input, &cfg)?;
            let first = frames.first().ok_or_else(|| Error::InvalidInput(format!("{}: empty stream", input.display())))?;
            let mut filter: Box<dyn BandFilter> = match r#impl {
                FilterImpl::Cascade => Box::new(CascadeState::new(first.grid_w, first.grid_h, &cfg.bands)?),
                FilterImpl::Reference => Box::new(ReferenceFilter::new(first.grid_w, first.grid_h, &cfg.bands)?),
            };
            create_out(out)?;
            let path = out.join(BANDS_FILE);
            let mut w = writer(&path)?;
            for (tick, f) in frames.iter().enumerate() {
                let b = filter.step(f, tick as u64)?;
                if b.short_tick {
                    b.write_jsonl(&mut w).map_err(|e| Error::io(&path, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))
        }
        Command::Learn { input } => {
            let frames = read_frames(input, &cfg)?;
            let first = frames.first().ok_or_else(|| Error::InvalidInput(format!("{}: empty stream", input.display())))?;
            let dir = store_dir(&cfg, common);
            let path = store_path(&dir, &cfg.camera_id);
            let mut store = if path.exists() {
                IsochronalStore::load(&path)?
            } else {
                IsochronalStore::new(&cfg.camera_id, first.grid_w, first.grid_h, cfg.bands.t_l2_days)?
            };
            let mut p = CameraPipeline::new(first.grid_w, first.grid_h, &cfg.bands)?;
            for f in &frames {
                p.step_learn(f, &mut store)?;
            }
            p.finish_learning(&mut store)?;
            create_out(&dir)?;
            create_out(out)?;
            store.persist(&path)?;
            let csv = out.join(PROFILE_FILE);
            fs::write(&csv, store.profile_csv()).map_err(|e| Error::io(&csv, e))
        }
        Command::Events { input, truth } => {
            let frames = read_frames(input, &cfg)?;
            let first = frames.first().ok_or_else(|| Error::InvalidInput(format!("{}: empty stream", input.display())))?;
            let dir = store_dir(&cfg, common);
            let path = store_path(&dir, &cfg.camera_id);
            let store = if path.exists() {
                IsochronalStore::load(&path)?
            } else {
                IsochronalStore::new(&cfg.camera_id, first.grid_w, first.grid_h, cfg.bands.t_l2_days)?
            };
            let truth = truth.as_deref().map(read_truth).transpose()?;
            let detector = truth.as_ref().map(detector_from_truth).unwrap_or_else(DetectorStub::empty);
            let mut p = CameraPipeline::new(first.grid_w, first.grid_h, &cfg.bands)?;
            let tick_ms = (1000.0 / cfg.bands.shortterm_rate).round() as u64;
            let mut runner = GateRunner::new(&cfg.camera_id, cfg.events, tick_ms)?;
            for f in &frames {
                let b = p.step(f)?;
                if b.short_tick {
                    runner.push(&b.m_s1, &b.m_s2, &store, &detector)?;
                }
            }
            let report = runner.finish(&detector);
            let workday_h = cfg.energy.single.workday_h;
            let planted: Option<Vec<(u64, u64)>> = truth.as_ref().and_then(|t| {
                t["events"].as_array().map(|a| {
                    a.iter()
                        .filter_map(|e| Some((e["start_ms"].as_u64()?, e["end_ms"].as_u64()?)))
                        .collect()
                })
            });
            let recall = planted.as_ref().filter(|p| !p.is_empty()).map(|p| {
                let hit = p
                    .iter()
                    .filter(|(s, e)| report.events.iter().any(|ev| ev.start_ms < *e && ev.end_ms.unwrap_or(u64::MAX) >= *s))
                    .count();
                hit as f64 / p.len() as f64
            });
            let summary = EventsSummary {
                camera_id: cfg.camera_id.clone(),
                events: report.events.len(),
                invocations: report.invocations,
                detector_frames: report.detector_frames,
                frames_processed: report.frames_processed,
                duty_cycle: duty_cycle(&report.events, workday_h)?,
                workday_h,
                planted_events: planted.as_ref().map(Vec::len),
                recall,
            };
            create_out(out)?;
            let ev_path = out.join(EVENTS_FILE);
            let mut w = writer(&ev_path)?;
            write_events_jsonl(&mut w, &report.events).map_err(|e| Error::io(&ev_path, e))?;
            w.flush().map_err(|e| Error::io(&ev_path, e))?;
            write_json(&out.join(EVENTS_SUMMARY_FILE), &summary)
        }
        Command::Plan {
            graph,
            origin,
            goal,
            minute,
            time_ms,
            live,
        } => {
            let text = fs::read_to_string(graph).map_err(|e| Error::io(graph, e))?;
            let g = PathGraph::from_json(&text)?;
            let mode = match (minute, time_ms) {
                (_, Some(t)) => PlanMode::Realtime { t_ms: *t },
                (Some(m), None) => PlanMode::Offline { minute: *m },
                (None, None) => return Err(Error::param("plan needs --minute or --time-ms")),
            };
            if let PlanMode::Offline { minute } = mode {
                if minute >= crate::isochron::MINUTES_PER_DAY {
                    return Err(Error::param(format!("--minute {minute} outside [0, 1439]")));
                }
            }
            if matches!(mode, PlanMode::Realtime { .. }) && cfg.planner.w1 + cfg.planner.w2 <= 0.0 {
                return Err(Error::param("w1 + w2 must be positive for real-time planning"));
            }
            let stores = load_stores(&store_dir(&cfg, common))?;
            let mut ctx = ActivityContext::from_stores(stores, cfg.planner.epsilon)?;
            for spec in live {
                let (cam, path) = parse_live(spec, &cfg.camera_id);
                ctx.live.insert(cam, last_live(&path)?);
            }
            let q = PlanQuery {
                origin: origin.clone(),
                goal: goal.clone(),
                mode,
            };
            let result = plan_path(&g, &q, &ctx, &cfg.planner)?;
            create_out(out)?;
            write_json(&out.join(PLAN_FILE), &result)
        }
        Command::Costmap {
            map,
            homographies,
            live,
            minute,
        } => {
            let static_map = OccupancyGrid::read(map)?;
            let text = fs::read_to_string(homographies).map_err(|e| Error::io(homographies, e))?;
            let hs: BTreeMap<String, Homography> = serde_json::from_str(&text)?;
            let mut frames: Vec<(String, MotionFrame)> = Vec::new();
            let source = match minute {
                Some(m) => {
                    for s in load_stores(&store_dir(&cfg, common))? {
                        frames.push((s.camera_id().to_string(), s.query(*m)?.mean));
                    }
                    format!("store minute {m}")
                }
                None => {
                    for spec in live {
                        let (cam, path) = parse_live(spec, &cfg.camera_id);
                        frames.push((cam, last_live(&path)?.m_s1));
                    }
                    "live".to_string()
                }
            };
            let mut views = Vec::new();
            for (cam, f) in &frames {
                let h = hs
                    .get(cam)
                    .ok_or_else(|| Error::InvalidInput(format!("no homography for camera {cam:?}")))?;
                views.push(CameraView {
                    homography: *h,
                    activity: f,
                });
            }
            let (combined, skipped) = export_costmap(&static_map, &views, &cfg.costmap)?;
            if skipped > 0 {
                eprintln!("warning: {skipped} active blocks fell outside the map");
            }
            let elevated = combined.cells.iter().zip(&static_map.cells).filter(|(a, b)| a != b).count();
            create_out(out)?;
            combined.write(out, COSTMAP_STEM)?;
            write_json(
                &out.join(COSTMAP_REPORT_FILE),
                &CostmapReport {
                    skipped_blocks: skipped,
                    elevated_cells: elevated,
                    source,
                },
            )
        }
        Command::Bench { r#impl, frames, streams } => {
            if *frames == 0 || *streams == 0 {
                return Err(Error::param("bench needs at least one frame and one stream"));
            }
            let rows = bench_filters(&cfg, *r#impl, *frames, *streams)?;
            let energy = energy_table_csv(&cfg.energy.single, &cfg.energy.network, cfg.energy.events_per_camera)?;
            create_out(out)?;
            let p = out.join(BENCH_FILE);
            fs::write(&p, rows).map_err(|e| Error::io(&p, e))?;
            let p = out.join(ENERGY_FILE);
            fs::write(&p, energy).map_err(|e| Error::io(&p, e))
        }
    }
}

fn random_stream(rng: &mut ChaCha8Rng, frames: usize, period_ms: u64) -> Vec<MotionFrame> {
    (0..frames)
        .map(|i| {
            let blocks = (0..12)
                .map(|_| {
                    let mut b = MotionBlock::ZERO;
                    if rng.random_bool(0.3) {
                        b.density = rng.random_range(0.0..2.0);
                        b.dir_hist[rng.random_range(0..DIRECTIONS)] = b.density;
                    }
                    b
                })
                .collect();
            MotionFrame {
                grid_w: 4,
                grid_h: 3,
                blocks,
                timestamp_ms: i as u64 * period_ms,
            }
        })
        .collect()
}

/// `impl,multiplies_per_tick,state_frames,multiplies_ratio,memory_ratio,max_abs_diff`
/// rows, ratios relative to the non-cascaded layout.
pub fn bench_filters(cfg: &Config, which: BenchImpl, frames: usize, streams: usize) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "bench"));
    let period = (1000.0 / cfg.bands.frame_rate).round() as u64;
    let mut max_diff = 0.0f64;
    let mut cascade_c = Default::default();
    let mut reference_c = Default::default();
    for _ in 0..streams {
        let input = random_stream(&mut rng, frames, period);
        let mut c = CascadeState::new(4, 3, &cfg.bands)?;
        let mut r = ReferenceFilter::new(4, 3, &cfg.bands)?;
        for (tick, f) in input.iter().enumerate() {
            let a = c.step(f, tick as u64)?;
            let b = r.step(f, tick as u64)?;
            for band in [Band::L1, Band::S1, Band::S2] {
                for (x, y) in a.get(band).blocks.iter().zip(&b.get(band).blocks) {
                    for (u, v) in x.components().zip(y.components()) {
                        max_diff = max_diff.max((u - v).abs());
                    }
                }
            }
        }
        cascade_c = c.counters();
        reference_c = r.counters();
    }
    let per_tick = |c: crate::tfilter::Counters| c.multiplies as f64 / c.full_ticks.max(1) as f64;
    let (rm, rs) = (per_tick(reference_c), reference_c.state_frames as f64);
    let mut out = String::from("impl,multiplies_per_tick,state_frames,multiplies_ratio,memory_ratio,max_abs_diff\n");
    if matches!(which, BenchImpl::Reference | BenchImpl::Both) {
        out.push_str(&format!("reference,{rm},{rs},1.000,1.000,0\n"));
    }
    if matches!(which, BenchImpl::Cascade | BenchImpl::Both) {
        let (cm, cs) = (per_tick(cascade_c), cascade_c.state_frames as f64);
        out.push_str(&format!("cascade,{cm},{cs},{:.3},{:.3},{max_diff:e}\n", cm / rm, cs / rs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::param("x")), 2);
        assert_eq!(
            exit_code(&Error::Config {
                field: "a".into(),
                reason: "b".into()
            }),
            2
        );
        assert_eq!(exit_code(&Error::Query("x".into())), 1);
    }

    #[test]
    fn bench_rows_show_reductions() {
        let csv = bench_filters(&Config::default(), BenchImpl::Both, 120, 2).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[1], "reference,5,3,1.000,1.000,0");
        assert!(rows[2].starts_with("cascade,4,2,0.800,0.667,"), "{}", rows[2]);
    }

    #[test]
    fn live_spec_parsing() {
        assert_eq!(parse_live("a=b.jsonl", "c"), ("a".into(), PathBuf::from("b.jsonl")));
        assert_eq!(parse_live("b.jsonl", "c"), ("c".into(), PathBuf::from("b.jsonl")));
    }
}
