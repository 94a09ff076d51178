//! Deterministic synthetic scenes with ground truth.
//!
//! Walkers follow block-space paths and deposit moving activity; dwellers
//! sit in one block and deposit in-place activity; flashing lights are
//! constant stationary noise. Walker traffic and planted events arrive as
//! Poisson processes modulated by a daily intensity profile. Feature mode
//! emits [`MotionFrame`]s directly; pixel mode renders the same actors
//! into grayscale frames for [`crate::motion::extract_motion`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isochron::MINUTES_PER_DAY;
use crate::motion::{direction_bin, GrayFrame, MotionBlock, MotionFrame, DIRECTIONS, MS_PER_MINUTE};

pub const MS_PER_DAY: u64 = 86_400_000;

/// Stable 64-bit FNV-1a, used to derive independent sub-seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(label.as_bytes());
    fnv1a(&bytes)
}

/// Linear interpolation through `(minute, value)` knots; zero outside.
fn knots(points: &[(f64, f64)]) -> Vec<f64> {
    (0..MINUTES_PER_DAY)
        .map(|m| {
            let m = m as f64;
            for w in points.windows(2) {
                let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                if m >= x0 && m <= x1 {
                    return y0 + (y1 - y0) * (m - x0) / (x1 - x0);
                }
            }
            0.0
        })
        .collect()
}

/// Intensity per minute of the day for a named template, scaled by
/// `level`. Templates: `office`, `university`, `flat`.
pub fn gen_daily_profile(template: &str, level: f64) -> Result<Vec<f64>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::param(format!("profile level must be >= 0, got {level}")));
    }
    let base = match template {
        "office" => knots(&[
            (360.0, 0.0),
            (480.0, 0.6),
            (600.0, 0.9),
            (690.0, 0.6),
            (750.0, 0.35),
            (810.0, 0.6),
            (930.0, 0.85),
            (990.0, 1.0),
            (1080.0, 0.6),
            (1170.0, 0.25),
            (1260.0, 0.0),
        ]),
        "university" => (0..MINUTES_PER_DAY)
            .map(|m| {
                if !(480..=1080).contains(&m) {
                    return 0.0;
                }
                // class changes on the hour
                let off = (m % 60).min(60 - m % 60) as f64;
                0.15 + 0.85 * (1.0 - off / 8.0).max(0.0)
            })
            .collect(),
        "flat" => vec![1.0; MINUTES_PER_DAY],
        other => return Err(Error::param(format!("unknown profile template {other:?}"))),
    };
    Ok(base.into_iter().map(|v| v * level).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSpec {
    pub template: String,
    pub level: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            template: "flat".into(),
            level: 1.0,
        }
    }
}

/// Recurring walkers along one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    /// Waypoints in block coordinates (x right, y down).
    pub path: Vec<[f64; 2]>,
    /// Arrivals per minute at profile intensity 1.
    pub per_min: f64,
    /// Blocks per second.
    pub speed: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Walk the path in a random direction.
    #[serde(default = "yes")]
    pub both_ways: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// In-place activity in one block, repeated every simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellerSpec {
    pub block: [usize; 2],
    /// Offset from the start of the simulated day window, seconds.
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

/// Constant stationary motion noise (a flashing light, foliage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlashSpec {
    pub block: [usize; 2],
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Moving,
    InPlace,
}

/// Planted short events used to exercise the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    /// Mean number of events per simulated day.
    pub per_day: f64,
    pub duration_s: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    pub kind: ActorKind,
    /// Path of moving events; defaults to a left-to-right crossing of the
    /// middle row.
    #[serde(default)]
    pub path: Option<Vec<[f64; 2]>>,
    /// Block of in-place events; defaults to the grid center.
    #[serde(default)]
    pub block: Option<[usize; 2]>,
    /// Minimum spacing between consecutive event starts, seconds.
    #[serde(default)]
    pub min_gap_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Feature frames per second.
    pub frame_rate: f64,
    /// Hour of day at which each simulated day window begins.
    pub start_hour: f64,
    /// Length of each simulated day window, hours.
    pub day_hours: f64,
    pub profile: ProfileSpec,
    pub traffic: Vec<TrafficSpec>,
    pub dwellers: Vec<DwellerSpec>,
    pub flashes: Vec<FlashSpec>,
    pub events: Option<EventSpec>,
    /// Standard deviation of additive density noise.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Block size in pixels for pixel mode.
    pub block_px: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            grid_w: 8,
            grid_h: 6,
            frame_rate: 5.0,
            start_hour: 0.0,
            day_hours: 24.0,
            profile: ProfileSpec::default(),
            traffic: Vec::new(),
            dwellers: Vec::new(),
            flashes: Vec::new(),
            events: None,
            noise_sigma: 0.02,
            seed: 0,
            block_px: 16,
        }
    }
}

fn row(y: f64, w: usize) -> Vec<[f64; 2]> {
    vec![[0.0, y], [w as f64, y]]
}

impl Scenario {
    pub const PRESETS: [&'static str; 6] = ["queue", "walkers", "corridor", "two-corridor", "office", "events"];

    /// Named scenarios used by the experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Scenario {
            name: name.into(),
            ..Scenario::default()
        };
        let s = match name {
            // a queue of dwellers beside a walkway
            "queue" => Scenario {
                dwellers: (2..6)
                    .map(|x| DwellerSpec {
                        block: [x, 1],
                        start_s: 0.0,
                        duration_s: 3600.0,
                        amplitude: 0.8,
                    })
                    .collect(),
                traffic: vec![TrafficSpec {
                    path: row(4.5, 8),
                    per_min: 2.0,
                    speed: 1.5,
                    amplitude: 1.0,
                    both_ways: true,
                }],
                day_hours: 1.0,
                start_hour: 9.0,
                ..base
            },
            "walkers" => Scenario {
                traffic: vec![
                    TrafficSpec {
                        path: row(2.5, 8),
                        per_min: 3.0,
                        speed: 2.0,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                    TrafficSpec {
                        path: vec![[4.5, 0.0], [4.5, 6.0]],
                        per_min: 1.0,
                        speed: 1.0,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                ],
                day_hours: 1.0,
                start_hour: 9.0,
                ..base
            },
            "corridor" => Scenario {
                grid_w: 12,
                grid_h: 3,
                traffic: vec![TrafficSpec {
                    path: row(1.5, 12),
                    per_min: 4.0,
                    speed: 1.5,
                    amplitude: 1.0,
                    both_ways: true,
                }],
                profile: ProfileSpec {
                    template: "office".into(),
                    level: 1.0,
                },
                ..base
            },
            "two-corridor" => Scenario {
                grid_w: 12,
                grid_h: 6,
                traffic: vec![
                    TrafficSpec {
                        path: row(1.5, 12),
                        per_min: 4.0,
                        speed: 1.5,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                    TrafficSpec {
                        path: row(4.5, 12),
                        per_min: 0.5,
                        speed: 1.5,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                ],
                profile: ProfileSpec {
                    template: "office".into(),
                    level: 1.0,
                },
                ..base
            },
            "office" => Scenario {
                traffic: vec![
                    TrafficSpec {
                        path: row(2.5, 8),
                        per_min: 4.0,
                        speed: 1.5,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                    TrafficSpec {
                        path: vec![[0.0, 5.5], [3.5, 5.5], [3.5, 0.0]],
                        per_min: 2.0,
                        speed: 1.0,
                        amplitude: 1.0,
                        both_ways: true,
                    },
                ],
                profile: ProfileSpec {
                    template: "office".into(),
                    level: 1.0,
                },
                frame_rate: 1.0,
                ..base
            },
            // a 10 h workday with 300 planted 10 s crossings
            "events" => Scenario {
                events: Some(EventSpec {
                    per_day: 300.0,
                    duration_s: 10.0,
                    amplitude: 1.0,
                    kind: ActorKind::Moving,
                    path: None,
                    block: None,
                    min_gap_s: 0.0,
                }),
                start_hour: 8.0,
                day_hours: 10.0,
                frame_rate: 1.0,
                ..base
            },
            other => {
                return Err(Error::param(format!(
                    "unknown scenario preset {other:?} (known: {})",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::param("scenario grid must be non-empty"));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate <= 1000.0) {
            return Err(Error::param(format!("frame_rate must lie in (0, 1000], got {}", self.frame_rate)));
        }
        if !(self.start_hour >= 0.0 && self.start_hour < 24.0) {
            return Err(Error::param("start_hour must lie in [0, 24)"));
        }
        if !(self.day_hours > 0.0 && self.start_hour + self.day_hours <= 24.0) {
            return Err(Error::param("day window must be positive and end by midnight"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma must be >= 0"));
        }
        if self.block_px == 0 {
            return Err(Error::param("block_px must be positive"));
        }
        gen_daily_profile(&self.profile.template, self.profile.level)?;
        let (w, h) = (self.grid_w as f64, self.grid_h as f64);
        let check_path = |p: &[[f64; 2]]| -> Result<()> {
            if p.len() < 2 {
                return Err(Error::param("paths need at least two waypoints"));
            }
            if p.iter().any(|q| !(q[0] >= 0.0 && q[0] <= w && q[1] >= 0.0 && q[1] <= h)) {
                return Err(Error::param("path waypoint outside the grid"));
            }
            if path_length(p) <= 0.0 {
                return Err(Error::param("path has zero length"));
            }
            Ok(())
        };
        let check_block = |b: [usize; 2]| -> Result<()> {
            if b[0] >= self.grid_w || b[1] >= self.grid_h {
                return Err(Error::param(format!("block {b:?} outside the grid")));
            }
            Ok(())
        };
        for t in &self.traffic {
            check_path(&t.path)?;
            if !(t.per_min >= 0.0 && t.speed > 0.0 && t.amplitude >= 0.0) {
                return Err(Error::param("traffic needs per_min >= 0, speed > 0, amplitude >= 0"));
            }
        }
        for d in &self.dwellers {
            check_block(d.block)?;
            if !(d.start_s >= 0.0 && d.duration_s >= 0.0 && d.amplitude >= 0.0) {
                return Err(Error::param("dweller times and amplitude must be >= 0"));
            }
        }
        for f in &self.flashes {
            check_block(f.block)?;
            if !(f.amplitude >= 0.0) {
                return Err(Error::param("flash amplitude must be >= 0"));
            }
        }
        if let Some(e) = &self.events {
            if !(e.per_day >= 0.0 && e.duration_s > 0.0 && e.amplitude >= 0.0 && e.min_gap_s >= 0.0) {
                return Err(Error::param("events need per_day >= 0, duration_s > 0, amplitude >= 0"));
            }
            if let Some(p) = &e.path {
                check_path(p)?;
            }
            if let Some(b) = e.block {
                check_block(b)?;
            }
        }
        Ok(())
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.frame_rate
    }

    pub fn frames_per_day(&self) -> u64 {
        (self.day_hours * 3600.0 * self.frame_rate).round() as u64
    }

    fn day_start_ms(&self, day: u64) -> u64 {
        day * MS_PER_DAY + (self.start_hour * 3_600_000.0).round() as u64
    }

    fn default_event_path(&self) -> Vec<[f64; 2]> {
        let y = (self.grid_h / 2) as f64 + 0.5;
        row(y, self.grid_w)
    }

    /// Blocks any actor can touch, with the kind of activity they see.
    pub fn walkable(&self) -> Vec<Option<ActorKind>> {
        let mut labels: Vec<Option<ActorKind>> = vec![None; self.grid_w * self.grid_h];
        let mark_path = |p: &[[f64; 2]], labels: &mut Vec<Option<ActorKind>>| {
            let len = path_length(p);
            let steps = (len * 20.0).ceil() as usize + 1;
            for i in 0..=steps {
                let (pos, _) = point_along(p, len * i as f64 / steps as f64);
                if let Some(b) = self.block_of(pos) {
                    labels[b].get_or_insert(ActorKind::Moving);
                }
            }
        };
        for t in &self.traffic {
            mark_path(&t.path, &mut labels);
        }
        if let Some(e) = &self.events {
            match e.kind {
                ActorKind::Moving => mark_path(&e.path.clone().unwrap_or_else(|| self.default_event_path()), &mut labels),
                ActorKind::InPlace => {
                    let b = e.block.unwrap_or([self.grid_w / 2, self.grid_h / 2]);
                    labels[b[1] * self.grid_w + b[0]] = Some(ActorKind::InPlace);
                }
            }
        }
        for d in &self.dwellers {
            labels[d.block[1] * self.grid_w + d.block[0]] = Some(ActorKind::InPlace);
        }
        labels
    }

    /// Block index containing a block-space position.
    pub fn block_of(&self, pos: [f64; 2]) -> Option<usize> {
        let bx = pos[0].floor();
        let by = pos[1].floor();
        // points on the far edge belong to the last block
        let bx = if bx as usize == self.grid_w { bx - 1.0 } else { bx };
        let by = if by as usize == self.grid_h { by - 1.0 } else { by };
        if bx < 0.0 || by < 0.0 || bx as usize >= self.grid_w || by as usize >= self.grid_h {
            return None;
        }
        Some(by as usize * self.grid_w + bx as usize)
    }
}

fn path_length(p: &[[f64; 2]]) -> f64 {
    p.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

/// Position at arc length `s` and the unit heading of its segment.
fn point_along(p: &[[f64; 2]], s: f64) -> ([f64; 2], [f64; 2]) {
    let mut left = s.max(0.0);
    for w in p.windows(2) {
        let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        if left <= len {
            let f = left / len;
            return ([w[0][0] + f * dx, w[0][1] + f * dy], [dx / len, dy / len]);
        }
        left -= len;
    }
    let n = p.len();
    let (dx, dy) = (p[n - 1][0] - p[n - 2][0], p[n - 1][1] - p[n - 2][1]);
    let len = dx.hypot(dy).max(f64::MIN_POSITIVE);
    (p[n - 1], [dx / len, dy / len])
}

#[derive(Debug, Clone)]
enum Track {
    Path { points: Vec<[f64; 2]>, speed: f64 },
    Fixed { block: [usize; 2] },
}

#[derive(Debug, Clone)]
struct Trip {
    start_ms: u64,
    end_ms: u64,
    amplitude: f64,
    track: Track,
    event: Option<usize>,
}

/// One actor's position at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorState {
    pub kind: ActorKind,
    /// Block-space position (block centers for in-place actors).
    pub pos: [f64; 2],
    /// Unit heading for moving actors.
    pub heading: Option<[f64; 2]>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedEvent {
    pub start_ms: u64,
    pub end_ms: u64,
    pub kind: ActorKind,
    pub blocks: Vec<usize>,
}

impl PlantedEvent {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

/// Labels accumulated while a stream is generated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub grid_w: usize,
    pub grid_h: usize,
    pub frames: u64,
    /// Per absolute minute (since t = 0), the mean noise-free density each
    /// block received. Minutes without planted activity are omitted.
    pub minute_activity: BTreeMap<u64, Vec<f64>>,
    pub events: Vec<PlantedEvent>,
    /// 1 where any walker path, event or dweller can put activity.
    pub walkable: Vec<u8>,
    /// `moving`, `in_place` or null per block.
    pub labels: Vec<Option<ActorKind>>,
}

impl GroundTruth {
    /// Mean planted density per minute of the day, averaged over days and
    /// blocks.
    pub fn mean_minute_curve(&self, days: u64) -> Vec<f64> {
        let mut out = vec![0.0; MINUTES_PER_DAY];
        let k = (self.grid_w * self.grid_h) as f64;
        for (&m, blocks) in &self.minute_activity {
            out[(m % MINUTES_PER_DAY as u64) as usize] += blocks.iter().sum::<f64>() / k;
        }
        out.iter_mut().for_each(|v| *v /= days.max(1) as f64);
        out
    }
}

/// Frame-by-frame generator over `days` simulated day windows.
pub struct StreamGenerator {
    scenario: Scenario,
    days: u64,
    day: u64,
    frame_in_day: u64,
    frames_per_day: u64,
    trips: Vec<Trip>,
    next_trip: usize,
    active: Vec<usize>,
    noise_rng: ChaCha8Rng,
    actor_rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    profile: Vec<f64>,
    current: Vec<ActorState>,
    // ground truth
    truth: GroundTruth,
    minute_acc: Option<(u64, Vec<f64>, u32)>,
}

impl StreamGenerator {
    pub fn new(scenario: &Scenario, days: u64) -> Result<Self> {
        scenario.validate()?;
        if days == 0 {
            return Err(Error::param("days must be >= 1"));
        }
        let profile = gen_daily_profile(&scenario.profile.template, scenario.profile.level)?;
        let noise = if scenario.noise_sigma > 0.0 {
            Some(Normal::new(0.0, scenario.noise_sigma).map_err(|e| Error::param(e.to_string()))?)
        } else {
            None
        };
        let labels = scenario.walkable();
        let mut g = Self {
            scenario: scenario.clone(),
            days,
            day: 0,
            frame_in_day: 0,
            frames_per_day: scenario.frames_per_day().max(1),
            trips: Vec::new(),
            next_trip: 0,
            active: Vec::new(),
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, "noise")),
            actor_rng: ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, "actors")),
            noise,
            profile,
            current: Vec::new(),
            truth: GroundTruth {
                scenario: scenario.name.clone(),
                grid_w: scenario.grid_w,
                grid_h: scenario.grid_h,
                frames: 0,
                minute_activity: BTreeMap::new(),
                events: Vec::new(),
                walkable: labels.iter().map(|l| l.is_some() as u8).collect(),
                labels,
            },
            minute_acc: None,
        };
        g.plan_day(0)?;
        Ok(g)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Actors present at the most recent frame.
    pub fn actors(&self) -> &[ActorState] {
        &self.current
    }

    fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    }

    /// Draws every trip of one day window.
    fn plan_day(&mut self, day: u64) -> Result<()> {
        let s = &self.scenario;
        let start = s.day_start_ms(day);
        let window_ms = (s.day_hours * 3_600_000.0).round() as u64;
        let end = start + window_ms;
        let first_minute = (start % MS_PER_DAY) / MS_PER_MINUTE;
        let minutes = window_ms.div_ceil(MS_PER_MINUTE);
        let rng = &mut self.actor_rng;
        let mut trips = Vec::new();

        for t in &s.traffic {
            let len = path_length(&t.path);
            let dur_ms = (len / t.speed * 1000.0).round() as u64;
            for m in 0..minutes {
                let intensity = self.profile[((first_minute + m) as usize) % MINUTES_PER_DAY];
                let n = Self::poisson(rng, t.per_min * intensity);
                for _ in 0..n {
                    let t0 = start + m * MS_PER_MINUTE + rng.random_range(0..MS_PER_MINUTE);
                    if t0 >= end {
                        continue;
                    }
                    let mut points = t.path.clone();
                    if t.both_ways && rng.random_bool(0.5) {
                        points.reverse();
                    }
                    trips.push(Trip {
                        start_ms: t0,
                        end_ms: (t0 + dur_ms).min(end),
                        amplitude: t.amplitude,
                        track: Track::Path { points, speed: t.speed },
                        event: None,
                    });
                }
            }
        }

        for d in &s.dwellers {
            let t0 = start + (d.start_s * 1000.0).round() as u64;
            let t1 = (t0 + (d.duration_s * 1000.0).round() as u64).min(end);
            if t0 < t1 {
                trips.push(Trip {
                    start_ms: t0,
                    end_ms: t1,
                    amplitude: d.amplitude,
                    track: Track::Fixed { block: d.block },
                    event: None,
                });
            }
        }

        if let Some(e) = &s.events {
            let dur_ms = (e.duration_s * 1000.0).round() as u64;
            let window: Vec<f64> = (0..minutes)
                .map(|m| self.profile[((first_minute + m) as usize) % MINUTES_PER_DAY])
                .collect();
            let mass: f64 = window.iter().sum();
            let mut starts = Vec::new();
            if mass > 0.0 {
                for (m, &w) in window.iter().enumerate() {
                    let n = Self::poisson(rng, e.per_day * w / mass);
                    for _ in 0..n {
                        starts.push(start + m as u64 * MS_PER_MINUTE + rng.random_range(0..MS_PER_MINUTE));
                    }
                }
            }
            starts.sort_unstable();
            let gap_ms = (e.min_gap_s * 1000.0).round() as u64;
            let mut last: Option<u64> = None;
            for t0 in starts {
                if t0 + dur_ms > end || last.is_some_and(|l| t0 < l + gap_ms) {
                    continue;
                }
                last = Some(t0);
                let track = match e.kind {
                    ActorKind::Moving => {
                        let points = e.path.clone().unwrap_or_else(|| s.default_event_path());
                        let speed = path_length(&points) / e.duration_s;
                        Track::Path { points, speed }
                    }
                    ActorKind::InPlace => Track::Fixed {
                        block: e.block.unwrap_or([s.grid_w / 2, s.grid_h / 2]),
                    },
                };
                let idx = self.truth.events.len();
                self.truth.events.push(PlantedEvent {
                    start_ms: t0,
                    end_ms: t0 + dur_ms,
                    kind: e.kind,
                    blocks: Vec::new(),
                });
                trips.push(Trip {
                    start_ms: t0,
                    end_ms: t0 + dur_ms,
                    amplitude: e.amplitude,
                    track,
                    event: Some(idx),
                });
            }
        }

        trips.sort_by_key(|t| t.start_ms);
        self.trips = trips;
        self.next_trip = 0;
        self.active.clear();
        Ok(())
    }

    fn frame_time(&self) -> u64 {
        self.scenario.day_start_ms(self.day) + (self.frame_in_day as f64 * self.scenario.frame_period_ms()).round() as u64
    }

    /// Advances one frame: returns its timestamp and updates
    /// [`Self::actors`], or `None` when the run is over.
    pub fn advance(&mut self) -> Option<u64> {
        if self.frame_in_day == self.frames_per_day {
            self.day += 1;
            self.frame_in_day = 0;
            if self.day >= self.days {
                return None;
            }
            self.plan_day(self.day).expect("scenario validated");
        }
        if self.day >= self.days {
            return None;
        }
        let t = self.frame_time();
        self.frame_in_day += 1;

        while self.next_trip < self.trips.len() && self.trips[self.next_trip].start_ms <= t {
            self.active.push(self.next_trip);
            self.next_trip += 1;
        }
        let trips = &self.trips;
        self.active.retain(|&i| trips[i].end_ms > t);

        self.current.clear();
        for &i in &self.active {
            let trip = &self.trips[i];
            let st = match &trip.track {
                Track::Path { points, speed } => {
                    let s = (t - trip.start_ms) as f64 / 1000.0 * speed;
                    let (pos, heading) = point_along(points, s);
                    ActorState {
                        kind: ActorKind::Moving,
                        pos,
                        heading: Some(heading),
                        amplitude: trip.amplitude,
                    }
                }
                Track::Fixed { block } => ActorState {
                    kind: ActorKind::InPlace,
                    pos: [block[0] as f64 + 0.5, block[1] as f64 + 0.5],
                    heading: None,
                    amplitude: trip.amplitude,
                },
            };
            if let (Some(ev), Some(b)) = (trip.event, self.scenario.block_of(st.pos)) {
                let blocks = &mut self.truth.events[ev].blocks;
                if !blocks.contains(&b) {
                    blocks.push(b);
                }
            }
            self.current.push(st);
        }
        self.truth.frames += 1;
        Some(t)
    }

    /// Noise-free deposits of the current actors and flashes.
    fn planted_blocks(&self) -> Vec<MotionBlock> {
        let s = &self.scenario;
        let mut blocks = vec![MotionBlock::ZERO; s.grid_w * s.grid_h];
        for f in &s.flashes {
            let b = &mut blocks[f.block[1] * s.grid_w + f.block[0]];
            b.density += f.amplitude;
            b.dir_hist.iter_mut().for_each(|h| *h += f.amplitude / DIRECTIONS as f64);
        }
        for a in &self.current {
            let Some(i) = s.block_of(a.pos) else { continue };
            let b = &mut blocks[i];
            b.density += a.amplitude;
            match a.heading {
                // block rows grow downwards; angles are counter-clockwise with screen-up positive
                Some(h) => b.dir_hist[direction_bin((-h[1]).atan2(h[0]))] += a.amplitude,
                None => b.dir_hist.iter_mut().for_each(|h| *h += a.amplitude / DIRECTIONS as f64),
            }
        }
        blocks
    }

    fn record_truth(&mut self, t: u64, planted: &[MotionBlock]) {
        let minute = t / MS_PER_MINUTE;
        if self.minute_acc.as_ref().is_some_and(|(m, _, _)| *m != minute) {
            self.flush_minute();
        }
        let acc = self
            .minute_acc
            .get_or_insert_with(|| (minute, vec![0.0; planted.len()], 0));
        for (a, b) in acc.1.iter_mut().zip(planted) {
            *a += b.density;
        }
        acc.2 += 1;
    }

    fn flush_minute(&mut self) {
        if let Some((m, sums, n)) = self.minute_acc.take() {
            if sums.iter().any(|&v| v > 0.0) {
                let n = n as f64;
                self.truth.minute_activity.insert(m, sums.into_iter().map(|v| v / n).collect());
            }
        }
    }

    /// Next feature frame with additive truncated-Gaussian density noise.
    pub fn next_motion(&mut self) -> Option<MotionFrame> {
        let t = self.advance()?;
        let mut blocks = self.planted_blocks();
        self.record_truth(t, &blocks);
        if let Some(n) = &self.noise {
            let bound = 2.0 * self.scenario.noise_sigma;
            for b in blocks.iter_mut() {
                let v = loop {
                    let v = n.sample(&mut self.noise_rng);
                    if v.abs() <= bound {
                        break v;
                    }
                };
                b.density = (b.density + v).max(0.0);
            }
        }
        Some(MotionFrame {
            grid_w: self.scenario.grid_w,
            grid_h: self.scenario.grid_h,
            blocks,
            timestamp_ms: t,
        })
    }

    /// Next pixel-mode frame: dark background, bright square walkers and
    /// dwellers whose brightness alternates between frames.
    pub fn next_gray(&mut self) -> Option<GrayFrame> {
        let t = self.advance()?;
        let planted = self.planted_blocks();
        self.record_truth(t, &planted);
        let s = &self.scenario;
        let bp = s.block_px;
        let (w, h) = (s.grid_w * bp, s.grid_h * bp);
        let mut px = vec![30u8; w * h];
        let half = (bp / 4).max(1) as isize;
        let odd = self.frame_in_day % 2 == 1;
        let mut paint = |cx: f64, cy: f64, v: u8| {
            let (cx, cy) = ((cx * bp as f64) as isize, (cy * bp as f64) as isize);
            for y in (cy - half)..(cy + half) {
                for x in (cx - half)..(cx + half) {
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        px[y as usize * w + x as usize] = v;
                    }
                }
            }
        };
        for f in &s.flashes {
            let v = if odd { 30 + (200.0 * f.amplitude.min(1.0)) as u8 } else { 30 };
            paint(f.block[0] as f64 + 0.5, f.block[1] as f64 + 0.5, v);
        }
        for a in &self.current {
            let bright = 30 + (200.0 * a.amplitude.min(1.0)) as u8;
            let v = match a.kind {
                ActorKind::Moving => bright,
                ActorKind::InPlace if odd => bright,
                ActorKind::InPlace => 30 + (bright - 30) / 2,
            };
            paint(a.pos[0], a.pos[1], v);
        }
        GrayFrame::new(w, h, px, t).ok()
    }

    /// Closes the minute accumulator and returns the labels.
    pub fn into_truth(mut self) -> GroundTruth {
        self.flush_minute();
        self.truth
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }
}

impl Iterator for StreamGenerator {
    type Item = MotionFrame;

    fn next(&mut self) -> Option<MotionFrame> {
        self.next_motion()
    }
}

/// Generates a whole feature-mode run in memory.
pub fn gen_stream(scenario: &Scenario, days: u64) -> Result<(Vec<MotionFrame>, GroundTruth)> {
    let mut g = StreamGenerator::new(scenario, days)?;
    let frames: Vec<MotionFrame> = g.by_ref().collect();
    Ok((frames, g.into_truth()))
}
