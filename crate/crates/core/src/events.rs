//! Activity-gated detection.
//!
//! The short-term bands are reduced to one scalar per tick (per-block max of
//! in-place and moving activity, averaged over blocks) and compared against
//! the isochronal mean plus `k_sigma` standard deviations for the current
//! minute of day. A positive decision opens an event; the expensive detector
//! runs once at each event onset.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isochron::{IsochronalStore, MINUTES_PER_DAY};
use crate::motion::{MotionFrame, MS_PER_MINUTE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateParams {
    pub k_sigma: f64,
    /// Consecutive quiet time that closes an open event, seconds.
    pub cooldown_s: f64,
    /// Threshold used while a minute slot has fewer than `min_days` days.
    pub min_threshold: f64,
    pub min_days: u32,
    /// Re-run the detector every this many seconds inside an open event;
    /// 0 disables re-invocation.
    pub reinvoke_every_s: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            k_sigma: 2.0,
            cooldown_s: 3.0,
            min_threshold: 0.05,
            min_days: 3,
            reinvoke_every_s: 0.0,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_sigma >= 0.0 && self.k_sigma.is_finite()) {
            return Err(Error::param(format!("k_sigma must be >= 0, got {}", self.k_sigma)));
        }
        if !(self.cooldown_s >= 0.0 && self.cooldown_s.is_finite()) {
            return Err(Error::param(format!("cooldown_s must be >= 0, got {}", self.cooldown_s)));
        }
        if !(self.min_threshold >= 0.0 && self.min_threshold.is_finite()) {
            return Err(Error::param("min_threshold must be >= 0"));
        }
        if !(self.reinvoke_every_s >= 0.0 && self.reinvoke_every_s.is_finite()) {
            return Err(Error::param("reinvoke_every_s must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerBand {
    InPlace,
    Moving,
    Both,
}

/// Isochronal statistics for the current minute.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActivityStats {
    pub mean: f64,
    pub std: f64,
    pub days_observed: u32,
}

impl ActivityStats {
    pub fn from_store(store: &IsochronalStore, t_ms: u64) -> Result<Self> {
        let minute = minute_of_day(t_ms);
        let snap = store.query(minute)?;
        let (mean, std) = snap.activity_stats();
        Ok(Self {
            mean,
            std,
            days_observed: snap.days_observed,
        })
    }
}

pub fn minute_of_day(t_ms: u64) -> usize {
    ((t_ms / MS_PER_MINUTE) % MINUTES_PER_DAY as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdContext {
    pub mean: f64,
    pub std: f64,
    pub k_sigma: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityEvent {
    pub camera_id: String,
    pub start_ms: u64,
    /// `None` while the event is open.
    pub end_ms: Option<u64>,
    pub peak: f64,
    pub band: TriggerBand,
    pub context: ThresholdContext,
}

impl ActivityEvent {
    pub fn duration_ms(&self) -> Option<u64> {
        self.end_ms.map(|e| e - self.start_ms)
    }

    /// `{"cam":..,"start_ms":..,"end_ms":..,"peak":..,"band":..}`
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            cam: &'a str,
            start_ms: u64,
            end_ms: Option<u64>,
            peak: f64,
            band: TriggerBand,
        }
        serde_json::to_string(&Wire {
            cam: &self.camera_id,
            start_ms: self.start_ms,
            end_ms: self.end_ms,
            peak: self.peak,
            band: self.band,
        })
        .expect("event serializes")
    }
}

/// Outcome of one gate tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub fire: bool,
    /// A new event opened on this tick.
    pub onset: bool,
    pub activity: f64,
    pub threshold: f64,
}

/// Scalar activity: per block the larger of the two short-term densities,
/// averaged over blocks.
pub fn scalar_activity(m_s1: &MotionFrame, m_s2: &MotionFrame) -> Result<f64> {
    m_s1.check_grid(m_s2)?;
    if m_s1.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = m_s1
        .blocks
        .iter()
        .zip(&m_s2.blocks)
        .map(|(a, b)| a.density.max(b.density))
        .sum();
    Ok(sum / m_s1.len() as f64)
}

/// Per-camera gate with hysteresis. Ticks are the short-term band updates;
/// a tick stamped `t` covers `(t - tick_ms, t]`.
#[derive(Debug, Clone)]
pub struct EventGate {
    camera_id: String,
    params: GateParams,
    tick_ms: u64,
    open: Option<ActivityEvent>,
    last_fire_ms: u64,
    events: Vec<ActivityEvent>,
}

impl EventGate {
    pub fn new(camera_id: impl Into<String>, params: GateParams, tick_ms: u64) -> Result<Self> {
        params.validate()?;
        if tick_ms == 0 {
            return Err(Error::param("tick period must be positive"));
        }
        Ok(Self {
            camera_id: camera_id.into(),
            params,
            tick_ms,
            open: None,
            last_fire_ms: 0,
            events: Vec::new(),
        })
    }

    pub fn threshold(&self, stats: &ActivityStats) -> f64 {
        if stats.days_observed < self.params.min_days {
            self.params.min_threshold
        } else {
            stats.mean + self.params.k_sigma * stats.std
        }
    }

    pub fn detect(&mut self, m_s1: &MotionFrame, m_s2: &MotionFrame, stats: &ActivityStats) -> Result<Decision> {
        let activity = scalar_activity(m_s1, m_s2)?;
        let threshold = self.threshold(stats);
        let t = m_s1.timestamp_ms.max(m_s2.timestamp_ms);
        let fire = activity > threshold;

        // close a stale event before considering a new one
        if self.open.is_some() {
            let quiet = t.saturating_sub(self.last_fire_ms) as f64 / 1000.0;
            if !fire && quiet >= self.params.cooldown_s {
                let mut ev = self.open.take().expect("checked");
                ev.end_ms = Some(self.last_fire_ms);
                self.events.push(ev);
            }
        }

        let mut onset = false;
        if fire {
            match &mut self.open {
                Some(ev) => {
                    ev.peak = ev.peak.max(activity);
                }
                None => {
                    onset = true;
                    let s1 = m_s1.mean_density();
                    let s2 = m_s2.mean_density();
                    let band = match (s1 > threshold, s2 > threshold) {
                        (true, true) => TriggerBand::Both,
                        (true, false) => TriggerBand::InPlace,
                        (false, true) => TriggerBand::Moving,
                        (false, false) if s2 > s1 => TriggerBand::Moving,
                        (false, false) => TriggerBand::InPlace,
                    };
                    self.open = Some(ActivityEvent {
                        camera_id: self.camera_id.clone(),
                        start_ms: t.saturating_sub(self.tick_ms),
                        end_ms: None,
                        peak: activity,
                        band,
                        context: ThresholdContext {
                            mean: stats.mean,
                            std: stats.std,
                            k_sigma: self.params.k_sigma,
                            threshold,
                        },
                    });
                }
            }
            self.last_fire_ms = t;
        }
        Ok(Decision {
            fire,
            onset,
            activity,
            threshold,
        })
    }

    pub fn open_event(&self) -> Option<&ActivityEvent> {
        self.open.as_ref()
    }

    pub fn closed_events(&self) -> &[ActivityEvent] {
        &self.events
    }

    /// Closes any open event at its last positive tick and returns the log.
    pub fn finish(mut self) -> Vec<ActivityEvent> {
        if let Some(mut ev) = self.open.take() {
            ev.end_ms = Some(self.last_fire_ms);
            self.events.push(ev);
        }
        self.events
    }
}

/// Expensive per-frame detector invoked behind the gate.
pub trait Detector {
    /// Indices of blocks containing persons in the frame at `t_ms`.
    fn detect(&self, t_ms: u64) -> Vec<usize>;

    /// Frames consumed per invocation.
    fn frame_cost(&self) -> u64 {
        1
    }
}

/// Deterministic stand-in for a neural detector: answers from known person
/// intervals (for example simulator ground truth), otherwise empty.
#[derive(Debug, Clone, Default)]
pub struct DetectorStub {
    intervals: Vec<(u64, u64, Vec<usize>)>,
    frame_cost: u64,
}

impl DetectorStub {
    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
            frame_cost: 1,
        }
    }

    /// `intervals` are `[start_ms, end_ms)` with the person blocks inside.
    pub fn from_intervals(intervals: Vec<(u64, u64, Vec<usize>)>) -> Self {
        Self {
            intervals,
            frame_cost: 1,
        }
    }
}

impl Detector for DetectorStub {
    fn detect(&self, t_ms: u64) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .intervals
            .iter()
            .filter(|(s, e, _)| (*s..*e).contains(&t_ms))
            .flat_map(|(_, _, blocks)| blocks.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn frame_cost(&self) -> u64 {
        self.frame_cost.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub events: Vec<ActivityEvent>,
    pub invocations: u64,
    pub detector_frames: u64,
    pub frames_processed: u64,
    /// Person detections returned by the detector, one entry per invocation.
    pub detections: Vec<(u64, Vec<usize>)>,
}

/// Streaming form of [`gate_pipeline`]: feed one band pair per short-term
/// tick, then [`GateRunner::finish`].
#[derive(Debug, Clone)]
pub struct GateRunner {
    gate: EventGate,
    reinvoke_ms: u64,
    last_invoke_ms: u64,
    invocations: u64,
    frames: u64,
    detections: Vec<(u64, Vec<usize>)>,
}

impl GateRunner {
    pub fn new(camera_id: &str, params: GateParams, tick_ms: u64) -> Result<Self> {
        Ok(Self {
            gate: EventGate::new(camera_id, params, tick_ms)?,
            reinvoke_ms: (params.reinvoke_every_s * 1000.0).round() as u64,
            last_invoke_ms: 0,
            invocations: 0,
            frames: 0,
            detections: Vec::new(),
        })
    }

    pub fn push<D: Detector + ?Sized>(&mut self, s1: &MotionFrame, s2: &MotionFrame, store: &IsochronalStore, detector: &D) -> Result<Decision> {
        self.frames += 1;
        let t = s1.timestamp_ms.max(s2.timestamp_ms);
        let stats = ActivityStats::from_store(store, t)?;
        let d = self.gate.detect(s1, s2, &stats)?;
        let reinvoke = self.reinvoke_ms > 0 && d.fire && !d.onset && t >= self.last_invoke_ms + self.reinvoke_ms;
        if d.onset || reinvoke {
            self.invocations += 1;
            self.last_invoke_ms = t;
            self.detections.push((t, detector.detect(t)));
        }
        Ok(d)
    }

    pub fn invocations(&self) -> u64 {
        self.invocations
    }

    pub fn finish<D: Detector + ?Sized>(self, detector: &D) -> GateReport {
        GateReport {
            events: self.gate.finish(),
            invocations: self.invocations,
            detector_frames: self.invocations * detector.frame_cost(),
            frames_processed: self.frames,
            detections: self.detections,
        }
    }
}

/// Runs the gate over a stream of `(m_S1, m_S2)` short-term band pairs.
pub fn gate_pipeline<'a, I, D>(
    bands: I,
    store: &IsochronalStore,
    detector: &D,
    camera_id: &str,
    params: GateParams,
    tick_ms: u64,
) -> Result<GateReport>
where
    I: IntoIterator<Item = (&'a MotionFrame, &'a MotionFrame)>,
    D: Detector + ?Sized,
{
    let mut runner = GateRunner::new(camera_id, params, tick_ms)?;
    for (s1, s2) in bands {
        runner.push(s1, s2, store, detector)?;
    }
    Ok(runner.finish(detector))
}

/// Fraction of the workday covered by closed events.
pub fn duty_cycle(events: &[ActivityEvent], workday_h: f64) -> Result<f64> {
    if !(workday_h > 0.0 && workday_h.is_finite()) {
        return Err(Error::param(format!("workday must be positive, got {workday_h} h")));
    }
    let total_ms: u64 = events.iter().filter_map(ActivityEvent::duration_ms).sum();
    Ok(total_ms as f64 / (workday_h * 3_600_000.0))
}

pub fn write_events_jsonl<W: Write>(mut w: W, events: &[ActivityEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}", e.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    /// Power draw of the activity filter for all cameras, watts.
    pub activity_power_w: f64,
    /// Power draw of one detector instance, watts.
    pub detector_power_w: f64,
    pub detector_fps: f64,
    pub cameras: u32,
    pub workday_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    Activity,
    Hybrid,
    Continuous,
}

impl DetectionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "activity" => Ok(Self::Activity),
            "hybrid" => Ok(Self::Hybrid),
            "continuous" | "object" => Ok(Self::Continuous),
            other => Err(Error::param(format!("unknown detection mode {other:?}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Activity => "activity",
            Self::Hybrid => "hybrid",
            Self::Continuous => "object",
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("activity_power_w", self.activity_power_w),
            ("detector_power_w", self.detector_power_w),
            ("detector_fps", self.detector_fps),
            ("workday_h", self.workday_h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cameras == 0 {
            return Err(Error::param("cameras must be positive"));
        }
        Ok(())
    }

    pub fn gpus(&self, mode: DetectionMode) -> u32 {
        match mode {
            DetectionMode::Activity => 0,
            DetectionMode::Hybrid => 1,
            DetectionMode::Continuous => self.cameras,
        }
    }
}

/// Watt-hours over one workday.
///
/// Hybrid mode adds one detector frame per event per camera on top of the
/// always-on activity filter; continuous mode runs a detector per camera for
/// the whole workday.
pub fn energy_estimate(model: &EnergyModel, mode: DetectionMode, events_per_camera: f64) -> Result<f64> {
    model.validate()?;
    if !(events_per_camera >= 0.0 && events_per_camera.is_finite()) {
        return Err(Error::param("events per camera must be >= 0"));
    }
    let base = model.activity_power_w * model.workday_h;
    let cams = model.cameras as f64;
    Ok(match mode {
        DetectionMode::Activity => base,
        DetectionMode::Hybrid => {
            let detector_hours = events_per_camera / model.detector_fps / 3600.0;
            base + cams * detector_hours * model.detector_power_w
        }
        DetectionMode::Continuous => base + cams * model.detector_power_w * model.workday_h,
    })
}

/// Table of energy per mode for a single camera and a camera network:
/// `detection,cpus_single,gpus_single,energy_wh_single,cpus_network,gpus_network,energy_wh_network`.
pub fn energy_table_csv(single: &EnergyModel, network: &EnergyModel, events_per_camera: f64) -> Result<String> {
    let mut out = String::from("detection,cpus_single,gpus_single,energy_wh_single,cpus_network,gpus_network,energy_wh_network\n");
    for mode in [DetectionMode::Activity, DetectionMode::Hybrid, DetectionMode::Continuous] {
        let e1 = energy_estimate(single, mode, events_per_camera)?;
        let en = energy_estimate(network, mode, events_per_camera)?;
        out.push_str(&format!(
            "{},1,{},{:.1},1,{},{:.1}\n",
            mode.label(),
            single.gpus(mode),
            e1,
            network.gpus(mode),
            en
        ));
    }
    Ok(out)
}
