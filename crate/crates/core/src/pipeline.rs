//! Per-camera processing: the band filter, the per-minute `L1` aggregate
//! feeding the isochronal store, and the event gate on short-term ticks.

use crate::error::Result;
use crate::events::{minute_of_day, Detector, GateParams, GateReport, GateRunner};
use crate::isochron::IsochronalStore;
use crate::motion::{MinuteAccumulator, MotionFrame, MS_PER_MINUTE};
use crate::tfilter::{BandFilter, BandOutputs, BandParams, CascadeState};

/// Folds frame-rate `m_L1` into one store sample per minute.
#[derive(Debug, Clone)]
pub struct MinuteLearner {
    acc: MinuteAccumulator,
    minute: Option<u64>,
    updates: u64,
}

impl MinuteLearner {
    pub fn new(grid_w: usize, grid_h: usize) -> Self {
        Self {
            acc: MinuteAccumulator::new(grid_w, grid_h),
            minute: None,
            updates: 0,
        }
    }

    pub fn push(&mut self, m_l1: &MotionFrame, store: &mut IsochronalStore) -> Result<()> {
        let minute = m_l1.timestamp_ms / MS_PER_MINUTE;
        if self.minute.is_some_and(|m| m != minute) {
            self.flush(store)?;
        }
        self.minute = Some(minute);
        self.acc.push(m_l1)
    }

    /// Writes the pending minute, if any, into the store.
    pub fn flush(&mut self, store: &mut IsochronalStore) -> Result<()> {
        if let Some(sample) = self.acc.finish() {
            store.update(minute_of_day(sample.timestamp_ms), &sample)?;
            self.updates += 1;
        }
        self.minute = None;
        Ok(())
    }

    /// Store updates written so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }
}

/// Cascade filter plus store learning for one camera.
pub struct CameraPipeline {
    filter: CascadeState,
    learner: MinuteLearner,
    tick: u64,
}

impl CameraPipeline {
    pub fn new(grid_w: usize, grid_h: usize, params: &BandParams) -> Result<Self> {
        Ok(Self {
            filter: CascadeState::new(grid_w, grid_h, params)?,
            learner: MinuteLearner::new(grid_w, grid_h),
            tick: 0,
        })
    }

    pub fn filter(&self) -> &CascadeState {
        &self.filter
    }

    /// Filters one frame without touching a store.
    pub fn step(&mut self, frame: &MotionFrame) -> Result<BandOutputs> {
        let out = self.filter.step(frame, self.tick)?;
        self.tick += 1;
        Ok(out)
    }

    /// Filters one frame and learns its `m_L1` into `store`.
    pub fn step_learn(&mut self, frame: &MotionFrame, store: &mut IsochronalStore) -> Result<BandOutputs> {
        let out = self.step(frame)?;
        self.learner.push(&out.m_l1, store)?;
        Ok(out)
    }

    pub fn finish_learning(&mut self, store: &mut IsochronalStore) -> Result<u64> {
        self.learner.flush(store)?;
        Ok(self.learner.updates())
    }
}

/// Learns a store from a frame stream; returns the number of minute updates.
pub fn learn_store<I>(frames: I, store: &mut IsochronalStore, params: &BandParams) -> Result<u64>
where
    I: IntoIterator<Item = MotionFrame>,
{
    let (gw, gh) = store.grid();
    let mut p = CameraPipeline::new(gw, gh, params)?;
    for f in frames {
        p.step_learn(&f, store)?;
    }
    p.finish_learning(store)
}

/// Filters a frame stream and gates every short-term tick against `store`.
pub fn gate_stream<I, D>(
    frames: I,
    store: &IsochronalStore,
    detector: &D,
    camera_id: &str,
    params: &BandParams,
    gate: GateParams,
) -> Result<GateReport>
where
    I: IntoIterator<Item = MotionFrame>,
    D: Detector + ?Sized,
{
    let (gw, gh) = store.grid();
    let mut p = CameraPipeline::new(gw, gh, params)?;
    let tick_ms = (1000.0 / params.shortterm_rate).round() as u64;
    let mut runner = GateRunner::new(camera_id, gate, tick_ms)?;
    for f in frames {
        let out = p.step(&f)?;
        if out.short_tick {
            runner.push(&out.m_s1, &out.m_s2, store, detector)?;
        }
    }
    Ok(runner.finish(detector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::DetectorStub;

    fn frames(n: u64, period_ms: u64, density: impl Fn(u64) -> f64) -> Vec<MotionFrame> {
        (0..n)
            .map(|i| {
                let mut f = MotionFrame::zeros(2, 1, i * period_ms);
                f.blocks[0].density = density(i);
                f
            })
            .collect()
    }

    #[test]
    fn one_update_per_minute() {
        let params = BandParams {
            frame_rate: 1.0,
            ..BandParams::default()
        };
        let mut store = IsochronalStore::new("c", 2, 1, 10.0).unwrap();
        let n = learn_store(frames(600, 1000, |_| 0.0), &mut store, &params).unwrap();
        assert_eq!(n, 10);
        assert_eq!(store.days_observed(9).unwrap(), 1);
        assert_eq!(store.days_observed(10).unwrap(), 0);
    }

    #[test]
    fn learned_sample_is_minute_mean_of_highpass() {
        let params = BandParams {
            frame_rate: 1.0,
            ..BandParams::default()
        };
        let input = frames(60, 1000, |i| if i % 10 == 0 { 1.0 } else { 0.0 });
        // oracle: the high-pass recursion written out directly
        let a = params.alpha_l1().unwrap();
        let (mut lp, mut sum) = (0.0, 0.0);
        for f in &input {
            let x = f.blocks[0].density;
            lp = a * lp + (1.0 - a) * x;
            sum += (x - lp).max(0.0);
        }
        let mut store = IsochronalStore::new("c", 2, 1, 10.0).unwrap();
        learn_store(input, &mut store, &params).unwrap();
        let got = store.query(0).unwrap().mean.blocks[0].density;
        assert!((got - sum / 60.0).abs() < 1e-12);
    }

    #[test]
    fn quiet_stream_never_fires() {
        let params = BandParams {
            frame_rate: 1.0,
            ..BandParams::default()
        };
        let store = IsochronalStore::new("c", 2, 1, 10.0).unwrap();
        let r = gate_stream(frames(300, 1000, |_| 0.0), &store, &DetectorStub::empty(), "c", &params, GateParams::default()).unwrap();
        assert_eq!(r.invocations, 0);
        assert_eq!(r.frames_processed, 300);
        assert!(r.events.is_empty());
    }
}
