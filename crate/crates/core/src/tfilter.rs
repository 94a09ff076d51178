//! Temporal filters over motion frames.
//!
//! All recursive filtering is a first-order exponential moving average
//! parameterized by its 10%-decay duration `T`: with `n = r * T` samples at
//! rate `r`, `alpha = 0.1^(1/n)` so a zero-input response falls to 10% after
//! `n` samples. High-pass is the complement `x - LP(x)`.
//!
//! [`CascadeState`] extracts three bands from one stream:
//!
//! * `L1`: high-pass at `T_L1` on the frame-rate stream (stationary motion
//!   noise removed),
//! * `S1`: low-pass at `T_S1` of `L1` (short-term in-place activity),
//! * `S2`: FIR mean over `T_S2` of `L1 - S1` (short-term moving activity).
//!
//! The `S` stages run at `shortterm_rate`, fed the mean of `L1` over the frames
//! since the previous short-term tick. [`ReferenceFilter`] computes the same
//! bands with an independent low-pass on the band-pass branch, which is what a
//! non-cascaded design needs.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionBlock, MotionFrame, WireFrame};

/// `0.1^(1/(rate * duration))`.
pub fn alpha_from_decay(rate: f64, duration: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param(format!("rate must be positive, got {rate}")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::param(format!("decay duration must be positive, got {duration}")));
    }
    Ok(0.1f64.powf(1.0 / (rate * duration)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySpec {
    pub rate: f64,
    pub duration: f64,
    pub alpha: f64,
}

impl DecaySpec {
    pub fn new(rate: f64, duration: f64) -> Result<Self> {
        Ok(Self {
            rate,
            duration,
            alpha: alpha_from_decay(rate, duration)?,
        })
    }

    /// Samples until a zero-input response reaches 10%.
    pub fn samples(&self) -> f64 {
        self.rate * self.duration
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

#[inline]
fn ema(prev: f64, input: f64, alpha: f64) -> f64 {
    alpha * prev + (1.0 - alpha) * input
}

/// One low-pass update, applied identically to density and every bin.
pub fn ema_step(state: &MotionBlock, input: &MotionBlock, alpha: f64) -> Result<MotionBlock> {
    check_alpha(alpha)?;
    Ok(state.zip_with(input, |s, x| ema(s, x, alpha)))
}

/// High-pass output `input - LP(state, input)`, floored at zero.
pub fn highpass_step(state: &MotionBlock, input: &MotionBlock, alpha: f64) -> Result<MotionBlock> {
    let lp = ema_step(state, input, alpha)?;
    Ok(input.zip_with(&lp, |x, l| (x - l).max(0.0)))
}

fn ema_frame(state: &mut [MotionBlock], input: &[MotionBlock], alpha: f64) {
    for (s, x) in state.iter_mut().zip(input) {
        *s = s.zip_with(x, |s, x| ema(s, x, alpha));
    }
}

/// FIR arithmetic mean over the last `window` inputs.
#[derive(Debug, Clone)]
struct FirMean {
    window: usize,
    buf: VecDeque<Vec<MotionBlock>>,
}

impl FirMean {
    fn new(window: usize) -> Self {
        Self {
            window,
            buf: VecDeque::with_capacity(window),
        }
    }

    fn push(&mut self, input: Vec<MotionBlock>) -> Vec<MotionBlock> {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(input);
        let n = self.buf.len() as f64;
        let mut sum = vec![MotionBlock::ZERO; self.buf[0].len()];
        for frame in &self.buf {
            for (s, x) in sum.iter_mut().zip(frame) {
                *s = s.zip_with(x, |a, b| a + b);
            }
        }
        sum.iter().map(|s| s.map(|v| v / n)).collect()
    }

    fn len(&self) -> usize {
        self.buf.len()
    }
}

/// Decay durations and rates of the four bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandParams {
    /// Stationary-noise high-pass, seconds.
    pub t_l1_s: f64,
    /// Isochronal low-pass, days.
    pub t_l2_days: f64,
    /// In-place low-pass, seconds.
    pub t_s1_s: f64,
    /// Moving-band FIR window, seconds.
    pub t_s2_s: f64,
    pub frame_rate: f64,
    /// Update rate of the short-term stages, per second.
    pub shortterm_rate: f64,
}

impl Default for BandParams {
    fn default() -> Self {
        Self {
            t_l1_s: 1800.0,
            t_l2_days: 10.0,
            t_s1_s: 20.0,
            t_s2_s: 1.0,
            frame_rate: 30.0,
            shortterm_rate: 1.0,
        }
    }
}

impl BandParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_l1_s", self.t_l1_s),
            ("t_l2_days", self.t_l2_days),
            ("t_s1_s", self.t_s1_s),
            ("t_s2_s", self.t_s2_s),
            ("frame_rate", self.frame_rate),
            ("shortterm_rate", self.shortterm_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.t_s1_s <= self.t_s2_s {
            return Err(Error::param(format!(
                "t_s1_s ({}) must exceed t_s2_s ({}) for a non-empty band-pass",
                self.t_s1_s, self.t_s2_s
            )));
        }
        if self.t_l1_s <= self.t_s1_s {
            return Err(Error::param(format!(
                "t_l1_s ({}) must exceed t_s1_s ({})",
                self.t_l1_s, self.t_s1_s
            )));
        }
        if self.shortterm_rate > self.frame_rate {
            return Err(Error::param("shortterm_rate cannot exceed frame_rate"));
        }
        Ok(())
    }

    pub fn alpha_l1(&self) -> Result<f64> {
        alpha_from_decay(self.frame_rate, self.t_l1_s)
    }

    /// Isochronal coefficient: one sample per day.
    pub fn alpha_l2(&self) -> Result<f64> {
        alpha_from_decay(1.0, self.t_l2_days)
    }

    pub fn alpha_s1(&self) -> Result<f64> {
        alpha_from_decay(self.shortterm_rate, self.t_s1_s)
    }

    pub fn fir_window(&self) -> usize {
        ((self.shortterm_rate * self.t_s2_s).ceil() as usize).max(1)
    }

    /// Frame-rate ticks per short-term update.
    pub fn frames_per_short_tick(&self) -> u64 {
        ((self.frame_rate / self.shortterm_rate).round() as u64).max(1)
    }

    pub fn is_short_tick(&self, tick: u64) -> bool {
        (tick + 1) % self.frames_per_short_tick() == 0
    }
}

/// Operation and memory accounting in whole-motion-frame units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// Filter applications to a full motion frame.
    pub multiplies: u64,
    /// Persistent motion-frame-sized filter memories, excluding the shared
    /// isochronal store and the FIR window both designs need.
    pub state_frames: u64,
    /// Fully-updated (short-term) ticks processed.
    pub full_ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    L1,
    S1,
    S2,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::L1 => "L1",
            Band::S1 => "S1",
            Band::S2 => "S2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "L1" => Ok(Band::L1),
            "S1" => Ok(Band::S1),
            "S2" => Ok(Band::S2),
            other => Err(Error::InvalidInput(format!("unknown band {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandOutputs {
    /// Noise-free activity at frame rate.
    pub m_l1: MotionFrame,
    /// Short-term in-place activity, stamped at its last update.
    pub m_s1: MotionFrame,
    /// Short-term moving activity, stamped at its last update.
    pub m_s2: MotionFrame,
    /// Whether the short-term bands were recomputed on this tick.
    pub short_tick: bool,
}

impl BandOutputs {
    pub fn get(&self, band: Band) -> &MotionFrame {
        match band {
            Band::L1 => &self.m_l1,
            Band::S1 => &self.m_s1,
            Band::S2 => &self.m_s2,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for band in [Band::L1, Band::S1, Band::S2] {
            let wire = WireFrame::from_frame(self.get(band), Some(band.as_str()));
            writeln!(w, "{}", serde_json::to_string(&wire).expect("frame serializes"))?;
        }
        Ok(())
    }
}

/// Reads band records back; every record must carry a band tag.
pub fn read_bands_jsonl<R: BufRead>(r: R) -> Result<Vec<(Band, MotionFrame)>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut wire: WireFrame = serde_json::from_str(&line)?;
        let band = wire
            .band
            .take()
            .ok_or_else(|| Error::InvalidInput(format!("line {}: missing band tag", n + 1)))?;
        out.push((Band::parse(&band)?, wire.into_frame()?));
    }
    Ok(out)
}

/// A band extractor fed one motion frame per frame-rate tick.
pub trait BandFilter {
    fn step(&mut self, input: &MotionFrame, tick: u64) -> Result<BandOutputs>;
    fn counters(&self) -> Counters;
}

/// Frame-rate high-pass plus the down-sampling accumulator feeding the
/// short-term stages. Shared by both filter layouts.
#[derive(Debug, Clone)]
struct FrontEnd {
    grid_w: usize,
    grid_h: usize,
    alpha_l1: f64,
    lp_l1: Vec<MotionBlock>,
    acc: Vec<MotionBlock>,
    acc_n: u32,
}

impl FrontEnd {
    fn new(grid_w: usize, grid_h: usize, params: &BandParams) -> Result<Self> {
        let k = grid_w * grid_h;
        Ok(Self {
            grid_w,
            grid_h,
            alpha_l1: params.alpha_l1()?,
            lp_l1: vec![MotionBlock::ZERO; k],
            acc: vec![MotionBlock::ZERO; k],
            acc_n: 0,
        })
    }

    fn check(&self, input: &MotionFrame) -> Result<()> {
        if input.grid_w != self.grid_w || input.grid_h != self.grid_h {
            return Err(Error::rejected(format!(
                "input grid {}x{} does not match filter grid {}x{}",
                input.grid_w, input.grid_h, self.grid_w, self.grid_h
            )));
        }
        Ok(())
    }

    /// Returns `m_L1` and accumulates it.
    fn highpass(&mut self, input: &MotionFrame) -> MotionFrame {
        ema_frame(&mut self.lp_l1, &input.blocks, self.alpha_l1);
        let m_l1 = MotionFrame {
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            blocks: input
                .blocks
                .iter()
                .zip(&self.lp_l1)
                .map(|(x, l)| x.zip_with(l, |x, l| (x - l).max(0.0)))
                .collect(),
            timestamp_ms: input.timestamp_ms,
        };
        for (a, x) in self.acc.iter_mut().zip(&m_l1.blocks) {
            *a = a.zip_with(x, |a, x| a + x);
        }
        self.acc_n += 1;
        m_l1
    }

    /// Mean of `m_L1` since the last short-term tick; resets the accumulator.
    fn drain(&mut self) -> Vec<MotionBlock> {
        let n = self.acc_n.max(1) as f64;
        let out = self.acc.iter().map(|a| a.map(|v| v / n)).collect();
        self.acc.iter_mut().for_each(|a| *a = MotionBlock::ZERO);
        self.acc_n = 0;
        out
    }
}

fn frame_from(grid_w: usize, grid_h: usize, blocks: Vec<MotionBlock>, t: u64) -> MotionFrame {
    MotionFrame {
        grid_w,
        grid_h,
        blocks,
        timestamp_ms: t,
    }
}

/// Per-camera state of the cascaded filter.
#[derive(Debug, Clone)]
pub struct CascadeState {
    params: BandParams,
    front: FrontEnd,
    alpha_s1: f64,
    lp_s1: Vec<MotionBlock>,
    fir_s2: FirMean,
    m_s1: MotionFrame,
    m_s2: MotionFrame,
    counters: Counters,
}

impl CascadeState {
    /// Filter memories owned by the cascade: the `T_L1` and `T_S1` low-passes.
    pub const STATE_FRAMES: u64 = 2;
    /// Filter applications per fully-updated tick: `F_L1`, `F_L2`, `F_S1`,
    /// `F_S2`. The band-pass high side reuses the `F_S1` output.
    pub const FILTERS_PER_TICK: u64 = 4;

    pub fn new(grid_w: usize, grid_h: usize, params: &BandParams) -> Result<Self> {
        params.validate()?;
        if grid_w == 0 || grid_h == 0 {
            return Err(Error::param("grid dimensions must be positive"));
        }
        Ok(Self {
            params: *params,
            front: FrontEnd::new(grid_w, grid_h, params)?,
            alpha_s1: params.alpha_s1()?,
            lp_s1: vec![MotionBlock::ZERO; grid_w * grid_h],
            fir_s2: FirMean::new(params.fir_window()),
            m_s1: MotionFrame::zeros(grid_w, grid_h, 0),
            m_s2: MotionFrame::zeros(grid_w, grid_h, 0),
            counters: Counters {
                state_frames: Self::STATE_FRAMES,
                ..Counters::default()
            },
        })
    }

    pub fn params(&self) -> &BandParams {
        &self.params
    }

    /// Current length of the FIR window buffer.
    pub fn fir_len(&self) -> usize {
        self.fir_s2.len()
    }
}

impl BandFilter for CascadeState {
    fn step(&mut self, input: &MotionFrame, tick: u64) -> Result<BandOutputs> {
        self.front.check(input)?;
        let m_l1 = self.front.highpass(input);
        let short_tick = self.params.is_short_tick(tick);
        if short_tick {
            let (gw, gh, t) = (self.front.grid_w, self.front.grid_h, input.timestamp_ms);
            let x = self.front.drain();
            // F_L1 and the shared F_L2 store stage
            self.counters.multiplies += 2;
            ema_frame(&mut self.lp_s1, &x, self.alpha_s1);
            self.counters.multiplies += 1;
            let residual: Vec<MotionBlock> = x
                .iter()
                .zip(&self.lp_s1)
                .map(|(x, s)| x.zip_with(s, |x, s| x - s))
                .collect();
            let s2 = self
                .fir_s2
                .push(residual)
                .into_iter()
                .map(|b| b.map(|v| v.max(0.0)))
                .collect();
            self.counters.multiplies += 1;
            self.m_s1 = frame_from(gw, gh, self.lp_s1.clone(), t);
            self.m_s2 = frame_from(gw, gh, s2, t);
            self.counters.full_ticks += 1;
        }
        Ok(BandOutputs {
            m_l1,
            m_s1: self.m_s1.clone(),
            m_s2: self.m_s2.clone(),
            short_tick,
        })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

/// Non-cascaded layout: the band-pass keeps its own `T_S1` low-pass instead
/// of reusing the in-place band.
#[derive(Debug, Clone)]
pub struct ReferenceFilter {
    params: BandParams,
    front: FrontEnd,
    alpha_s1: f64,
    lp_s1: Vec<MotionBlock>,
    lp_bandpass: Vec<MotionBlock>,
    fir_s2: FirMean,
    m_s1: MotionFrame,
    m_s2: MotionFrame,
    counters: Counters,
}

impl ReferenceFilter {
    pub const STATE_FRAMES: u64 = 3;
    /// `F_L1`, `F_L2`, `F_S1`, and the band-pass as two filters.
    pub const FILTERS_PER_TICK: u64 = 5;

    pub fn new(grid_w: usize, grid_h: usize, params: &BandParams) -> Result<Self> {
        params.validate()?;
        if grid_w == 0 || grid_h == 0 {
            return Err(Error::param("grid dimensions must be positive"));
        }
        let k = grid_w * grid_h;
        Ok(Self {
            params: *params,
            front: FrontEnd::new(grid_w, grid_h, params)?,
            alpha_s1: params.alpha_s1()?,
            lp_s1: vec![MotionBlock::ZERO; k],
            lp_bandpass: vec![MotionBlock::ZERO; k],
            fir_s2: FirMean::new(params.fir_window()),
            m_s1: MotionFrame::zeros(grid_w, grid_h, 0),
            m_s2: MotionFrame::zeros(grid_w, grid_h, 0),
            counters: Counters {
                state_frames: Self::STATE_FRAMES,
                ..Counters::default()
            },
        })
    }
}

impl BandFilter for ReferenceFilter {
    fn step(&mut self, input: &MotionFrame, tick: u64) -> Result<BandOutputs> {
        self.front.check(input)?;
        let m_l1 = self.front.highpass(input);
        let short_tick = self.params.is_short_tick(tick);
        if short_tick {
            let (gw, gh, t) = (self.front.grid_w, self.front.grid_h, input.timestamp_ms);
            let x = self.front.drain();
            self.counters.multiplies += 2;
            // in-place band
            ema_frame(&mut self.lp_s1, &x, self.alpha_s1);
            // band-pass: its own high-pass at T_S1, then the FIR low-pass
            ema_frame(&mut self.lp_bandpass, &x, self.alpha_s1);
            self.counters.multiplies += 2;
            let highpassed: Vec<MotionBlock> = x
                .iter()
                .zip(&self.lp_bandpass)
                .map(|(x, l)| x.zip_with(l, |x, l| x - l))
                .collect();
            let s2 = self
                .fir_s2
                .push(highpassed)
                .into_iter()
                .map(|b| b.map(|v| v.max(0.0)))
                .collect();
            self.counters.multiplies += 1;
            self.m_s1 = frame_from(gw, gh, self.lp_s1.clone(), t);
            self.m_s2 = frame_from(gw, gh, s2, t);
            self.counters.full_ticks += 1;
        }
        Ok(BandOutputs {
            m_l1,
            m_s1: self.m_s1.clone(),
            m_s2: self.m_s2.clone(),
            short_tick,
        })
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> MotionBlock {
        let mut b = MotionBlock::ZERO;
        b.density = v;
        b.dir_hist[2] = v;
        b
    }

    #[test]
    fn alpha_values() {
        assert!((alpha_from_decay(1.0, 20.0).unwrap() - 0.891251).abs() < 1e-6);
        assert_eq!(alpha_from_decay(1.0, 1.0).unwrap(), 0.1);
        assert!((alpha_from_decay(1.0, 10.0).unwrap() - 0.794328).abs() < 1e-6);
        assert!((alpha_from_decay(30.0, 1800.0).unwrap() - 0.999957360).abs() < 1e-9);
        assert!(alpha_from_decay(0.0, 1.0).is_err());
        assert!(alpha_from_decay(1.0, -3.0).is_err());
        assert!(alpha_from_decay(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ema_extremes() {
        let s = scalar(3.0);
        let x = scalar(7.0);
        assert_eq!(ema_step(&s, &x, 0.0).unwrap(), x);
        assert_eq!(ema_step(&s, &x, 1.0).unwrap(), s);
        assert!(ema_step(&s, &x, 1.5).is_err());
        assert!(ema_step(&s, &x, -0.1).is_err());
    }

    #[test]
    fn ten_percent_decay_after_n_steps() {
        let alpha = alpha_from_decay(1.0, 10.0).unwrap();
        let mut s = scalar(10.0);
        for _ in 0..10 {
            s = ema_step(&s, &MotionBlock::ZERO, alpha).unwrap();
        }
        assert!((s.density - 1.0).abs() < 1e-9);
        assert!((s.dir_hist[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn highpass_on_dc_and_impulse() {
        let alpha = alpha_from_decay(1.0, 10.0).unwrap();
        let c = 4.0;
        let mut lp = MotionBlock::ZERO;
        let mut out = MotionBlock::ZERO;
        for _ in 0..50 {
            out = highpass_step(&lp, &scalar(c), alpha).unwrap();
            lp = ema_step(&lp, &scalar(c), alpha).unwrap();
        }
        assert!(out.density < 1e-3 * c);

        // direct recursion oracle: y = x - (a*l + (1-a)*x), floored
        let v = 2.5;
        let mut l = 0.0f64;
        let mut lp = MotionBlock::ZERO;
        for step in 0..20 {
            let x = if step == 0 { v } else { 0.0 };
            let expected = (x - (alpha * l + (1.0 - alpha) * x)).max(0.0);
            l = alpha * l + (1.0 - alpha) * x;
            let got = highpass_step(&lp, &scalar(x), alpha).unwrap();
            lp = ema_step(&lp, &scalar(x), alpha).unwrap();
            assert!((got.density - expected).abs() < 1e-12, "step {step}");
        }
        assert!((highpass_step(&MotionBlock::ZERO, &scalar(v), alpha).unwrap().density - alpha * v).abs() < 1e-12);

        for x in [0.0, 1.0, 1e6] {
            assert_eq!(highpass_step(&scalar(5.0), &scalar(x), 0.0).unwrap().density, 0.0);
        }
    }

    #[test]
    fn band_params_validation() {
        BandParams::default().validate().unwrap();
        let bad = BandParams {
            t_s2_s: 30.0,
            ..BandParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = BandParams {
            t_l1_s: 10.0,
            ..BandParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = BandParams {
            frame_rate: 0.0,
            ..BandParams::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(BandParams::default().fir_window(), 1);
        assert_eq!(BandParams::default().frames_per_short_tick(), 30);
    }

    #[test]
    fn zero_stream_stays_zero() {
        let p = BandParams::default();
        let mut c = CascadeState::new(3, 2, &p).unwrap();
        for t in 0..200 {
            let o = c.step(&MotionFrame::zeros(3, 2, t * 33), t).unwrap();
            for band in [Band::L1, Band::S1, Band::S2] {
                assert!(o.get(band).blocks.iter().all(|b| *b == MotionBlock::ZERO));
            }
        }
    }

    #[test]
    fn short_term_bands_carry_between_ticks() {
        let p = BandParams::default();
        let mut c = CascadeState::new(1, 1, &p).unwrap();
        let mut f = MotionFrame::zeros(1, 1, 0);
        f.blocks[0] = scalar(3.0);
        let mut last = None;
        for t in 0..60u64 {
            let o = c.step(&f, t).unwrap();
            assert_eq!(o.short_tick, t == 29 || t == 59);
            if t > 29 && t < 59 {
                assert_eq!(Some(&o.m_s1), last.as_ref());
            }
            if t == 29 {
                last = Some(o.m_s1.clone());
                assert!(o.m_s1.blocks[0].density > 0.0);
            }
        }
        assert_eq!(c.counters().multiplies, 8);
        assert_eq!(c.counters().full_ticks, 2);
        assert_eq!(c.fir_len(), 1);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = BandParams::default();
        let mut c = CascadeState::new(2, 2, &p).unwrap();
        assert!(matches!(c.step(&MotionFrame::zeros(2, 1, 0), 0), Err(Error::RejectedInput(_))));
        let mut r = ReferenceFilter::new(2, 2, &p).unwrap();
        assert!(matches!(r.step(&MotionFrame::zeros(3, 2, 0), 0), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn band_jsonl_round_trip() {
        let p = BandParams::default();
        let mut c = CascadeState::new(2, 1, &p).unwrap();
        let mut f = MotionFrame::zeros(2, 1, 1000);
        f.blocks[1] = scalar(0.5);
        let mut o = c.step(&f, 29).unwrap();
        o.m_s2.timestamp_ms = 1000;
        let mut buf = Vec::new();
        o.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(r#","band":"L1"}"#));
        let back = read_bands_jsonl(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0], (Band::L1, o.m_l1.clone()));
        assert_eq!(back[2], (Band::S2, o.m_s2.clone()));
    }
}
