//! Long-term isochronal activity store.
//!
//! One slot per minute of the day. Each slot low-pass filters the per-minute
//! `L1` aggregate across days (one sample per day) and keeps an EMA of the
//! squared deviation alongside it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::{MotionBlock, MotionFrame, DIRECTIONS, MS_PER_MINUTE};

pub const MINUTES_PER_DAY: usize = 1440;

const MAGIC: &[u8; 4] = b"ISO1";
const VERSION: u16 = 1;

/// Default `epsilon` for treating stored activity as nonzero.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    mean: Vec<MotionBlock>,
    var: Vec<MotionBlock>,
    days: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsochronalStore {
    camera_id: String,
    grid_w: usize,
    grid_h: usize,
    alpha_l2: f64,
    slots: Vec<Slot>,
}

/// Snapshot of one minute slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSnapshot {
    pub mean: MotionFrame,
    pub std: MotionFrame,
    pub days_observed: u32,
}

impl SlotSnapshot {
    /// Scalar activity statistics: mean block density, and the mean of the
    /// per-block density standard deviations.
    pub fn activity_stats(&self) -> (f64, f64) {
        (self.mean.mean_density(), self.std.mean_density())
    }
}

/// Per-block flag: 1 when any minute of the day has stored activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryProfile {
    pub grid_w: usize,
    pub grid_h: usize,
    pub flags: Vec<u8>,
}

impl BinaryProfile {
    pub fn all(grid_w: usize, grid_h: usize, flag: bool) -> Self {
        Self {
            grid_w,
            grid_h,
            flags: vec![flag as u8; grid_w * grid_h],
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f == 1).count()
    }

    /// 1 when any block of `region` (every block when `None`) is flagged.
    pub fn any_in(&self, region: Option<&[usize]>) -> bool {
        match region {
            None => self.flags.contains(&1),
            Some(idx) => idx.iter().any(|&i| self.flags[i] == 1),
        }
    }
}

fn check_minute(minute: usize) -> Result<()> {
    if minute < MINUTES_PER_DAY {
        Ok(())
    } else {
        Err(Error::param(format!("minute of day {minute} outside [0, 1439]")))
    }
}

impl IsochronalStore {
    pub fn new(camera_id: impl Into<String>, grid_w: usize, grid_h: usize, t_l2_days: f64) -> Result<Self> {
        let alpha_l2 = crate::tfilter::alpha_from_decay(1.0, t_l2_days)?;
        Self::with_alpha(camera_id, grid_w, grid_h, alpha_l2)
    }

    pub fn with_alpha(camera_id: impl Into<String>, grid_w: usize, grid_h: usize, alpha_l2: f64) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 || grid_w > u16::MAX as usize || grid_h > u16::MAX as usize {
            return Err(Error::param(format!("unsupported grid {grid_w}x{grid_h}")));
        }
        if !(0.0..=1.0).contains(&alpha_l2) {
            return Err(Error::param(format!("alpha_l2 must lie in [0, 1], got {alpha_l2}")));
        }
        let camera_id = camera_id.into();
        if camera_id.len() > u16::MAX as usize {
            return Err(Error::param("camera id too long"));
        }
        let k = grid_w * grid_h;
        let empty = Slot {
            mean: vec![MotionBlock::ZERO; k],
            var: vec![MotionBlock::ZERO; k],
            days: 0,
        };
        Ok(Self {
            camera_id,
            grid_w,
            grid_h,
            alpha_l2,
            slots: vec![empty; MINUTES_PER_DAY],
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_w, self.grid_h)
    }

    pub fn alpha_l2(&self) -> f64 {
        self.alpha_l2
    }

    /// Folds one day's sample for `minute` into its slot. The first sample
    /// initializes the slot.
    pub fn update(&mut self, minute: usize, sample: &MotionFrame) -> Result<()> {
        check_minute(minute)?;
        if sample.grid_w != self.grid_w || sample.grid_h != self.grid_h {
            return Err(Error::rejected(format!(
                "sample grid {}x{} does not match store grid {}x{}",
                sample.grid_w, sample.grid_h, self.grid_w, self.grid_h
            )));
        }
        let a = self.alpha_l2;
        let slot = &mut self.slots[minute];
        if slot.days == 0 {
            slot.mean.copy_from_slice(&sample.blocks);
            slot.var.iter_mut().for_each(|v| *v = MotionBlock::ZERO);
        } else {
            for ((m, v), x) in slot.mean.iter_mut().zip(slot.var.iter_mut()).zip(&sample.blocks) {
                *m = m.zip_with(x, |m, x| a * m + (1.0 - a) * x);
                let dev = x.zip_with(m, |x, m| (x - m) * (x - m));
                *v = v.zip_with(&dev, |v, d| a * v + (1.0 - a) * d);
            }
        }
        slot.days = slot.days.saturating_add(1);
        Ok(())
    }

    pub fn query(&self, minute: usize) -> Result<SlotSnapshot> {
        check_minute(minute)?;
        let slot = &self.slots[minute];
        let t = minute as u64 * MS_PER_MINUTE;
        Ok(SlotSnapshot {
            mean: MotionFrame {
                grid_w: self.grid_w,
                grid_h: self.grid_h,
                blocks: slot.mean.clone(),
                timestamp_ms: t,
            },
            std: MotionFrame {
                grid_w: self.grid_w,
                grid_h: self.grid_h,
                blocks: slot.var.iter().map(|v| v.map(f64::sqrt)).collect(),
                timestamp_ms: t,
            },
            days_observed: slot.days,
        })
    }

    pub fn days_observed(&self, minute: usize) -> Result<u32> {
        check_minute(minute)?;
        Ok(self.slots[minute].days)
    }

    /// Time-collapsed profile: a block is flagged when its stored mean
    /// density exceeds `epsilon` at any minute.
    pub fn binarize(&self, epsilon: f64) -> Result<BinaryProfile> {
        if !(epsilon >= 0.0) {
            return Err(Error::param(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let k = self.grid_w * self.grid_h;
        let mut flags = vec![0u8; k];
        for slot in &self.slots {
            for (f, m) in flags.iter_mut().zip(&slot.mean) {
                if m.density > epsilon {
                    *f = 1;
                }
            }
        }
        Ok(BinaryProfile {
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            flags,
        })
    }

    /// `minute,mean_activity,std_activity` rows for plotting daily profiles.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("minute,mean_activity,std_activity\n");
        for minute in 0..MINUTES_PER_DAY {
            let (mean, std) = self.query(minute).expect("valid minute").activity_stats();
            out.push_str(&format!("{minute},{mean},{std}\n"));
        }
        out
    }

    /// Mean stored activity per minute of the day.
    pub fn mean_activity_curve(&self) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| s.mean.iter().map(|b| b.density).sum::<f64>() / s.mean.len() as f64)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let k = self.grid_w * self.grid_h;
        let mut out = Vec::with_capacity(32 + self.camera_id.len() + MINUTES_PER_DAY * (k * 144 + 4));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.camera_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.camera_id.as_bytes());
        out.extend_from_slice(&(self.grid_w as u16).to_le_bytes());
        out.extend_from_slice(&(self.grid_h as u16).to_le_bytes());
        out.extend_from_slice(&self.alpha_l2.to_le_bytes());
        for slot in &self.slots {
            for frame in [&slot.mean, &slot.var] {
                for b in frame.iter() {
                    for v in b.components() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            out.extend_from_slice(&slot.days.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::Corrupt {
            path: origin.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes.len() < 10 {
            return Err(corrupt("checksum mismatch (file truncated)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: body, pos: 6 };
        let id_len = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
        let id = r.take(id_len).ok_or_else(|| corrupt("truncated header"))?;
        let camera_id = String::from_utf8(id.to_vec()).map_err(|_| corrupt("camera id is not UTF-8"))?;
        let grid_w = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
        let grid_h = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
        let alpha_l2 = r.f64().ok_or_else(|| corrupt("truncated header"))?;
        let k = grid_w * grid_h;
        let expected = r.pos + MINUTES_PER_DAY * (2 * k * (1 + DIRECTIONS) * 8 + 4);
        if body.len() != expected {
            return Err(corrupt(&format!("body length {} != expected {}", body.len(), expected)));
        }
        let mut store = Self::with_alpha(camera_id, grid_w, grid_h, alpha_l2).map_err(|e| corrupt(&e.to_string()))?;
        for slot in store.slots.iter_mut() {
            for frame in [&mut slot.mean, &mut slot.var] {
                for b in frame.iter_mut() {
                    b.density = r.f64().expect("length checked");
                    for h in b.dir_hist.iter_mut() {
                        *h = r.f64().expect("length checked");
                    }
                }
            }
            slot.days = r.u32().expect("length checked");
        }
        Ok(store)
    }

    /// Writes atomically: a temporary sibling file is renamed over `path`.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(gw: usize, gh: usize, v: f64) -> MotionFrame {
        let mut f = MotionFrame::zeros(gw, gh, 0);
        for b in f.blocks.iter_mut() {
            b.density = v;
            b.dir_hist[0] = v;
        }
        f
    }

    #[test]
    fn fresh_store_is_empty() {
        let s = IsochronalStore::new("cam", 3, 2, 10.0).unwrap();
        let q = s.query(0).unwrap();
        assert_eq!(q.days_observed, 0);
        assert!(q.mean.blocks.iter().all(|b| *b == MotionBlock::ZERO));
        assert_eq!(s.binarize(DEFAULT_EPSILON).unwrap().count(), 0);
    }

    #[test]
    fn bootstrap_then_fixed_point() {
        let mut s = IsochronalStore::new("cam", 2, 2, 10.0).unwrap();
        s.update(600, &sample(2, 2, 7.0)).unwrap();
        assert_eq!(s.query(600).unwrap().mean.blocks[0].density, 7.0);
        for _ in 0..29 {
            s.update(600, &sample(2, 2, 7.0)).unwrap();
        }
        let q = s.query(600).unwrap();
        assert!((q.mean.blocks[3].density - 7.0).abs() < 1e-9);
        assert!(q.std.blocks[3].density.abs() < 1e-9);
        assert_eq!(q.days_observed, 30);
    }

    #[test]
    fn alternating_samples_follow_recursion() {
        let mut s = IsochronalStore::new("cam", 1, 1, 10.0).unwrap();
        let a = 0.1f64.powf(0.1);
        let mut oracle: Option<f64> = None;
        for day in 0..40 {
            let x = if day % 2 == 0 { 0.0 } else { 10.0 };
            s.update(5, &sample(1, 1, x)).unwrap();
            oracle = Some(match oracle {
                None => x,
                Some(m) => a * m + (1.0 - a) * x,
            });
        }
        assert!((s.query(5).unwrap().mean.blocks[0].density - oracle.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn slots_are_isolated() {
        let mut s = IsochronalStore::new("cam", 2, 1, 10.0).unwrap();
        let before = s.clone();
        s.update(100, &sample(2, 1, 3.0)).unwrap();
        for m in (0..MINUTES_PER_DAY).filter(|&m| m != 100) {
            assert_eq!(s.query(m).unwrap(), before.query(m).unwrap());
        }
    }

    #[test]
    fn impulse_decays_to_ten_percent() {
        let mut s = IsochronalStore::new("cam", 1, 1, 10.0).unwrap();
        s.update(0, &sample(1, 1, 50.0)).unwrap();
        for _ in 0..10 {
            s.update(0, &sample(1, 1, 0.0)).unwrap();
        }
        assert!((s.query(0).unwrap().mean.blocks[0].density - 5.0).abs() < 1e-9 * 50.0);
    }

    #[test]
    fn binarize_single_support_point() {
        let mut s = IsochronalStore::new("cam", 3, 1, 10.0).unwrap();
        let mut f = MotionFrame::zeros(3, 1, 0);
        f.blocks[1].density = 5.0;
        s.update(1439, &f).unwrap();
        assert_eq!(s.binarize(0.01).unwrap().flags, vec![0, 1, 0]);
        assert_eq!(s.binarize(6.0).unwrap().flags, vec![0, 0, 0]);
        assert!(s.binarize(-1.0).is_err());
    }

    #[test]
    fn parameter_errors() {
        let mut s = IsochronalStore::new("cam", 2, 1, 10.0).unwrap();
        assert!(matches!(s.update(1440, &sample(2, 1, 1.0)), Err(Error::InvalidParameter(_))));
        assert!(matches!(s.update(3, &sample(1, 2, 1.0)), Err(Error::RejectedInput(_))));
        assert!(matches!(s.query(5000), Err(Error::InvalidParameter(_))));
        assert!(IsochronalStore::new("cam", 0, 1, 10.0).is_err());
        assert!(IsochronalStore::new("cam", 1, 1, 0.0).is_err());
    }

    #[test]
    fn persist_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.iso");
        let mut s = IsochronalStore::new("cam-é", 2, 3, 10.0).unwrap();
        s.persist(&path).unwrap();
        assert_eq!(IsochronalStore::load(&path).unwrap(), s);

        for day in 0..4 {
            s.update(day * 7, &sample(2, 3, day as f64 * 0.37)).unwrap();
        }
        s.persist(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(IsochronalStore::load(&path).unwrap().to_bytes(), bytes);

        fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        let err = IsochronalStore::load(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");

        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        fs::write(&path, &flipped).unwrap();
        assert!(IsochronalStore::load(&path).unwrap_err().to_string().contains("checksum"));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        fs::write(&path, &bad_magic).unwrap();
        assert!(IsochronalStore::load(&path).unwrap_err().to_string().contains("magic"));

        let mut bad_version = bytes;
        bad_version[4] = 9;
        fs::write(&path, &bad_version).unwrap();
        assert!(IsochronalStore::load(&path).unwrap_err().to_string().contains("version"));

        assert!(matches!(IsochronalStore::load(&dir.path().join("missing.iso")), Err(Error::Io { .. })));
    }

    #[test]
    fn profile_csv_shape() {
        let s = IsochronalStore::new("cam", 1, 1, 10.0).unwrap();
        let csv = s.profile_csv();
        assert_eq!(csv.lines().count(), 1 + MINUTES_PER_DAY);
        assert_eq!(csv.lines().nth(1).unwrap(), "0,0,0");
    }
}
