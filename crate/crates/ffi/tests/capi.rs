use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cascade_activity::motion::MotionFrame;
use cascade_activity::tfilter::{BandFilter, BandParams, CascadeState};
use cascade_activity_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        ca_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn params_1fps() -> CaBandParams {
    let mut p = unsafe {
        let mut p = std::mem::zeroed();
        assert_eq!(ca_band_params_default(&mut p), CaStatus::Ok);
        p
    };
    p.frame_rate = 1.0;
    p
}

fn blocks(n: usize, f: impl Fn(usize) -> f64) -> Vec<CaBlock> {
    (0..n)
        .map(|i| CaBlock {
            density: f(i),
            dir_hist: [0.0; CA_DIRECTIONS],
        })
        .collect()
}

#[test]
fn alpha_through_c_abi() {
    let mut a = 0.0;
    assert_eq!(unsafe { ca_alpha_from_decay(1.0, 20.0, &mut a) }, CaStatus::Ok);
    assert!((a - 0.1f64.powf(1.0 / 20.0)).abs() < 1e-15);
    assert_eq!(unsafe { ca_alpha_from_decay(0.0, 20.0, &mut a) }, CaStatus::InvalidParameter);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { ca_alpha_from_decay(1.0, 20.0, ptr::null_mut()) }, CaStatus::NullPointer);
    assert_eq!(last_error(), "out is null");
}

#[test]
fn filter_matches_library() {
    let (gw, gh) = (3, 2);
    let p = params_1fps();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ca_filter_new(gw, gh, &p, &mut h) }, CaStatus::Ok);
    let mut lib = CascadeState::new(gw, gh, &BandParams::from(p)).unwrap();

    let mut s1 = blocks(6, |_| 0.0);
    let mut s2 = blocks(6, |_| 0.0);
    for t in 0..200u64 {
        let input = blocks(6, |i| ((t as usize * 7 + i * 3) % 11) as f64 / 11.0);
        let mut tick = false;
        let st = unsafe {
            ca_filter_step(h, t * 1000, input.as_ptr(), input.len(), ptr::null_mut(), ptr::null_mut(), s1.as_mut_ptr(), s2.as_mut_ptr(), &mut tick)
        };
        assert_eq!(st, CaStatus::Ok);
        let frame = MotionFrame::new(gw, gh, input.iter().map(|b| cascade_activity::motion::MotionBlock { density: b.density, dir_hist: b.dir_hist }).collect(), t * 1000).unwrap();
        let want = lib.step(&frame, t).unwrap();
        assert_eq!(tick, want.short_tick);
        for i in 0..6 {
            assert_eq!(s1[i].density, want.m_s1.blocks[i].density);
            assert_eq!(s2[i].density, want.m_s2.blocks[i].density);
        }
    }
    let (mut m, mut sf) = (0, 0);
    assert_eq!(unsafe { ca_filter_counters(h, &mut m, &mut sf, ptr::null_mut()) }, CaStatus::Ok);
    assert_eq!((m, sf), (lib.counters().multiplies, lib.counters().state_frames));
    unsafe { ca_filter_free(h) };
}

#[test]
fn grid_mismatch_is_rejected() {
    let p = params_1fps();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ca_filter_new(2, 2, &p, &mut h) }, CaStatus::Ok);
    let input = blocks(3, |_| 0.0);
    let st = unsafe {
        ca_filter_step(h, 0, input.as_ptr(), 3, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, CaStatus::RejectedInput);
    assert!(last_error().contains("expected 4 blocks"));
    unsafe { ca_filter_free(h) };

    let mut bad = p;
    bad.t_s1_s = -1.0;
    assert_eq!(unsafe { ca_filter_new(2, 2, &bad, &mut h) }, CaStatus::InvalidParameter);
    assert!(h.is_null());
}

#[test]
fn store_learn_persist_load() {
    let dir = tempfile::tempdir().unwrap();
    let id = CString::new("cam7").unwrap();
    let p = params_1fps();
    let (mut f, mut s) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ca_filter_new(2, 1, &p, &mut f), CaStatus::Ok);
        assert_eq!(ca_store_new(id.as_ptr(), 2, 1, 10.0, &mut s), CaStatus::Ok);
        for t in 0..120u64 {
            let input = blocks(2, |i| if i == 0 && t % 5 == 0 { 1.0 } else { 0.0 });
            let st = ca_filter_step(f, t * 1000, input.as_ptr(), 2, s, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
            assert_eq!(st, CaStatus::Ok);
        }
        assert_eq!(ca_filter_flush(f, s), CaStatus::Ok);

        let path = CString::new(dir.path().join("cam7.iso").to_str().unwrap()).unwrap();
        assert_eq!(ca_store_persist(s, path.as_ptr()), CaStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(ca_store_load(path.as_ptr(), &mut loaded), CaStatus::Ok);

        for minute in [0, 1, 2] {
            let (mut a, mut b) = (blocks(2, |_| -1.0), blocks(2, |_| -1.0));
            let (mut da, mut db) = (0, 0);
            assert_eq!(ca_store_query(s, minute, a.as_mut_ptr(), ptr::null_mut(), 2, &mut da), CaStatus::Ok);
            assert_eq!(ca_store_query(loaded, minute, b.as_mut_ptr(), ptr::null_mut(), 2, &mut db), CaStatus::Ok);
            assert_eq!(da, db);
            assert_eq!(a[0].density, b[0].density);
            assert_eq!(da, u32::from(minute < 2));
        }
        let mut one = blocks(1, |_| 0.0);
        assert_eq!(ca_store_query(s, 0, one.as_mut_ptr(), ptr::null_mut(), 1, ptr::null_mut()), CaStatus::BufferTooSmall);
        assert_eq!(ca_store_query(s, CA_MINUTES_PER_DAY, ptr::null_mut(), ptr::null_mut(), 0, ptr::null_mut()), CaStatus::InvalidParameter);

        let missing = CString::new(dir.path().join("nope.iso").to_str().unwrap()).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(ca_store_load(missing.as_ptr(), &mut h), CaStatus::Io);
        assert!(last_error().contains("nope.iso"));

        std::fs::write(dir.path().join("junk.iso"), b"ISO1garbage").unwrap();
        let junk = CString::new(dir.path().join("junk.iso").to_str().unwrap()).unwrap();
        assert_eq!(ca_store_load(junk.as_ptr(), &mut h), CaStatus::Corrupt);

        ca_store_free(loaded);
        ca_store_free(s);
        ca_filter_free(f);
    }
}

#[test]
fn gate_fires_once_per_burst() {
    let id = CString::new("cam0").unwrap();
    let mut gp: CaGateParams = unsafe { std::mem::zeroed() };
    let (mut g, mut s) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ca_gate_params_default(&mut gp), CaStatus::Ok);
        assert_eq!(ca_store_new(id.as_ptr(), 2, 1, 10.0, &mut s), CaStatus::Ok);
        assert_eq!(ca_gate_new(id.as_ptr(), &gp, 1000, &mut g), CaStatus::Ok);
        let quiet = blocks(2, |_| 0.0);
        let busy = blocks(2, |_| 0.5);
        let mut onsets = 0;
        for t in 0..30u64 {
            let b = if (10..15).contains(&t) { &busy } else { &quiet };
            let mut d = CaDecision::default();
            assert_eq!(ca_gate_push(g, s, t * 1000, b.as_ptr(), quiet.as_ptr(), 2, &mut d), CaStatus::Ok);
            assert_eq!(d.fire, (10..15).contains(&t));
            onsets += d.onset as u32;
            // empty store: the cold-start floor applies
            assert_eq!(d.threshold, gp.min_threshold);
        }
        let mut n = 0;
        assert_eq!(ca_gate_invocations(g, &mut n), CaStatus::Ok);
        assert_eq!((onsets, n), (1, 1));
        ca_gate_free(g);
        ca_store_free(s);
    }
}

#[test]
fn status_strings_are_static() {
    let s = unsafe { CStr::from_ptr(ca_status_str(CaStatus::BufferTooSmall)) };
    assert_eq!(s.to_str().unwrap(), "buffer too small");
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cascade_activity.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ca_filter_new", "ca_store_query", "ca_gate_push", "ca_last_error_message", "CA_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler on PATH; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
