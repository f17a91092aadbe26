use std::ffi::{c_char, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use teleop_ffi::*;

fn ros(x: f64, y: f64, z: f64) -> TeleopTransform {
    TeleopTransform {
        pos: TeleopVec3 { x, y, z },
        rot: TeleopQuat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 },
        convention: TeleopConvention::RosRhZup,
    }
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { teleop_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn axis_swap_through_c_abi() {
    let mut out = TeleopVec3::default();
    let s = unsafe {
        teleop_convert_point(
            TeleopVec3 { x: 1.0, y: 2.0, z: 3.0 },
            TeleopConvention::UnityLhYup,
            TeleopConvention::AnchorRhYup,
            &mut out,
        )
    };
    assert_eq!(s, TeleopStatus::Ok);
    assert_eq!(out, TeleopVec3 { x: 3.0, y: -1.0, z: 2.0 });
}

#[test]
fn null_output_is_reported() {
    let s = unsafe { teleop_invert(ros(1.0, 0.0, 0.0), ptr::null_mut()) };
    assert_eq!(s, TeleopStatus::NullPointer);
    assert!(last_error().contains("null"));
}

#[test]
fn mixed_conventions_rejected() {
    let mut out = ros(0.0, 0.0, 0.0);
    let mut b = ros(1.0, 0.0, 0.0);
    b.convention = TeleopConvention::UnityLhYup;
    assert_eq!(unsafe { teleop_compose(ros(0.0, 0.0, 0.0), b, &mut out) }, TeleopStatus::InvalidArgument);
}

#[test]
fn encode_reports_needed_size() {
    let topic = CString::new("/holo/command").unwrap();
    let payload = br#"{"cmd":"sit"}"#;
    let mut written = 0usize;
    let mut small = [0u8; 4];
    let s = unsafe {
        teleop_encode_frame(topic.as_ptr(), payload.as_ptr(), payload.len(), small.as_mut_ptr(), small.len(), &mut written)
    };
    assert_eq!(s, TeleopStatus::BufferTooSmall);
    assert_eq!(written, 4 + 13 + 4 + payload.len());
}

#[test]
fn decoder_round_trip_byte_by_byte() {
    let topic = CString::new("/spot/status").unwrap();
    let payload = b"{}";
    let mut frame = [0u8; 64];
    let mut n = 0usize;
    unsafe {
        assert_eq!(
            teleop_encode_frame(topic.as_ptr(), payload.as_ptr(), 2, frame.as_mut_ptr(), frame.len(), &mut n),
            TeleopStatus::Ok
        );
        let dec = teleop_decoder_new();
        for b in &frame[..n] {
            assert_eq!(teleop_decoder_feed(dec, b, 1), TeleopStatus::Ok);
        }
        let (mut t, mut p) = ([0 as c_char; 32], [0u8; 8]);
        let (mut tl, mut pl) = (0usize, 0usize);
        assert_eq!(
            teleop_decoder_next(dec, t.as_mut_ptr(), t.len(), &mut tl, p.as_mut_ptr(), p.len(), &mut pl),
            TeleopStatus::Ok
        );
        assert_eq!((tl, pl), (12, 2));
        assert_eq!(&p[..2], b"{}");
        assert_eq!(
            teleop_decoder_next(dec, t.as_mut_ptr(), t.len(), &mut tl, p.as_mut_ptr(), p.len(), &mut pl),
            TeleopStatus::Empty
        );
        teleop_decoder_free(dec);
    }
}

#[test]
fn malformed_stream_is_protocol_error() {
    let bad = [0u8, 0, 0, 0];
    unsafe {
        let dec = teleop_decoder_new();
        assert_eq!(teleop_decoder_feed(dec, bad.as_ptr(), bad.len()), TeleopStatus::Protocol);
        teleop_decoder_free(dec);
    }
}

#[test]
fn robot_handle_gating_and_arm_duration() {
    unsafe {
        let r = teleop_robot_new();
        let sit = CString::new("stand").unwrap();
        assert_eq!(teleop_robot_command(r, sit.as_ptr()), TeleopStatus::Rejected);
        assert_eq!(last_error(), "lease_required");
        for c in ["claim", "power on", "stand"] {
            let c = CString::new(c).unwrap();
            assert_eq!(teleop_robot_command(r, c.as_ptr()), TeleopStatus::Ok);
        }
        assert_eq!(teleop_robot_gripper_pos(r, ros(0.9, 0.0, 0.2), 0.5), TeleopStatus::Ok);
        for _ in 0..5 {
            assert_eq!(teleop_robot_step(r, 0.1), TeleopStatus::Ok);
        }
        let mut hand = ros(0.0, 0.0, 0.0);
        assert_eq!(teleop_robot_hand(r, &mut hand), TeleopStatus::Ok);
        assert_eq!(hand.pos, TeleopVec3 { x: 0.9, y: 0.0, z: 0.2 });
        assert_eq!(teleop_robot_gripper_pos(r, ros(0.9, 0.0, 0.2), 0.01), TeleopStatus::Rejected);
        teleop_robot_free(r);
    }
}

#[test]
fn modes_handle_rejects_out_of_mode_tokens() {
    unsafe {
        let m = teleop_modes_new();
        let mut head = ros(0.0, 0.0, 0.0);
        head.convention = TeleopConvention::UnityLhYup;
        let grasp = CString::new("grasp").unwrap();
        assert_eq!(teleop_modes_dispatch(m, grasp.as_ptr(), &head, ptr::null()), TeleopStatus::Rejected);
        assert_eq!(last_error(), "no_mode_selected");
        let arm = CString::new("arm mode").unwrap();
        assert_eq!(teleop_modes_dispatch(m, arm.as_ptr(), &head, ptr::null()), TeleopStatus::Ok);
        assert_eq!(teleop_modes_current(m), TeleopMode::Arm);
        assert!(!teleop_modes_is_active(m));
        teleop_modes_free(m);
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/teleop.h")).unwrap();
    for name in [
        "teleop_convert_point",
        "teleop_heading_quat",
        "teleop_encode_frame",
        "teleop_decoder_next",
        "teleop_modes_dispatch",
        "teleop_robot_gripper_pos",
        "teleop_last_error",
        "TELEOP_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// The static library sits next to the test binary's parent directory.
fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libteleop_ffi.a");
    lib.exists().then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_and_runs() {
    let (Some(lib), true) = (staticlib(), have_cc()) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let exe = out_dir.join("teleop_smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
