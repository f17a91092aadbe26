//! C ABI over `teleop-core`.
//!
//! Every function returns a [`TeleopStatus`] or a plain value. On failure the
//! message is kept per thread and read with [`teleop_last_error`]. Objects
//! with state (frame decoder, mode context, robot) are opaque handles that
//! the caller frees with the matching `_free` function.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::{Arc, RwLock};

use teleop_core::bus::{encode_frame, Envelope, FrameDecoder};
use teleop_core::clock::SimTime;
use teleop_core::frames::AnchorRegistry;
use teleop_core::geometry::{self, Convention, Quat, Transform, Vec3};
use teleop_core::modes::{Effect, ModeContext, ModeId, ModesConfig, OperatorState};
use teleop_core::msgs::CommandMsg;
use teleop_core::robot::{ArmCommand, BodyCommand, Robot, RobotConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeleopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A command or request was refused; see the last error for the reason.
    Rejected = 3,
    Protocol = 4,
    /// The output buffer is too small; the needed size was written back.
    BufferTooSmall = 5,
    /// Nothing available yet.
    Empty = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeleopConvention {
    /// x right, y up, z forward.
    UnityLhYup = 0,
    AnchorRhYup = 1,
    /// x forward, y left, z up.
    RosRhZup = 2,
}

impl From<TeleopConvention> for Convention {
    fn from(c: TeleopConvention) -> Self {
        match c {
            TeleopConvention::UnityLhYup => Convention::UnityLhYup,
            TeleopConvention::AnchorRhYup => Convention::AnchorRhYup,
            TeleopConvention::RosRhZup => Convention::RosRhZup,
        }
    }
}

impl From<Convention> for TeleopConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::UnityLhYup => TeleopConvention::UnityLhYup,
            Convention::AnchorRhYup => TeleopConvention::AnchorRhYup,
            Convention::RosRhZup => TeleopConvention::RosRhZup,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeleopMode {
    None = 0,
    Follow = 1,
    Select = 2,
    Arm = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TeleopVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopQuat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopTransform {
    pub pos: TeleopVec3,
    pub rot: TeleopQuat,
    pub convention: TeleopConvention,
}

impl From<TeleopVec3> for Vec3 {
    fn from(v: TeleopVec3) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }
}

impl From<Vec3> for TeleopVec3 {
    fn from(v: Vec3) -> Self {
        TeleopVec3 { x: v.x, y: v.y, z: v.z }
    }
}

impl From<TeleopQuat> for Quat {
    fn from(q: TeleopQuat) -> Self {
        Quat::new(q.x, q.y, q.z, q.w)
    }
}

impl From<Quat> for TeleopQuat {
    fn from(q: Quat) -> Self {
        TeleopQuat { x: q.x, y: q.y, z: q.z, w: q.w }
    }
}

impl From<TeleopTransform> for Transform {
    fn from(t: TeleopTransform) -> Self {
        Transform::new(t.pos.into(), t.rot.into(), t.convention.into())
    }
}

impl From<Transform> for TeleopTransform {
    fn from(t: Transform) -> Self {
        TeleopTransform { pos: t.pos.into(), rot: t.rot.into(), convention: t.convention.into() }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: TeleopStatus, msg: impl Into<String>) -> TeleopStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`TeleopStatus::Panic`].
fn guard(f: impl FnOnce() -> TeleopStatus) -> TeleopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(TeleopStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, TeleopStatus> {
    if s.is_null() {
        return Err(fail(TeleopStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(TeleopStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, TeleopStatus> {
    p.as_mut().ok_or_else(|| fail(TeleopStatus::NullPointer, "null output pointer"))
}

unsafe fn input<'a, T>(p: *const T) -> Result<&'a T, TeleopStatus> {
    p.as_ref().ok_or_else(|| fail(TeleopStatus::NullPointer, "null input pointer"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to fit. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn teleop_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ---- geometry ----

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_convert_point(
    p: TeleopVec3,
    from: TeleopConvention,
    to: TeleopConvention,
    out: *mut TeleopVec3,
) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        *o = geometry::convert_point(p.into(), from.into(), to.into()).into();
        TeleopStatus::Ok
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_convert_transform(
    t: TeleopTransform,
    to: TeleopConvention,
    out: *mut TeleopTransform,
) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        *o = geometry::convert_transform(&t.into(), to.into()).into();
        TeleopStatus::Ok
    })
}

/// `a ∘ b`. Both must share a convention.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_compose(
    a: TeleopTransform,
    b: TeleopTransform,
    out: *mut TeleopTransform,
) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        match geometry::compose(&a.into(), &b.into()) {
            Ok(t) => {
                *o = t.into();
                TeleopStatus::Ok
            }
            Err(e) => fail(TeleopStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_invert(t: TeleopTransform, out: *mut TeleopTransform) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        *o = geometry::invert(&t.into()).into();
        TeleopStatus::Ok
    })
}

/// Yaw-only quaternion facing `(dx, dy)` in the robot ground plane.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_heading_quat(dx: f64, dy: f64, out: *mut TeleopQuat) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        match geometry::heading_quat(dx, dy) {
            Ok(q) => {
                *o = q.into();
                TeleopStatus::Ok
            }
            Err(e) => fail(TeleopStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Hand pose seen from the head: `inv(world_head) ∘ world_vrobot`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_head_to_hand(
    world_head: TeleopTransform,
    world_vrobot: TeleopTransform,
    out: *mut TeleopTransform,
) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        match geometry::head_to_hand(&world_head.into(), &world_vrobot.into()) {
            Ok(t) => {
                *o = t.into();
                TeleopStatus::Ok
            }
            Err(e) => fail(TeleopStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn teleop_init_vrobot(
    world_head: TeleopTransform,
    hand_offset: TeleopTransform,
    out: *mut TeleopTransform,
) -> TeleopStatus {
    guard(|| {
        let o = tri!(self::out(out));
        match geometry::init_vrobot(&world_head.into(), &hand_offset.into()) {
            Ok(t) => {
                *o = t.into();
                TeleopStatus::Ok
            }
            Err(e) => fail(TeleopStatus::InvalidArgument, e.to_string()),
        }
    })
}

// ---- wire framing ----

/// Encodes one frame into `buf`. `written` receives the frame size, or
/// the size needed when the result is `BufferTooSmall`.
///
/// # Safety
/// `topic` must be a NUL-terminated string; `payload` must point to
/// `payload_len` readable bytes (or be null when the length is 0); `buf` must
/// point to `cap` writable bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn teleop_encode_frame(
    topic: *const c_char,
    payload: *const u8,
    payload_len: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> TeleopStatus {
    guard(|| {
        let topic = tri!(c_str(topic));
        let written = tri!(out(written));
        let payload = if payload_len == 0 {
            &[][..]
        } else {
            if payload.is_null() {
                return fail(TeleopStatus::NullPointer, "null payload");
            }
            std::slice::from_raw_parts(payload, payload_len)
        };
        let bytes = match encode_frame(&Envelope::new(topic, payload)) {
            Ok(b) => b,
            Err(e) => return fail(TeleopStatus::InvalidArgument, e.to_string()),
        };
        *written = bytes.len();
        if bytes.len() > cap {
            return fail(TeleopStatus::BufferTooSmall, format!("frame needs {} bytes", bytes.len()));
        }
        if buf.is_null() {
            return fail(TeleopStatus::NullPointer, "null output buffer");
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        TeleopStatus::Ok
    })
}

/// Incremental frame decoder.
pub struct TeleopDecoder {
    inner: FrameDecoder,
    ready: VecDeque<Envelope>,
}

#[no_mangle]
pub extern "C" fn teleop_decoder_new() -> *mut TeleopDecoder {
    Box::into_raw(Box::new(TeleopDecoder { inner: FrameDecoder::new(), ready: VecDeque::new() }))
}

/// # Safety
/// `dec` must come from [`teleop_decoder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn teleop_decoder_free(dec: *mut TeleopDecoder) {
    if !dec.is_null() {
        drop(Box::from_raw(dec));
    }
}

/// Feeds bytes in any chunking. A malformed stream returns `Protocol` and
/// the decoder refuses further input.
///
/// # Safety
/// `dec` must be a live decoder; `bytes` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn teleop_decoder_feed(dec: *mut TeleopDecoder, bytes: *const u8, len: usize) -> TeleopStatus {
    guard(|| {
        let dec = tri!(out(dec));
        if len == 0 {
            return TeleopStatus::Ok;
        }
        if bytes.is_null() {
            return fail(TeleopStatus::NullPointer, "null input");
        }
        match dec.inner.feed(std::slice::from_raw_parts(bytes, len)) {
            Ok(envs) => {
                dec.ready.extend(envs);
                TeleopStatus::Ok
            }
            Err(e) => fail(TeleopStatus::Protocol, e.to_string()),
        }
    })
}

/// Pops the next decoded frame. The topic is written NUL-terminated.
/// Returns `Empty` when no complete frame is buffered and `BufferTooSmall`
/// (frame kept, sizes written back) when either buffer cannot hold it.
///
/// # Safety
/// `dec` must be a live decoder; buffers must hold their stated capacities;
/// the length pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn teleop_decoder_next(
    dec: *mut TeleopDecoder,
    topic: *mut c_char,
    topic_cap: usize,
    topic_len: *mut usize,
    payload: *mut u8,
    payload_cap: usize,
    payload_len: *mut usize,
) -> TeleopStatus {
    guard(|| {
        let dec = tri!(out(dec));
        let (tl, pl) = (tri!(out(topic_len)), tri!(out(payload_len)));
        let Some(env) = dec.ready.front() else { return TeleopStatus::Empty };
        *tl = env.topic.len();
        *pl = env.payload.len();
        if env.topic.len() + 1 > topic_cap || env.payload.len() > payload_cap {
            return fail(TeleopStatus::BufferTooSmall, "frame does not fit the buffers");
        }
        if topic.is_null() || (payload.is_null() && !env.payload.is_empty()) {
            return fail(TeleopStatus::NullPointer, "null output buffer");
        }
        ptr::copy_nonoverlapping(env.topic.as_ptr(), topic.cast::<u8>(), env.topic.len());
        *topic.add(env.topic.len()) = 0;
        if !env.payload.is_empty() {
            ptr::copy_nonoverlapping(env.payload.as_ptr(), payload, env.payload.len());
        }
        dec.ready.pop_front();
        TeleopStatus::Ok
    })
}

// ---- mode context ----

/// Operator-side mode machine with default configuration.
pub struct TeleopModes {
    ctx: ModeContext,
}

#[no_mangle]
pub extern "C" fn teleop_modes_new() -> *mut TeleopModes {
    let ctx = ModeContext::new(ModesConfig::default()).expect("default rates are positive");
    Box::into_raw(Box::new(TeleopModes { ctx }))
}

/// # Safety
/// `m` must come from [`teleop_modes_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn teleop_modes_free(m: *mut TeleopModes) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dispatches one voice command. `head` is the head pose in the headset
/// world; `cursor` is the gaze hit or null. Returns `Rejected` with the
/// reason code as the last error when the command is refused.
///
/// # Safety
/// `m` must be live; `text` NUL-terminated; `head` valid; `cursor` null or valid.
#[no_mangle]
pub unsafe extern "C" fn teleop_modes_dispatch(
    m: *mut TeleopModes,
    text: *const c_char,
    head: *const TeleopTransform,
    cursor: *const TeleopVec3,
) -> TeleopStatus {
    guard(|| {
        let m = tri!(out(m));
        let text = tri!(c_str(text));
        let head = *tri!(input(head));
        let op = OperatorState {
            world_head: head.into(),
            gaze_cursor: cursor.as_ref().map(|c| (*c).into()),
            head_roll: 0.0,
        };
        let fx = m.ctx.dispatch_text(text, &op);
        for e in &fx {
            if let Effect::Ui(teleop_core::msgs::UiEvent::Rejected { reason, .. }) = e {
                return fail(TeleopStatus::Rejected, reason.clone());
            }
        }
        TeleopStatus::Ok
    })
}

/// # Safety
/// `m` must be a live mode context.
#[no_mangle]
pub unsafe extern "C" fn teleop_modes_current(m: *const TeleopModes) -> TeleopMode {
    match m.as_ref().map(|m| m.ctx.current()) {
        Some(ModeId::Follow) => TeleopMode::Follow,
        Some(ModeId::Select) => TeleopMode::Select,
        Some(ModeId::Arm) => TeleopMode::Arm,
        Some(ModeId::None) | None => TeleopMode::None,
    }
}

/// # Safety
/// `m` must be a live mode context.
#[no_mangle]
pub unsafe extern "C" fn teleop_modes_is_active(m: *const TeleopModes) -> bool {
    m.as_ref().is_some_and(|m| m.ctx.is_active())
}

// ---- robot ----

/// Simulated robot with default limits, starting at the world origin.
pub struct TeleopRobot {
    robot: Robot,
}

#[no_mangle]
pub extern "C" fn teleop_robot_new() -> *mut TeleopRobot {
    let anchors = Arc::new(RwLock::new(AnchorRegistry::default()));
    Box::into_raw(Box::new(TeleopRobot { robot: Robot::new(RobotConfig::default(), anchors) }))
}

/// # Safety
/// `r` must come from [`teleop_robot_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_free(r: *mut TeleopRobot) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Basic robot command such as `claim`, `power on`, `stand`, `spin left`.
///
/// # Safety
/// `r` must be live; `cmd` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_command(r: *mut TeleopRobot, cmd: *const c_char) -> TeleopStatus {
    guard(|| {
        let r = tri!(out(r));
        let cmd = tri!(c_str(cmd));
        match r.robot.handle_command(&CommandMsg::plain(cmd)) {
            Ok(()) => TeleopStatus::Ok,
            Err(code) => fail(TeleopStatus::Rejected, code.code()),
        }
    })
}

/// Body goal relative to the current body pose.
///
/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_go_to_pose(r: *mut TeleopRobot, pos: TeleopVec3, quat: TeleopQuat) -> TeleopStatus {
    guard(|| {
        let r = tri!(out(r));
        match r.robot.go_to_pose(&BodyCommand { pos: pos.into(), quat: Quat::from(quat) }) {
            Ok(()) => TeleopStatus::Ok,
            Err(code) => fail(TeleopStatus::Rejected, code.code()),
        }
    })
}

/// Hand goal in the body frame. A negative `duration` means "not given"
/// and falls back to the legacy fixed duration.
///
/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_gripper_pos(
    r: *mut TeleopRobot,
    hand: TeleopTransform,
    duration: f64,
) -> TeleopStatus {
    guard(|| {
        let r = tri!(out(r));
        let cmd = ArmCommand { hand: hand.into(), duration: (duration >= 0.0).then_some(duration) };
        match r.robot.gripper_pos_service(&cmd) {
            Ok(()) => TeleopStatus::Ok,
            Err(code) => fail(TeleopStatus::Rejected, code.code()),
        }
    })
}

/// Advances the simulation by `dt` seconds.
///
/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_step(r: *mut TeleopRobot, dt: f64) -> TeleopStatus {
    guard(|| {
        let r = tri!(out(r));
        if !(dt.is_finite() && dt > 0.0) {
            return fail(TeleopStatus::InvalidArgument, "dt must be positive");
        }
        r.robot.step(SimTime::from_secs(dt));
        TeleopStatus::Ok
    })
}

/// # Safety
/// `r` must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_body(r: *const TeleopRobot, out: *mut TeleopTransform) -> TeleopStatus {
    guard(|| {
        let r = tri!(input(r));
        *tri!(self::out(out)) = r.robot.state().body.into();
        TeleopStatus::Ok
    })
}

/// Hand pose in the body frame.
///
/// # Safety
/// `r` must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn teleop_robot_hand(r: *const TeleopRobot, out: *mut TeleopTransform) -> TeleopStatus {
    guard(|| {
        let r = tri!(input(r));
        *tri!(self::out(out)) = r.robot.state().hand.into();
        TeleopStatus::Ok
    })
}
