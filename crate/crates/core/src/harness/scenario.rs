//! Scenario files (TOML, `version = 1`).
//!
//! Positions are in the physical world, robot convention (x forward, y left,
//! z up); angles are radians. The headset sees the same scene through its own
//! world frame, offset from the physical one by `headset.world_offset`.
//!
//! ```toml
//! version = 1
//! name = "walk"
//! time_limit = 20.0
//!
//! [success]
//! body_within = { point = [2.0, 0.0, 0.0], radius = 0.3 }
//!
//! [[timeline]]
//! t = 0.0
//! command = "claim"
//!
//! [[timeline]]
//! t = 1.0
//! look_at = [2.0, 0.0, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geometry::{Convention, Quat, Transform, Vec3};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub pos: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl PoseSpec {
    pub fn transform(&self) -> Transform {
        Transform::new(self.pos.into(), Quat::from_yaw(self.yaw), Convention::RosRhZup)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub ground_height: f64,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    /// Target markers: drawn, never hit by gaze.
    #[serde(default)]
    pub markers: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    #[serde(default)]
    pub pose: PoseSpec,
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub telemetry_hz: Option<f64>,
    pub workspace_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadsetSpec {
    /// Pose of the headset world in the physical world.
    #[serde(default)]
    pub world_offset: PoseSpec,
    /// Standard deviation of gaze direction noise, radians.
    #[serde(default)]
    pub gaze_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    #[serde(default)]
    pub pose: PoseSpec,
    /// Rigid error in the robot's belief of the anchor pose.
    pub error: Option<PoseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    #[serde(default = "half_second")]
    pub follow_period: f64,
    #[serde(default = "half_second")]
    pub select_period: f64,
    #[serde(default = "half_second")]
    pub arm_period: f64,
}

fn half_second() -> f64 {
    0.5
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self { follow_period: 0.5, select_period: 0.5, arm_period: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub point: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Success {
    /// Body origin within `radius` of `point`, measured on the ground plane.
    BodyWithin(Region),
    /// Hand origin within `radius` of `point`.
    HandWithin(Region),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuccessSpec {
    body_within: Option<Region>,
    hand_within: Option<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub pos: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    /// Positive tilts to the right.
    #[serde(default)]
    pub roll: f64,
    /// Seconds to glide from the previous head pose; 0 jumps.
    #[serde(default)]
    pub over: f64,
}

impl HeadSpec {
    /// Head pose in the physical world. Identity looks along +x.
    pub fn transform(&self) -> Transform {
        let rot = Quat::from_yaw(self.yaw)
            * Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), self.pitch)
            * Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), self.roll);
        Transform::new(self.pos.into(), rot, Convention::RosRhZup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub origin: [f64; 3],
    pub dir: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Command(String),
    HeadPose(HeadSpec),
    /// Fixed gaze ray.
    Gaze(RaySpec),
    /// Gaze from the current head position toward a point.
    LookAt([f64; 3]),
    /// Gaze straight up, so the cursor misses.
    LookAway,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventSpec {
    t: f64,
    command: Option<String>,
    head: Option<HeadSpec>,
    gaze: Option<RaySpec>,
    look_at: Option<[f64; 3]>,
    #[serde(default)]
    look_away: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    pub event: Event,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    name: String,
    time_limit: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    scene: SceneSpec,
    #[serde(default)]
    robot: RobotSpec,
    #[serde(default)]
    headset: HeadsetSpec,
    #[serde(default)]
    anchor: AnchorSpec,
    #[serde(default)]
    rates: RatesSpec,
    success: SuccessSpec,
    #[serde(default)]
    timeline: Vec<EventSpec>,
}

fn default_dt() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub time_limit: f64,
    pub dt: f64,
    pub seed: u64,
    pub scene: SceneSpec,
    pub robot: RobotSpec,
    pub headset: HeadsetSpec,
    pub anchor: AnchorSpec,
    pub rates: RatesSpec,
    pub success: Success,
    pub timeline: Vec<TimedEvent>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let invalid = |msg: String| Err(HarnessError::Invalid(msg));
        if file.version != SCENARIO_VERSION {
            return invalid(format!("unsupported version {}, expected {SCENARIO_VERSION}", file.version));
        }
        if !(file.time_limit.is_finite() && file.time_limit > 0.0) {
            return invalid(format!("time_limit must be positive, got {}", file.time_limit));
        }
        if !(file.dt.is_finite() && file.dt > 0.0) {
            return invalid(format!("dt must be positive, got {}", file.dt));
        }
        let success = match (file.success.body_within, file.success.hand_within) {
            (Some(r), None) => Success::BodyWithin(r),
            (None, Some(r)) => Success::HandWithin(r),
            _ => return invalid("exactly one success condition is required".into()),
        };
        let mut timeline = Vec::with_capacity(file.timeline.len());
        let mut last_t = f64::NEG_INFINITY;
        for (i, ev) in file.timeline.into_iter().enumerate() {
            if !(ev.t.is_finite() && ev.t >= 0.0) || ev.t < last_t {
                return invalid(format!("timeline entry {i}: t = {} is negative or out of order", ev.t));
            }
            last_t = ev.t;
            let mut events = Vec::new();
            events.extend(ev.command.map(Event::Command));
            events.extend(ev.head.map(Event::HeadPose));
            events.extend(ev.gaze.map(Event::Gaze));
            events.extend(ev.look_at.map(Event::LookAt));
            if ev.look_away {
                events.push(Event::LookAway);
            }
            if events.len() != 1 {
                return invalid(format!("timeline entry {i}: expected exactly one event, found {}", events.len()));
            }
            timeline.push(TimedEvent { t: ev.t, event: events.remove(0) });
        }
        for (i, b) in file.scene.boxes.iter().enumerate() {
            if (0..3).any(|k| b.min[k] > b.max[k]) {
                return invalid(format!("scene box {i}: min exceeds max"));
            }
        }
        Ok(Self {
            name: file.name,
            time_limit: file.time_limit,
            dt: file.dt,
            seed: file.seed,
            scene: file.scene,
            robot: file.robot,
            headset: file.headset,
            anchor: file.anchor,
            rates: file.rates,
            success,
            timeline,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
name = "m"
time_limit = 1.0
[success]
body_within = { point = [1.0, 0.0, 0.0], radius = 0.1 }
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.dt, 0.02);
        assert!(s.timeline.is_empty());
        assert_eq!(s.rates, RatesSpec::default());
    }

    #[test]
    fn parse_error_reports_line() {
        let err = Scenario::parse("version = 1\nname = \n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn rejects_two_success_conditions() {
        let text = MINIMAL.replace("radius = 0.1 }", "radius = 0.1 }\nhand_within = { point = [0,0,0], radius = 1 }");
        assert!(matches!(Scenario::parse(&text), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn rejects_unsorted_timeline() {
        let text = format!("{MINIMAL}\n[[timeline]]\nt = 2.0\ncommand = \"sit\"\n[[timeline]]\nt = 1.0\ncommand = \"sit\"\n");
        assert!(matches!(Scenario::parse(&text), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn rejects_entry_with_two_events() {
        let text = format!("{MINIMAL}\n[[timeline]]\nt = 0.0\ncommand = \"sit\"\nlook_away = true\n");
        assert!(matches!(Scenario::parse(&text), Err(HarnessError::Invalid(_))));
    }
}
