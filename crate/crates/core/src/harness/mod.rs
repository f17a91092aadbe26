//! Headless scenario runner.
//!
//! A run wires a [`HeadsetSim`] to a [`RobotSim`] over a bus [`Endpoint`]
//! pair and steps both on one simulated clock. With the in-process
//! transport everything happens on the caller's thread. With `tcp` the robot
//! runs on its own thread behind a localhost socket; the headset sends a
//! `~clock` frame after each tick's traffic and waits for the robot to echo
//! it, so both transports see the same messages at the same ticks.

mod scenario;
mod sim;

use std::collections::BTreeMap;
use std::fmt;
use std::net::TcpListener;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scenario::{
    AnchorSpec, BoxSpec, Event, HeadSpec, HeadsetSpec, PoseSpec, RatesSpec, RaySpec, Region, RobotSpec, Scenario,
    SceneSpec, Success, TimedEvent, SCENARIO_VERSION,
};
pub use sim::{Checkpoint, HeadsetSim, Outgoing, RobotOutput, RobotSim};

use crate::bus::{BusError, Direction, Endpoint, Envelope, TopicRegistry};
use crate::clock::SimTime;
use crate::frames::{AnchorRecord, AnchorRegistry, SharedRegistry, DEFAULT_DEDUP_RADIUS};
use crate::msgs::{self, ClockMsg, PoseMsg};

/// How long either side of a tcp run waits for the other before giving up.
const LOCKSTEP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("report parse error: {0}")]
    Report(String),
    #[error("replay mismatch: {0}")]
    Mismatch(Box<ReplayMismatch>),
}

impl From<BusError> for HarnessError {
    fn from(e: BusError) -> Self {
        HarnessError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    InProcess,
    Tcp,
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in_process" => Ok(Transport::InProcess),
            "tcp" => Ok(Transport::Tcp),
            other => Err(format!("unknown transport '{other}' (expected in_process or tcp)")),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::InProcess => "in_process",
            Transport::Tcp => "tcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub transport: Transport,
    pub seed: u64,
    pub success: bool,
    /// Simulated seconds until the success condition first held, or until
    /// the time limit on failure.
    pub completion_time: f64,
    pub time_limit: f64,
    pub ticks: u64,
    /// Distance the body travelled on the ground, meters.
    pub path_length: f64,
    pub command_count: u64,
    /// Voice commands the headset refused.
    pub rejection_count: u64,
    /// Messages the robot refused, per topic.
    pub robot_rejections: BTreeMap<String, u64>,
    /// Envelopes sent by either side, per topic. Lockstep frames excluded.
    pub envelope_counts: BTreeMap<String, u64>,
    pub final_body: PoseMsg,
    /// Hand pose in the world.
    pub final_hand: PoseMsg,
    /// SHA-256 over the robot state after every tick.
    pub trajectory_hash: String,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))
    }
}

/// Where a replayed run first parted from the recorded one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    /// Top-level report fields that differ.
    pub fields: Vec<String>,
    /// First checkpoint that differs, recorded then replayed.
    pub first_divergent: Option<(Option<Checkpoint>, Option<Checkpoint>)>,
}

impl fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fields differ: {}", self.fields.join(", "))?;
        if let Some((recorded, replayed)) = &self.first_divergent {
            let show = |c: &Option<Checkpoint>| match c {
                Some(c) => serde_json::to_string(c).expect("checkpoint serializes"),
                None => "(none)".into(),
            };
            write!(f, "; first divergent checkpoint: recorded {} vs replayed {}", show(recorded), show(replayed))?;
        }
        Ok(())
    }
}

/// Topics the headset publishes and listens to.
pub fn headset_topics() -> TopicRegistry {
    TopicRegistry::new()
        .with(msgs::HOLO_COMMAND, Direction::Outbound, "CommandMsg")
        .with(msgs::HOLO_FOLLOW_POSE, Direction::Outbound, "TargetMsg")
        .with(msgs::HOLO_SELECT_POSE, Direction::Outbound, "TargetMsg")
        .with(msgs::HOLO_ARM_POSE, Direction::Outbound, "ArmPoseMsg")
        .with(msgs::HOLO_ANCHOR_ID, Direction::Outbound, "AnchorIdMsg")
        .with(msgs::SPOT_JOINT_STATES, Direction::Inbound, "JointStatesMsg")
        .with(msgs::SPOT_STATUS, Direction::Inbound, "StatusMsg")
        .with(msgs::CLOCK, Direction::Duplex, "ClockMsg")
}

/// Topics the robot publishes and listens to.
pub fn robot_topics() -> TopicRegistry {
    TopicRegistry::new()
        .with(msgs::HOLO_COMMAND, Direction::Inbound, "CommandMsg")
        .with(msgs::HOLO_FOLLOW_POSE, Direction::Inbound, "TargetMsg")
        .with(msgs::HOLO_SELECT_POSE, Direction::Inbound, "TargetMsg")
        .with(msgs::HOLO_ARM_POSE, Direction::Inbound, "ArmPoseMsg")
        .with(msgs::HOLO_ANCHOR_ID, Direction::Inbound, "AnchorIdMsg")
        .with(msgs::SPOT_GO_TO_POSE, Direction::Inbound, "PoseMsg")
        .with(msgs::SPOT_JOINT_STATES, Direction::Outbound, "JointStatesMsg")
        .with(msgs::SPOT_STATUS, Direction::Outbound, "StatusMsg")
        .with(msgs::CLOCK, Direction::Duplex, "ClockMsg")
}

/// Creates the scenario's anchor in a fresh cloud registry.
pub fn setup_anchor(scenario: &Scenario, seed: u64) -> (SharedRegistry, AnchorRecord) {
    let mut registry = AnchorRegistry::with_seed(DEFAULT_DEDUP_RADIUS, seed);
    let (record, _) = registry.create_anchor(&scenario.anchor.pose.transform(), 0.0);
    (Arc::new(RwLock::new(registry)), record)
}

fn tick_count(scenario: &Scenario) -> u64 {
    let dt = SimTime::from_secs(scenario.dt).as_nanos().max(1);
    SimTime::from_secs(scenario.time_limit).as_nanos().div_ceil(dt)
}

type Counts = BTreeMap<String, u64>;

fn bump(counts: &mut Counts, topic: &str) {
    *counts.entry(topic.to_owned()).or_default() += 1;
}

/// Sends headset output. Console events have no console to go to in a
/// headless run; they are only counted.
fn send_headset(ep: &Endpoint, out: Vec<Outgoing>, counts: &mut Counts) -> Result<(), HarnessError> {
    for o in out {
        bump(counts, &o.topic());
        match o {
            Outgoing::Publish(env) if env.topic == msgs::UI_EVENTS => {}
            Outgoing::Publish(env) => ep.publish(&env.topic, &env.payload)?,
            Outgoing::Call { name, body } => drop(ep.call_service_async(&name, &body)?),
        }
    }
    Ok(())
}

fn send_robot(ep: &Endpoint, out: RobotOutput, counts: &mut Counts) -> Result<(), HarnessError> {
    for env in out.publish {
        bump(counts, &env.topic);
        ep.publish(&env.topic, &env.payload)?;
    }
    for (req, result) in out.replies {
        bump(counts, &format!("{}{}", crate::bus::SERVICE_PREFIX, req.name));
        ep.respond(&req, result)?;
    }
    Ok(())
}

/// Runs a scenario to success or its time limit.
pub fn run_scenario(scenario: &Scenario, transport: Transport, seed: u64) -> Result<RunReport, HarnessError> {
    let (anchors, anchor) = setup_anchor(scenario, seed);
    let headset = HeadsetSim::new(scenario, &anchor, seed);
    let robot = RobotSim::new(scenario, anchors);
    let (headset, robot, counts, ticks) = match transport {
        Transport::InProcess => run_in_process(scenario, headset, robot)?,
        Transport::Tcp => run_tcp(scenario, headset, robot)?,
    };
    Ok(report(scenario, transport, seed, &headset, &robot, counts, ticks))
}

pub fn run_file(path: &Path, transport: Transport, seed: Option<u64>) -> Result<RunReport, HarnessError> {
    let scenario = Scenario::load(path)?;
    run_scenario(&scenario, transport, seed.unwrap_or(scenario.seed))
}

type RunParts = (HeadsetSim, RobotSim, Counts, u64);

fn run_in_process(scenario: &Scenario, mut headset: HeadsetSim, mut robot: RobotSim) -> Result<RunParts, HarnessError> {
    let (h_ep, r_ep) = Endpoint::pair(headset_topics(), robot_topics());
    let dt = SimTime::from_secs(scenario.dt);
    let mut counts = Counts::new();
    send_headset(&h_ep, headset.startup(), &mut counts)?;
    let mut ticks = 0;
    for k in 0..tick_count(scenario) {
        let now = SimTime::from_nanos(dt.as_nanos() * k);
        h_ep.drain();
        send_headset(&h_ep, headset.tick(now), &mut counts)?;
        let out = robot.tick(now, r_ep.drain());
        let done = out.done;
        send_robot(&r_ep, out, &mut counts)?;
        ticks = k + 1;
        if done {
            break;
        }
    }
    Ok((headset, robot, counts, ticks))
}

fn run_tcp(scenario: &Scenario, mut headset: HeadsetSim, mut robot: RobotSim) -> Result<RunParts, HarnessError> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| HarnessError::Transport(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| HarnessError::Transport(e.to_string()))?;
    let dt = SimTime::from_secs(scenario.dt);
    let max_ticks = tick_count(scenario);

    let robot_thread = thread::Builder::new()
        .name("robot".into())
        .spawn(move || -> Result<(RobotSim, Counts), HarnessError> {
            let ep = Endpoint::accept(&listener, robot_topics())?;
            let mut counts = Counts::new();
            let mut inbound = Vec::new();
            loop {
                let env = ep
                    .recv_timeout(LOCKSTEP_TIMEOUT)
                    .ok_or_else(|| HarnessError::Transport("headset went quiet".into()))?;
                if env.topic != msgs::CLOCK {
                    inbound.push(env);
                    continue;
                }
                let clock: ClockMsg = parse_clock(&env)?;
                let now = SimTime::from_nanos(dt.as_nanos() * clock.tick);
                let out = robot.tick(now, std::mem::take(&mut inbound));
                let done = out.done || clock.tick + 1 >= max_ticks;
                send_robot(&ep, out, &mut counts)?;
                ep.publish_json(msgs::CLOCK, &ClockMsg { tick: clock.tick, done })?;
                if done {
                    return Ok((robot, counts));
                }
            }
        })
        .map_err(|e| HarnessError::Transport(e.to_string()))?;

    let ep = Endpoint::connect(addr, headset_topics())?;
    let mut counts = Counts::new();
    send_headset(&ep, headset.startup(), &mut counts)?;
    let mut ticks = 0;
    for k in 0..max_ticks {
        let now = SimTime::from_nanos(dt.as_nanos() * k);
        send_headset(&ep, headset.tick(now), &mut counts)?;
        ep.publish_json(msgs::CLOCK, &ClockMsg { tick: k, done: false })?;
        let done = loop {
            let env = ep
                .recv_timeout(LOCKSTEP_TIMEOUT)
                .ok_or_else(|| HarnessError::Transport("robot went quiet".into()))?;
            if env.topic == msgs::CLOCK {
                let clock = parse_clock(&env)?;
                if clock.tick == k {
                    break clock.done;
                }
            }
        };
        ticks = k + 1;
        if done {
            break;
        }
    }
    let (robot, robot_counts) =
        robot_thread.join().map_err(|_| HarnessError::Transport("robot thread panicked".into()))??;
    for (topic, n) in robot_counts {
        *counts.entry(topic).or_default() += n;
    }
    Ok((headset, robot, counts, ticks))
}

fn parse_clock(env: &Envelope) -> Result<ClockMsg, HarnessError> {
    serde_json::from_slice(&env.payload).map_err(|e| HarnessError::Transport(format!("bad clock frame: {e}")))
}

fn report(
    scenario: &Scenario,
    transport: Transport,
    seed: u64,
    headset: &HeadsetSim,
    robot: &RobotSim,
    envelope_counts: Counts,
    ticks: u64,
) -> RunReport {
    let state = robot.robot().state();
    let dt = SimTime::from_secs(scenario.dt);
    let elapsed = SimTime::from_nanos(dt.as_nanos() * ticks);
    RunReport {
        scenario: scenario.name.clone(),
        transport,
        seed,
        success: robot.completed_at.is_some(),
        completion_time: robot.completed_at.unwrap_or(elapsed).as_secs(),
        time_limit: scenario.time_limit,
        ticks,
        path_length: robot.robot().path_length(),
        command_count: headset.command_count,
        rejection_count: headset.rejection_count,
        robot_rejections: robot.rejections.clone(),
        envelope_counts,
        final_body: PoseMsg::from(&state.body),
        final_hand: PoseMsg::from(&state.hand_world()),
        trajectory_hash: robot.trajectory_hash(),
        checkpoints: robot.checkpoints.clone(),
    }
}

/// Re-runs the recorded scenario with the report's transport and seed and
/// checks that every field matches.
pub fn replay(recorded: &RunReport, scenario: &Scenario) -> Result<RunReport, HarnessError> {
    let fresh = run_scenario(scenario, recorded.transport, recorded.seed)?;
    match diff_reports(recorded, &fresh) {
        None => Ok(fresh),
        Some(m) => Err(HarnessError::Mismatch(Box::new(m))),
    }
}

pub fn diff_reports(recorded: &RunReport, fresh: &RunReport) -> Option<ReplayMismatch> {
    let a = serde_json::to_value(recorded).expect("report serializes");
    let b = serde_json::to_value(fresh).expect("report serializes");
    let (a, b) = (a.as_object().expect("struct"), b.as_object().expect("struct"));
    let fields: Vec<String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).cloned().collect();
    if fields.is_empty() {
        return None;
    }
    let n = recorded.checkpoints.len().max(fresh.checkpoints.len());
    let first_divergent = (0..n)
        .find(|&i| recorded.checkpoints.get(i) != fresh.checkpoints.get(i))
        .map(|i| (recorded.checkpoints.get(i).cloned(), fresh.checkpoints.get(i).cloned()));
    Some(ReplayMismatch { fields, first_divergent })
}

