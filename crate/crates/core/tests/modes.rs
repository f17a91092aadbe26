mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_core::clock::SimTime;
use teleop_core::frames::AnchorRecord;
use teleop_core::geometry::{convert_transform, head_to_hand, Convention, Quat, Transform, Vec3};
use teleop_core::modes::{
    gripper_rotation_rate, CommandToken, Effect, ModeContext, ModeId, ModesConfig, OperatorState, RejectReason,
};
use teleop_core::msgs::{self, ArmPoseMsg, TargetMsg, UiEvent};

const UNITY: Convention = Convention::UnityLhYup;
const ROS: Convention = Convention::RosRhZup;

fn anchor() -> AnchorRecord {
    AnchorRecord { id: "a".into(), world_pose: Transform::identity(ROS), created_at: 0.0 }
}

fn op_at(pos: Vec3) -> OperatorState {
    OperatorState { world_head: Transform::new(pos, Quat::IDENTITY, UNITY), gaze_cursor: None, head_roll: 0.0 }
}

fn ctx() -> ModeContext {
    let mut c = ModeContext::new(ModesConfig::default()).unwrap();
    c.set_anchor(anchor());
    c
}

#[test]
fn vocabulary_is_exactly_the_listed_phrases() {
    let mut ours: Vec<_> = CommandToken::ALL.iter().map(|t| t.phrase()).collect();
    let mut theirs = PHRASES.to_vec();
    ours.sort();
    theirs.sort();
    assert_eq!(ours, theirs);
    for p in PHRASES {
        assert_eq!(p.parse::<CommandToken>().unwrap().phrase(), p);
        assert_eq!(p.to_uppercase().parse::<CommandToken>().unwrap().phrase(), p);
    }
    for bad in ["", "go", "spin", "power  on now", "armmode"] {
        assert!(bad.parse::<CommandToken>().is_err(), "{bad}");
    }
}

#[test]
fn gating_is_exhaustive_and_rejections_do_not_mutate() {
    let mut checked = 0;
    for (base, op) in gating_states() {
        for phrase in PHRASES {
            let mut ctx = base.clone();
            let fx = ctx.dispatch_text(phrase, &op);
            let mode = base.current();
            if allowed(phrase, mode) {
                let no_cursor = phrase == "select item" && op.gaze_cursor.is_none();
                if no_cursor {
                    assert_eq!(fx.len(), 1);
                    assert!(fx[0].is_rejection());
                    assert_eq!(ctx, base);
                } else {
                    assert!(!fx.iter().any(Effect::is_rejection), "{phrase} in {mode:?}: {fx:?}");
                    assert!(matches!(&fx[0], Effect::Ui(UiEvent::Tooltip { text }) if text == phrase));
                }
            } else {
                let want = if mode == ModeId::None { RejectReason::NoModeSelected } else { RejectReason::WrongMode };
                assert_eq!(
                    fx,
                    vec![Effect::Ui(UiEvent::Rejected { text: phrase.into(), reason: want.code().into() })],
                    "{phrase} in {mode:?}"
                );
                assert_eq!(ctx, base, "{phrase} in {mode:?} mutated state");
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 14 * 26);
}

#[test]
fn unknown_text_is_rejected_whole() {
    for (base, op) in gating_states() {
        let mut ctx = base.clone();
        let fx = ctx.dispatch_text("make coffee", &op);
        assert_eq!(
            fx,
            vec![Effect::Ui(UiEvent::Rejected { text: "make coffee".into(), reason: "unknown_command".into() })]
        );
        assert_eq!(ctx, base);
    }
}

#[test]
fn basic_commands_forward_verbatim() {
    let op = op_at(Vec3::ZERO);
    for phrase in PHRASES.iter().take(11) {
        let mut c = ctx();
        let fx = c.dispatch_text(phrase, &op);
        assert!(
            fx.iter().any(|e| matches!(e, Effect::Command(m) if m.cmd == *phrase && m.pos.is_none())),
            "{phrase}: {fx:?}"
        );
    }
}

#[test]
fn come_here_carries_anchor_local_head() {
    let mut c = ModeContext::new(ModesConfig::default()).unwrap();
    c.set_anchor(AnchorRecord {
        id: "a".into(),
        world_pose: Transform::from_translation(Vec3::new(1.0, 0.0, 0.0), ROS),
        created_at: 0.0,
    });
    let fx = c.dispatch_text("come here", &op_at(Vec3::new(0.0, 1.6, 2.0)));
    let cmd = fx.iter().find_map(|e| if let Effect::Command(m) = e { Some(m.clone()) } else { None }).unwrap();
    assert_eq!(cmd.anchor_id.as_deref(), Some("a"));
    // headset (0, 1.6, 2) is ROS (2, 0, 1.6); minus the anchor at x = 1
    assert_eq!(cmd.pos, Some(Vec3::new(1.0, 0.0, 1.6)));

    let mut bare = ModeContext::new(ModesConfig::default()).unwrap();
    let fx = bare.dispatch_text("come here", &op_at(Vec3::ZERO));
    assert!(fx.iter().any(|e| matches!(e, Effect::Ui(UiEvent::Warning { .. }))));
}

fn count_topic(ctx: &mut ModeContext, op: &OperatorState, topic: &str, hz: u64, secs: u64) -> usize {
    let step = 1_000_000_000 / hz;
    (0..hz * secs)
        .flat_map(|k| ctx.tick(op, SimTime::from_nanos(k * step)))
        .filter(|e| e.topic == topic)
        .count()
}

#[test]
fn follow_publishes_at_half_second_rate() {
    let mut c = ctx();
    let mut op = op_at(Vec3::new(0.0, 1.6, 0.0));
    op.gaze_cursor = Some(Vec3::new(0.0, 0.0, 3.0));
    c.dispatch_text("follow mode", &op);
    c.dispatch_text("activate", &op);
    let n = count_topic(&mut c, &op, msgs::HOLO_FOLLOW_POSE, 100, 60);
    assert!((119..=121).contains(&n), "{n}");
}

#[test]
fn each_mode_uses_its_own_topic_and_rate() {
    for (mode, topic) in
        [("follow mode", msgs::HOLO_FOLLOW_POSE), ("select mode", msgs::HOLO_SELECT_POSE), ("arm mode", msgs::HOLO_ARM_POSE)]
    {
        let mut c = ctx();
        let mut op = op_at(Vec3::new(0.0, 1.6, 0.0));
        op.gaze_cursor = Some(Vec3::new(0.0, 0.0, 3.0));
        c.dispatch_text(mode, &op);
        if mode == "select mode" {
            c.dispatch_text("select item", &op);
        }
        assert_eq!(count_topic(&mut c, &op, topic, 50, 10), 0, "{mode} inactive");
        c.dispatch_text("activate", &op);
        let n = count_topic(&mut c, &op, topic, 50, 10);
        assert!((19..=21).contains(&n), "{mode}: {n}");
    }
}

#[test]
fn follow_skips_when_gaze_misses() {
    let mut c = ctx();
    let op = op_at(Vec3::new(0.0, 1.6, 0.0));
    c.dispatch_text("follow mode", &op);
    c.dispatch_text("activate", &op);
    assert_eq!(count_topic(&mut c, &op, msgs::HOLO_FOLLOW_POSE, 50, 5), 0);
}

#[test]
fn follow_target_is_anchor_local_robot_convention() {
    let mut c = ModeContext::new(ModesConfig::default()).unwrap();
    c.set_anchor(AnchorRecord {
        id: "a".into(),
        world_pose: Transform::new(Vec3::new(1.0, 1.0, 0.0), Quat::from_yaw(std::f64::consts::FRAC_PI_2), ROS),
        created_at: 0.0,
    });
    let mut op = op_at(Vec3::new(0.0, 1.6, 0.0));
    op.gaze_cursor = Some(Vec3::new(-1.0, 0.0, 3.0)); // ROS (3, 1, 0)
    c.dispatch_text("follow mode", &op);
    c.dispatch_text("activate", &op);
    let env = c.tick(&op, SimTime::ZERO).pop().unwrap();
    let msg: TargetMsg = serde_json::from_slice(&env.payload).unwrap();
    assert_eq!(msg.anchor_id, "a");
    assert!(msg.pos.distance(Vec3::new(0.0, -2.0, 0.0)) < 1e-12, "{:?}", msg.pos);
}

#[test]
fn delete_selection_stops_active_select() {
    let mut c = ctx();
    let mut op = op_at(Vec3::ZERO);
    op.gaze_cursor = Some(Vec3::new(0.0, 0.0, 1.0));
    c.dispatch_text("select mode", &op);
    c.dispatch_text("select item", &op);
    c.dispatch_text("activate", &op);
    let fx = c.dispatch_text("delete selection", &op);
    assert!(fx.contains(&Effect::Ui(UiEvent::MarkerRemoved)));
    assert!(fx.iter().any(|e| matches!(e, Effect::Command(m) if m.cmd == "stop")));
    assert!(c.selection().is_none());
    // nothing left to publish
    assert_eq!(count_topic(&mut c, &op, msgs::HOLO_SELECT_POSE, 50, 2), 0);
}

#[test]
fn mode_switch_ends_previous_activation() {
    let mut c = ctx();
    let op = op_at(Vec3::ZERO);
    c.dispatch_text("follow mode", &op);
    c.dispatch_text("activate", &op);
    assert!(c.is_active());
    let fx = c.dispatch_text("select mode", &op);
    assert!(!c.is_active());
    assert_eq!(c.current(), ModeId::Select);
    assert!(fx.iter().any(|e| matches!(e, Effect::Command(m) if m.cmd == "stop")));
}

#[test]
fn grasp_toggles_gripper_angle() {
    let mut c = ctx();
    let op = op_at(Vec3::ZERO);
    c.dispatch_text("arm mode", &op);
    assert!(c.dispatch_text("grasp", &op).contains(&Effect::GripperAngle(1.57)));
    assert!(c.dispatch_text("grasp", &op).contains(&Effect::GripperAngle(0.0)));
}

#[test]
fn arm_hand_follows_head_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..100 {
        let mut c = ctx();
        let mut op = OperatorState { world_head: random_pose(&mut rng, 2.0, UNITY), gaze_cursor: None, head_roll: 0.0 };
        c.dispatch_text("arm mode", &op);
        c.dispatch_text("activate", &op);
        let vrobot = *c.world_vrobot().unwrap();
        let first = c.commanded_hand(&op).unwrap();
        assert!(first.pos.distance(Vec3::new(0.9, 0.0, 0.2)) < 1e-9);
        for _ in 0..10 {
            op.world_head = nudge(&mut rng, &op.world_head);
            let got = c.commanded_hand(&op).unwrap();
            let want = convert_oracle(&head_to_hand(&op.world_head, &vrobot).unwrap(), ROS);
            assert!(mat_diff(&mat4(&got), &want) < 1e-9);
            let oracle = convert_oracle(&vrobot, UNITY);
            let direct = basis4(UNITY, ROS) * mat4(&op.world_head).try_inverse().unwrap() * oracle * basis4(ROS, UNITY);
            assert!(mat_diff(&mat4(&got), &direct) < 1e-9);
        }
    }
}

#[test]
fn reactivation_resumes_without_a_jump() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let mut c = ctx();
        let mut op = OperatorState { world_head: random_pose(&mut rng, 2.0, UNITY), gaze_cursor: None, head_roll: 0.0 };
        c.dispatch_text("arm mode", &op);
        c.dispatch_text("activate", &op);
        for _ in 0..5 {
            op.world_head = nudge(&mut rng, &op.world_head);
        }
        let before = c.commanded_hand(&op).unwrap();
        c.dispatch_text("terminate", &op);
        op.world_head = random_pose(&mut rng, 2.0, UNITY);
        c.dispatch_text("activate", &op);
        let after = c.commanded_hand(&op).unwrap();
        assert!(before.pos.distance(after.pos) < 1e-9);
        assert!(before.rot.angle_to(after.rot) < 1e-7);
    }
}

#[test]
fn arm_pose_message_matches_commanded_hand() {
    let mut c = ctx();
    let op = op_at(Vec3::new(0.3, 1.5, -0.2));
    c.dispatch_text("arm mode", &op);
    c.dispatch_text("activate", &op);
    let env = c.tick(&op, SimTime::ZERO).pop().unwrap();
    assert_eq!(env.topic, msgs::HOLO_ARM_POSE);
    let msg: ArmPoseMsg = serde_json::from_slice(&env.payload).unwrap();
    let hand = c.commanded_hand(&op).unwrap();
    assert_eq!(msg.pos, hand.pos);
    assert_eq!(c.last_hand(), Some(&hand));
}

#[test]
fn hand_offset_round_trips_through_headset_convention() {
    let offset = ModesConfig::default().hand_offset;
    let back = convert_transform(&convert_transform(&offset, UNITY), ROS);
    assert_eq!(back.pos, offset.pos);
}

#[test]
fn gripper_roll_integrates_head_tilt() {
    let dz = 5f64.to_radians();
    assert_eq!(gripper_rotation_rate(dz * 0.9, 1.0, dz), 0.0);
    assert!((gripper_rotation_rate(0.5, 2.0, dz) - 2.0 * (0.5 - dz)).abs() < 1e-15);
    assert!((gripper_rotation_rate(-0.5, 2.0, dz) + 2.0 * (0.5 - dz)).abs() < 1e-15);

    let mut c = ctx();
    let mut op = op_at(Vec3::ZERO);
    op.head_roll = 0.3;
    c.dispatch_text("arm mode", &op);
    c.dispatch_text("activate", &op);
    c.dispatch_text("rotate hand", &op);
    for k in 0..=100u64 {
        c.tick(&op, SimTime::from_nanos(k * 10_000_000));
    }
    let want = (0.3 - dz) * 1.0;
    assert!((c.gripper_roll() - want).abs() < 1e-9, "{}", c.gripper_roll());
    c.dispatch_text("stop rotate hand", &op);
    for k in 101..=200u64 {
        c.tick(&op, SimTime::from_nanos(k * 10_000_000));
    }
    assert!((c.gripper_roll() - want).abs() < 1e-9);
    // roll shows up about the hand's forward axis
    let hand = c.commanded_hand(&op).unwrap();
    assert!((hand.rot.twist_about(Vec3::new(1.0, 0.0, 0.0)) - want).abs() < 1e-9);
}

#[test]
fn no_anchor_warns_once_and_publishes_nothing() {
    let mut c = ModeContext::new(ModesConfig::default()).unwrap();
    let mut op = op_at(Vec3::ZERO);
    op.gaze_cursor = Some(Vec3::new(0.0, 0.0, 1.0));
    c.dispatch_text("follow mode", &op);
    c.dispatch_text("activate", &op);
    let envs: Vec<_> = (0..100u64).flat_map(|k| c.tick(&op, SimTime::from_nanos(k * 20_000_000))).collect();
    assert_eq!(envs.len(), 1);
    assert_eq!(envs[0].topic, msgs::UI_EVENTS);
}
