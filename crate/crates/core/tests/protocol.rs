use omav_teleop::coupling::HandleState;
use omav_teleop::protocol::{
    decode_message, encode_message, EndSummary, Frame, Hello, Message, ProtocolError, StateFrame, TickGuard,
};
use omav_teleop::scenario::{bundled, load_scenario};
use omav_teleop::session::{InputFrame, Session};
use omav_teleop::stats::TlxResponse;
use omav_teleop::task::{EventKind, TaskEvent};
use omav_teleop::world::GripperCommand;
use omav_teleop::{Rot3, Vec3, Wrench6};
use proptest::prelude::*;

fn session() -> Session {
    Session::new(load_scenario(bundled("abbt").unwrap()).unwrap()).unwrap()
}

fn round_trip(frame: &Frame) -> Frame {
    decode_message(&encode_message(frame)).unwrap()
}

#[test]
fn hello_round_trips() {
    let s = session();
    let hello = Frame { tick: 0, message: Message::Hello(Hello::for_session(&s)) };
    assert_eq!(round_trip(&hello), hello);
    let Message::Hello(h) = &hello.message else { unreachable!() };
    assert_eq!(h.bodies.len(), s.state.world.bodies.len());
    assert_eq!(h.bodies.iter().filter(|b| b.name.starts_with("block")).count(), 16);
    assert!(h.bodies.iter().any(|b| b.vehicle_part && b.name == "hull"));
}

#[test]
fn extremal_handle_positions_round_trip_exactly() {
    for corner in 0..8 {
        let sign = |bit: u32| if corner & (1 << bit) == 0 { -1.0 } else { 1.0 };
        let p = Vec3::new(sign(0), sign(1), sign(2));
        let input = InputFrame {
            handle: HandleState::new(p, Rot3::rot_z(0.3), Vec3::new(0.1, -0.2, 1e-300)).unwrap(),
            gripper: GripperCommand::Latch,
        };
        let frame = Frame { tick: u64::MAX, message: Message::Input(input) };
        assert_eq!(round_trip(&frame), frame);
    }
}

#[test]
fn every_other_kind_round_trips() {
    let s = session();
    let frames = [
        Message::State(Box::new(StateFrame::for_session(&s))),
        Message::Feedback(Wrench6::new(Vec3::new(-12.0, 0.1 + 0.2, 3.0), Vec3::new(0.0, -0.0, 1e-17))),
        Message::Event(TaskEvent { tick: 42, t: 0.084, kind: EventKind::Transfer { block: "block_03".into() } }),
        Message::Tlx(TlxResponse::new([10.0, 20.0, 30.5, 40.0, 50.0, 100.0], [5, 4, 3, 2, 1, 0]).unwrap()),
        Message::End(EndSummary { reason: "time_up".into(), blocks: 3, energy: Some(96.4), checksum: Some("00ff".into()) }),
        Message::End(EndSummary::default()),
    ];
    for (tick, message) in frames.into_iter().enumerate() {
        let frame = Frame { tick: tick as u64, message };
        assert_eq!(round_trip(&frame), frame);
    }
}

#[test]
fn wire_shape_is_field_exact() {
    let frame = Frame { tick: 7, message: Message::Input(InputFrame::idle()) };
    let text = encode_message(&frame);
    assert!(text.starts_with(r#"{"v":1,"kind":"input","tick":7,"payload":{"#), "{text}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v.as_object().unwrap().len(), 4);
    assert_eq!(v["kind"], "input");
    assert_eq!(v["payload"]["gripper"], "hold");
    assert_eq!(v["payload"]["handle"]["attitude"].as_array().unwrap().len(), 9);
}

#[test]
fn unknown_kind_is_rejected() {
    let text = r#"{"v":1,"kind":"teleport","tick":3,"payload":{}}"#;
    assert_eq!(decode_message(text), Err(ProtocolError::UnknownKind("teleport".into())));
}

#[test]
fn other_versions_are_rejected() {
    let text = r#"{"v":2,"kind":"end","tick":3,"payload":{}}"#;
    assert_eq!(decode_message(text), Err(ProtocolError::UnsupportedVersion(2)));
}

#[test]
fn truncated_frame_reports_the_byte_offset() {
    let full = encode_message(&Frame { tick: 9, message: Message::Input(InputFrame::idle()) });
    let cut = &full[..full.len() - 5];
    match decode_message(cut) {
        Err(ProtocolError::MalformedFrame { offset, .. }) => assert_eq!(offset, cut.len()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn payload_errors_point_into_the_frame() {
    let text = r#"{"v":1,"kind":"input","tick":3,"payload":{"handle":{"position":[0,0,0],"attitude":[1,0,0,0,1,0,0,0,1],"velocity":[0,0,0]},"gripper":"squeeze"}}"#;
    match decode_message(text) {
        Err(ProtocolError::MalformedFrame { offset, message }) => {
            assert!(message.contains("squeeze"), "{message}");
            let at = text.find("\"squeeze\"").unwrap();
            assert!((at..=at + 9).contains(&offset), "offset {offset}, value at {at}");
        }
        other => panic!("{other:?}"),
    }
    let extra = r#"{"v":1,"kind":"end","tick":3,"payload":{},"x":1}"#;
    assert!(matches!(decode_message(extra), Err(ProtocolError::MalformedFrame { .. })));
}

#[test]
fn out_of_range_handle_and_bad_tlx_are_rejected() {
    let text = r#"{"v":1,"kind":"input","tick":3,"payload":{"handle":{"position":[1.01,0,0],"attitude":[1,0,0,0,1,0,0,0,1],"velocity":[0,0,0]},"gripper":"hold"}}"#;
    assert!(matches!(decode_message(text), Err(ProtocolError::InvalidPayload { kind: "input", .. })));
    let tlx = r#"{"v":1,"kind":"tlx","tick":3,"payload":{"ratings":[0,0,0,0,0,0],"weights":[5,5,5,5,0,0]}}"#;
    assert!(matches!(decode_message(tlx), Err(ProtocolError::MalformedFrame { .. })));
}

#[test]
fn ticks_may_not_go_backwards() {
    let mut guard = TickGuard::default();
    for t in [0, 0, 5, 9] {
        guard.check(t).unwrap();
    }
    assert_eq!(guard.check(8), Err(ProtocolError::TickRegression { last: 9, tick: 8 }));
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(-1.0), Just(1.0), Just(0.0), Just(-0.0), -1.0..=1.0f64]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e3..1e3f64]
}

fn gripper() -> impl Strategy<Value = GripperCommand> {
    prop_oneof![Just(GripperCommand::Hold), Just(GripperCommand::Latch), Just(GripperCommand::Release)]
}

proptest! {
    #[test]
    fn input_frames_round_trip(
        p in [unit(), unit(), unit()],
        v in [finite(), finite(), finite()],
        yaw in -3.2..3.2f64,
        g in gripper(),
        tick in any::<u64>(),
    ) {
        let handle = HandleState::new(Vec3::from(p), Rot3::rot_z(yaw), Vec3::from(v)).unwrap();
        let frame = Frame { tick, message: Message::Input(InputFrame { handle, gripper: g }) };
        prop_assert_eq!(round_trip(&frame), frame);
    }

    #[test]
    fn feedback_frames_round_trip(f in [finite(), finite(), finite()], m in [finite(), finite(), finite()], tick in any::<u64>()) {
        let frame = Frame { tick, message: Message::Feedback(Wrench6::new(Vec3::from(f), Vec3::from(m))) };
        prop_assert_eq!(round_trip(&frame), frame);
    }

    #[test]
    fn truncation_never_decodes(cut in 1usize..60) {
        let full = encode_message(&Frame { tick: 1, message: Message::End(EndSummary::default()) });
        let cut = cut.min(full.len() - 1);
        let is_malformed = matches!(decode_message(&full[..cut]), Err(ProtocolError::MalformedFrame { .. }));
        prop_assert!(is_malformed);
    }
}
