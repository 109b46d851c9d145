use omav_teleop::dynamics::RigidState;
use omav_teleop::scenario::{bundled, load_scenario, Scenario, ScenarioConfig, ScenarioError, BUNDLED};
use omav_teleop::so3::{Rot3, Vec3};
use omav_teleop::task::{task_update, EventKind, TaskDetail, TaskSpec, TaskStatus};
use omav_teleop::world::{BodyKind, GripperCommand, Shape, GRAVITY};

fn scenario(name: &str) -> Scenario {
    load_scenario(bundled(name).unwrap()).unwrap()
}

/// Steps the world with the vehicle frozen at `state`, feeding the task.
fn run(s: &mut Scenario, status: TaskStatus, state: &RigidState, ticks: usize) -> TaskStatus {
    let dt = s.config.session.dt;
    let mut status = status;
    s.world.set_vehicle(state);
    for _ in 0..ticks {
        let report = s.world.step(&[], dt);
        status = task_update(&status, &s.task, &s.world, &report.contacts, dt);
    }
    status
}

#[test]
fn every_bundled_scenario_builds() {
    for (name, text) in BUNDLED {
        let s = load_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&s.config.name, name);
        assert!(s.world.bodies.iter().all(|b| b.validate().is_ok()));
    }
}

#[test]
fn abbt_is_the_clinical_box_scaled_sixteen_times() {
    let s = scenario("abbt");
    assert_eq!(s.config.task.duration(), 80.0);
    let TaskSpec::Abbt { geometry, blocks, .. } = &s.task else { panic!() };
    assert!((geometry.half_length - 0.5 * 16.0 * 0.537).abs() < 1e-12);
    assert!((geometry.half_width - 0.5 * 16.0 * 0.254).abs() < 1e-12);
    assert!((geometry.partition_height - 16.0 * 0.152).abs() < 1e-12);
    assert!((geometry.block_edge - 0.4).abs() < 1e-12);
    assert_eq!(blocks.len(), 16);
    for &b in blocks {
        let body = &s.world.bodies[b];
        assert_eq!(body.mass, 0.25);
        assert!(body.graspable && body.pose.position.x < 0.0);
    }
}

#[test]
fn peg_scenario_has_five_millimetres_of_clearance() {
    let s = scenario("peg");
    let TaskSpec::Peg { peg, board, .. } = s.task else { panic!() };
    assert_eq!(s.world.bodies[peg].shape, Shape::Cylinder { radius: 0.02, half_length: 0.15 });
    let Shape::HolePlate { hole_radius, .. } = s.world.bodies[board].shape else { panic!() };
    assert_eq!(hole_radius, 0.025);
}

#[test]
fn push_platform_breaks_away_at_five_newtons() {
    let s = scenario("push");
    let TaskSpec::Push { platform, .. } = s.task else { panic!() };
    let b = &s.world.bodies[platform];
    assert!((b.mu_s * b.mass * GRAVITY - 5.0).abs() < 1e-12);
    assert!((b.mu_k * b.mass * GRAVITY - 1.0).abs() < 1e-12);
    assert!(matches!(b.kind, BodyKind::Rail { .. }));
    assert_eq!(s.coupling.v_max, 0.15);
}

#[test]
fn unknown_task_key_is_a_parse_error() {
    let text = bundled("abbt").unwrap().replace("blocks = 16", "blocks = 16\nbonus = 3");
    match ScenarioConfig::parse(&text) {
        Err(ScenarioError::Parse { line, .. }) => assert!(line > 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_values_name_the_broken_invariant() {
    let base = bundled("push").unwrap();
    let cases = [
        ("duration = 30.0", "duration = 0.0", "task.duration"),
        ("tool = \"pusher\"", "tool = \"floor\"", "task.tool"),
        ("mass = 2.0", "mass = -2.0", "bodies.1"),
    ];
    for (from, to, field) in cases {
        match load_scenario(&base.replace(from, to)) {
            Err(ScenarioError::Validation { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{to}: {other:?}"),
        }
    }
}

#[test]
fn abbt_blocks_start_at_rest() {
    let mut s = scenario("abbt");
    let status = TaskStatus::new(&s.task, 80.0);
    let start = s.start;
    run(&mut s, status, &start, 500);
    let TaskSpec::Abbt { blocks, .. } = &s.task else { panic!() };
    for &b in blocks {
        assert!(s.world.bodies[b].velocity.norm() < 1e-3);
    }
}

fn carry_block(s: &mut Scenario, target: Vec3) -> (TaskStatus, usize) {
    let TaskSpec::Abbt { blocks, .. } = &s.task else { panic!() };
    let block = blocks[0];
    let top = s.world.bodies[block].pose.position + Vec3::new(0.0, 0.0, 0.2);
    let mut vehicle = RigidState::at_rest(top + Vec3::new(0.0, 0.0, 0.36), Rot3::identity());
    s.world.set_vehicle(&vehicle);
    s.world.command_gripper(GripperCommand::Latch).unwrap();
    assert_eq!(s.world.gripper.attached.map(|a| a.body), Some(block));
    let status = TaskStatus::new(&s.task, 80.0);
    let status = run(s, status, &vehicle, 10);
    // carry the block so its center ends 5 mm above its resting height
    let offset = s.world.bodies[block].pose.position - vehicle.position;
    vehicle.position = target - offset;
    let status = run(s, status, &vehicle, 1);
    s.world.command_gripper(GripperCommand::Release).unwrap();
    (status, block)
}

#[test]
fn released_block_settling_on_target_side_counts_once() {
    let mut s = scenario("abbt");
    let (status, block) = carry_block(&mut s, Vec3::new(2.0, 0.0, 0.205));
    let vehicle = s.world.rig.state;
    let status = run(&mut s, status, &vehicle, 1000);
    assert_eq!(status.counters.transfers, 1);
    let transfers: Vec<_> = status.events.iter().filter(|e| matches!(e.kind, EventKind::Transfer { .. })).collect();
    assert_eq!(transfers.len(), 1);
    // the block needed time to fall and settle
    assert!(transfers[0].t >= 0.2);
    // picking it up and dropping it again does not count twice
    s.world.command_gripper(GripperCommand::Latch).unwrap();
    let status = run(&mut s, status, &vehicle, 10);
    s.world.command_gripper(GripperCommand::Release).unwrap();
    let status = run(&mut s, status, &vehicle, 500);
    assert_eq!(status.counters.transfers, 1);
    assert!(s.world.bodies[block].pose.position.x > 0.0);
}

#[test]
fn block_dropped_on_start_side_does_not_count() {
    let mut s = scenario("abbt");
    let (status, _) = carry_block(&mut s, Vec3::new(-0.8, 0.0, 0.205));
    let vehicle = s.world.rig.state;
    let status = run(&mut s, status, &vehicle, 1000);
    assert_eq!(status.counters.transfers, 0);
    let kinds: Vec<_> = status.events.iter().map(|e| &e.kind).collect();
    assert!(matches!(kinds[..], [EventKind::Latched { .. }, EventKind::Released { .. }]), "{kinds:?}");
}

#[test]
fn abbt_stops_at_eighty_seconds() {
    let s = scenario("abbt");
    let mut status = TaskStatus::new(&s.task, 80.0);
    for _ in 0..40_000 {
        status = task_update(&status, &s.task, &s.world, &[], 0.002);
    }
    assert!(status.terminal);
    assert_eq!(status.elapsed, 80.0);
    assert!(matches!(status.events.last().unwrap().kind, EventKind::TimeUp));
    let after = task_update(&status, &s.task, &s.world, &[], 0.002);
    assert_eq!(after, status);
}

#[test]
fn partition_contact_is_logged_as_a_hit() {
    let mut s = scenario("abbt");
    let mut status = TaskStatus::new(&s.task, 80.0);
    // hull edge 2 cm into the partition, then out again, twice
    for x in [-0.36, -0.8, -0.36, -0.8] {
        let v = RigidState::at_rest(Vec3::new(x, 0.0, 2.0), Rot3::identity());
        status = run(&mut s, status, &v, 5);
    }
    assert_eq!(status.counters.partition_hits, 2);
    assert_eq!(status.counters.transfers, 0);
}

#[test]
fn push_metrics_track_the_platform() {
    let mut s = scenario("push");
    let TaskSpec::Push { platform, .. } = s.task else { panic!() };
    let status = TaskStatus::new(&s.task, 30.0);
    let mut v = s.start;
    let status = run(&mut s, status, &v, 10);
    let TaskDetail::Push(stats) = status.detail else { panic!() };
    assert_eq!(stats.peak_force, 0.0);
    assert_eq!(stats.average_force(), 0.0);
    assert!(status.events.is_empty());

    // tool face 5 mm into the platform, then backed off
    v.position.x += 0.055;
    let status = run(&mut s, status, &v, 5);
    v.position.x -= 0.2;
    let status = run(&mut s, status, &v, 5);
    let kinds: Vec<_> = status.events.iter().map(|e| &e.kind).collect();
    assert!(matches!(kinds[..], [EventKind::ContactMade { .. }, EventKind::ContactBroken { .. }]), "{kinds:?}");
    assert!(status.events[0].tick < status.events[1].tick);

    let TaskDetail::Push(before) = status.detail else { panic!() };
    let mut moved = s.world.clone();
    moved.bodies[platform].pose.position.x += 1.7;
    let status = task_update(&status, &s.task, &moved, &[], 0.002);
    let TaskDetail::Push(stats) = status.detail else { panic!() };
    assert!((stats.displacement - before.displacement - 1.7).abs() < 1e-12);
    assert!(stats.peak_force > 10.0);
}

fn peg_status(offset_y: f64, tip_x: f64, ticks: usize) -> TaskStatus {
    let mut s = scenario("peg");
    // tip sits 0.45 m ahead of the body origin along x
    let v = RigidState::at_rest(Vec3::new(tip_x - 0.45, offset_y, 1.2), Rot3::identity());
    let status = TaskStatus::new(&s.task, 30.0);
    run(&mut s, status, &v, ticks)
}

#[test]
fn centered_peg_past_threshold_is_an_insertion() {
    let status = peg_status(0.0, 1.01, 1);
    assert_eq!(status.counters.insertions, 1);
    let TaskDetail::Peg(stats) = status.detail else { panic!() };
    assert!((stats.depth - 0.02).abs() < 1e-12);
    assert_eq!(stats.peak_lateral_force, 0.0);
}

#[test]
fn offset_peg_hits_the_rim_without_inserting() {
    let status = peg_status(0.006, 1.01, 5);
    assert_eq!(status.counters.insertions, 0);
    let TaskDetail::Peg(stats) = status.detail else { panic!() };
    assert!(!stats.inside);
    assert!(stats.peak_lateral_force > 0.0);
}

#[test]
fn inside_time_accumulates() {
    let status = peg_status(0.0, 1.01, 1250);
    let TaskDetail::Peg(stats) = status.detail else { panic!() };
    assert!((stats.inside_time - 2.5).abs() < 1e-9);
    assert_eq!(status.counters.insertions, 1);
}
