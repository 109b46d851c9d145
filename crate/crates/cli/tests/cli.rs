use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use omav_teleop::coupling::HandleState;
use omav_teleop::log::SessionLog;
use omav_teleop::protocol::{decode_message, encode_message, Frame, Message};
use omav_teleop::session::InputFrame;
use omav_teleop::stats::io::read_trials;
use omav_teleop::stats::{Haptics, TlxResponse};
use omav_teleop::world::GripperCommand;
use omav_teleop::Vec3;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message as WsMessage, WebSocket};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omav-teleop"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_record_then_verify_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("abbt.ndjson");
    let trials = dir.path().join("trials.csv");
    let sim = run(&[
        "simulate", "--scenario", "abbt", "--pilot", "abbt", "--condition", "MR,NoH", "--participant", "p07",
        "--expertise", "E", "--record", path(&log), "--trials", path(&trials),
    ]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    assert!(stdout(&sim).contains("condition MR,NoH"), "{}", stdout(&sim));

    let replay = run(&["replay", path(&log), "--verify"]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    let out = stdout(&replay);
    assert!(out.contains("checkpoints verified 80"), "{out}");
    // same summary line for blocks and checksum
    let tail = |s: &str| s.lines().filter(|l| l.starts_with("blocks") || l.starts_with("final")).collect::<Vec<_>>().join("\n");
    assert_eq!(tail(&out), tail(&stdout(&sim)));

    let rows = read_trials(std::fs::File::open(&trials).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].participant, "p07");
    assert_eq!(rows[0].haptics, Haptics::Off);
    assert!(rows[0].blocks >= 3);
}

#[test]
fn tampered_log_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("push.ndjson");
    let sim = run(&["simulate", "--scenario", "push", "--pilot", "push", "--set", "task.duration=4", "--record", path(&log)]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last_input = lines.iter().rposition(|l| l.contains(r#""type":"input""#)).unwrap();
    lines.remove(last_input);
    std::fs::write(&log, lines.join("\n")).unwrap();

    let replay = run(&["replay", path(&log), "--verify"]);
    assert!(!replay.status.success());
    assert!(stderr(&replay).contains("diverged at tick"), "{}", stderr(&replay));
    // without --verify the replay just runs
    assert!(run(&["replay", path(&log)]).status.success());
}

#[test]
fn bad_arguments_are_reported() {
    let bad_set = run(&["simulate", "--scenario", "abbt", "--set", "task.blocks=-1"]);
    assert!(!bad_set.status.success());
    let bad_key = run(&["simulate", "--scenario", "abbt", "--set", "task.bonus=1"]);
    assert!(!bad_key.status.success());
    assert!(stderr(&bad_key).contains("bonus"), "{}", stderr(&bad_key));
    let bad_condition = run(&["simulate", "--scenario", "abbt", "--condition", "VR,H"]);
    assert!(!bad_condition.status.success());
    let no_analysis = run(&["analyze", "trials.csv"]);
    assert!(!no_analysis.status.success());
    let missing = run(&["simulate", "--scenario", "no/such/file.cfg"]);
    assert!(!missing.status.success());
}

const TRIALS: &str = "\
participant,expertise,display,haptics,duration_s,blocks,energy_j,tlx_md,tlx_pd,tlx_td,tlx_ef,tlx_pe,tlx_fr,w_md,w_pd,w_td,w_ef,w_pe,w_fr
p1,B,SC,H,80,2,30.5,50,20,40,60,30,20,4,1,3,4,2,1
p1,B,SC,NoH,80,1,40.0,55,25,45,65,35,25,4,1,3,4,2,1
p1,B,MR,H,80,4,20.0,40,15,30,50,20,15,4,1,3,4,2,1
p1,B,MR,NoH,80,3,25.0,45,20,35,55,25,20,4,1,3,4,2,1
p2,E,SC,H,80,3,28.0,45,20,35,55,25,15,3,2,3,4,2,1
p2,E,SC,NoH,80,2,33.0,50,25,40,60,30,20,3,2,3,4,2,1
p2,E,MR,H,80,5,18.0,35,15,25,45,15,10,3,2,3,4,2,1
p2,E,MR,NoH,80,4,22.0,40,20,30,50,20,15,3,2,3,4,2,1
p3,B,SC,H,80,1,35.0,60,30,50,70,40,30,4,1,3,4,2,1
p3,B,SC,NoH,80,1,45.0,60,30,50,70,40,30,4,1,3,4,2,1
p3,B,MR,H,80,3,24.0,50,25,40,60,30,25,4,1,3,4,2,1
p3,B,MR,NoH,80,2,27.0,50,25,40,60,30,25,4,1,3,4,2,1
p4,E,SC,H,80,4,26.0,40,20,30,50,20,15,3,2,3,4,2,1
p4,E,SC,NoH,80,3,30.0,45,20,35,55,25,20,3,2,3,4,2,1
p4,E,MR,H,80,6,16.0,30,10,20,40,10,10,3,2,3,4,2,1
p4,E,MR,NoH,80,5,19.0,35,15,25,45,15,10,3,2,3,4,2,1
";

#[test]
fn analyze_prints_tables_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trials.csv");
    std::fs::write(&csv, TRIALS).unwrap();
    for (flag, needle) in [("--taguchi", "Response Table"), ("--anova", "Tukey"), ("--tlx", "adjusted workload")] {
        let out_csv = dir.path().join(format!("{}.csv", &flag[2..]));
        let o = run(&["analyze", flag, path(&csv), "--out", path(&out_csv)]);
        assert!(o.status.success(), "{flag}: {}", stderr(&o));
        assert!(stdout(&o).contains(needle), "{flag}: {}", stdout(&o));
        assert!(std::fs::read_to_string(&out_csv).unwrap().lines().count() > 1);
    }
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
    }
}

fn send(ws: &mut WebSocket<MaybeTlsStream<TcpStream>>, tick: u64, message: Message) {
    ws.send(WsMessage::text(encode_message(&Frame { tick, message }))).unwrap();
}

#[test]
fn serve_runs_a_console_session_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("live.ndjson");
    let trials = dir.path().join("trials.csv");
    let mut child = bin()
        .args([
            "serve", "--scenario", "abbt", "--once", "--condition", "SC,H", "--set", "task.duration=2", "--record",
            path(&log), "--trials", path(&trials), "--tlx-wait", "10",
        ])
        .env("OMAV_TELEOP_LISTEN", "127.0.0.1:0")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let server = Server(child);
    let first = lines.next().unwrap().unwrap();
    let url = first.strip_prefix("listening on ").unwrap().to_string();

    let (mut ws, _) = tungstenite::connect(url.as_str()).unwrap();
    let WsMessage::Text(hello) = ws.read().unwrap() else { panic!() };
    let Message::Hello(hello) = decode_message(hello.as_str()).unwrap().message else { panic!() };
    assert_eq!(hello.scenario, "abbt");
    assert_eq!(hello.bodies.iter().filter(|b| b.name.starts_with("block")).count(), 16);

    let climb = InputFrame {
        handle: HandleState::planar(Vec3::new(0.0, 0.0, 1.0), 0.0),
        gripper: GripperCommand::Hold,
    };
    send(&mut ws, 0, Message::Input(climb));
    let started = Instant::now();
    let (mut states, mut feedback, mut last_tick) = (0, 0, 0);
    let end = loop {
        let WsMessage::Text(body) = ws.read().unwrap() else { continue };
        let frame = decode_message(body.as_str()).unwrap();
        assert!(frame.tick >= last_tick);
        last_tick = frame.tick;
        match frame.message {
            Message::State(_) => states += 1,
            Message::Feedback(_) => feedback += 1,
            Message::End(end) => break end,
            _ => {}
        }
    };
    let wall = started.elapsed();
    assert!(wall >= Duration::from_millis(1500), "paced at the simulation rate: {wall:?}");
    assert_eq!(end.reason, "time_up");
    assert_eq!(last_tick, 1000);
    // 100 Hz over 2 s, give or take frames dropped under load
    assert!(states >= 150 && feedback >= 150, "{states} states, {feedback} feedback");

    let tlx = TlxResponse::new([60.0, 10.0, 40.0, 55.0, 30.0, 20.0], [5, 0, 3, 4, 2, 1]).unwrap();
    send(&mut ws, last_tick, Message::Tlx(tlx));
    let _ = ws.close(None);
    while ws.read().is_ok() {}

    let mut rest = String::new();
    for line in lines.map_while(Result::ok) {
        rest.push_str(&line);
        rest.push('\n');
    }
    drop(server);
    assert!(rest.contains("condition SC,H"), "{rest}");

    let rows = read_trials(std::fs::File::open(&trials).unwrap()).unwrap();
    assert_eq!(rows[0].tlx, Some(tlx));
    let text = std::fs::read_to_string(&log).unwrap();
    let recorded = SessionLog::parse(&text).unwrap();
    assert_eq!(recorded.inputs()[0].1, climb);
    let replay = run(&["replay", path(&log), "--verify"]);
    assert!(replay.status.success(), "{}", stderr(&replay));
}
