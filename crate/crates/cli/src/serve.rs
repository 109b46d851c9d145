//! One simulated session per websocket connection.
//!
//! The session loop owns the state and is paced at the simulation rate by
//! the wall clock; the clock only decides which tick an input lands on.
//! Inputs reach the loop through a latest-wins mailbox. Outgoing state and
//! feedback frames are dropped when the socket falls behind; events and
//! the end summary are not.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use futures_util::{SinkExt, StreamExt};
use omav_teleop::protocol::{encode_message, EndSummary, Frame, Hello, Message, StateFrame, TickGuard};
use omav_teleop::scenario::ScenarioConfig;
use omav_teleop::session::{InputStage, LiveInput, Session};
use omav_teleop::stats::io::TrialRow;
use omav_teleop::stats::{TlxResponse, OMAV_MASS_KG};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::time::{interval, timeout, MissedTickBehavior};
use tokio_tungstenite::tungstenite::Message as WsMessage;

use crate::{append_trial, summary, write_log, ScenarioArgs};

pub struct ServeOptions {
    pub scenario: ScenarioArgs,
    pub listen: String,
    pub record: Option<PathBuf>,
    pub once: bool,
    pub tlx_wait: f64,
}

pub async fn serve(opts: ServeOptions) -> Result<()> {
    let config = opts.scenario.config()?;
    let listener = TcpListener::bind(&opts.listen).await.with_context(|| format!("binding {}", opts.listen))?;
    println!("listening on ws://{}", listener.local_addr()?);
    let opts = Arc::new(opts);
    // trial CSV appends from parallel sessions must not interleave
    let csv_lock = Arc::new(tokio::sync::Mutex::new(()));
    for n in 0u64.. {
        let (stream, peer) = listener.accept().await?;
        let job = run_connection(stream, config.clone(), opts.clone(), n, csv_lock.clone());
        if opts.once {
            return job.await.with_context(|| format!("session with {peer}"));
        }
        tokio::spawn(async move {
            if let Err(e) = job.await {
                eprintln!("session with {peer}: {e:#}");
            }
        });
    }
    Ok(())
}

fn record_path(base: &Path, n: u64) -> PathBuf {
    if n == 0 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map_or("session".into(), |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{n}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{n}"),
    };
    base.with_file_name(name)
}

fn text(tick: u64, message: Message) -> WsMessage {
    WsMessage::text(encode_message(&Frame { tick, message }))
}

#[derive(Default)]
struct Inbox {
    tlx: Option<TlxResponse>,
    ended: bool,
}

async fn run_connection(
    stream: TcpStream,
    config: ScenarioConfig,
    opts: Arc<ServeOptions>,
    n: u64,
    csv_lock: Arc<tokio::sync::Mutex<()>>,
) -> Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();

    let scenario = config.build()?;
    let condition = config.condition;
    let mut session = Session::with_condition(scenario, condition, &opts.scenario.participant())?;
    let dt = session.dt();
    let s = config.session;

    let (out_tx, mut out_rx) = mpsc::channel::<WsMessage>(1024);
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if sink.send(msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let live = LiveInput::new();
    let inbox = Arc::new(Mutex::new(Inbox::default()));
    let (closed_tx, mut closed_rx) = watch::channel(false);
    let reader = {
        let live = live.clone();
        let inbox = inbox.clone();
        tokio::spawn(async move {
            let mut guard = TickGuard::default();
            while let Some(Ok(msg)) = source.next().await {
                let WsMessage::Text(body) = msg else {
                    if msg.is_close() {
                        break;
                    }
                    continue;
                };
                match guard.decode(body.as_str()) {
                    Ok(Frame { message: Message::Input(input), .. }) => live.push(input),
                    Ok(Frame { message: Message::Tlx(tlx), .. }) => inbox.lock().expect("inbox").tlx = Some(tlx),
                    Ok(Frame { message: Message::End(_), .. }) => inbox.lock().expect("inbox").ended = true,
                    Ok(frame) => eprintln!("ignoring {} frame from console", frame.message.kind()),
                    Err(e) => eprintln!("protocol error: {e}"),
                }
            }
            let _ = closed_tx.send(true);
        })
    };

    out_tx.send(text(0, Message::Hello(Hello::for_session(&session)))).await?;
    let mut stage = InputStage::new(s.delay_ticks, Some((s.input_timeout / dt).round() as u64));
    let mut clock = interval(Duration::from_secs_f64(dt));
    clock.set_missed_tick_behavior(MissedTickBehavior::Burst);
    while !session.finished() {
        if inbox.lock().expect("inbox").ended || *closed_rx.borrow() {
            break;
        }
        clock.tick().await;
        let applied = stage.process(session.state.tick, live.take());
        let out = session.step(applied)?;
        for event in out.events {
            out_tx.send(text(out.tick, Message::Event(event))).await?;
        }
        if let Some(feedback) = out.feedback {
            let _ = out_tx.try_send(text(out.tick, Message::Feedback(feedback)));
            let _ = out_tx.try_send(text(out.tick, Message::State(Box::new(StateFrame::for_session(&session)))));
        }
    }

    let tick = session.state.tick;
    let outcome = session.finish();
    let row = TrialRow::from_record(&outcome.record, OMAV_MASS_KG);
    let end = EndSummary {
        reason: if outcome.state.task.terminal { "time_up" } else { "client" }.into(),
        blocks: row.blocks,
        energy: row.energy,
        checksum: Some(format!("{:016x}", outcome.final_checksum)),
    };
    out_tx.send(text(tick, Message::End(end))).await?;

    // the questionnaire follows the trial
    let wait = async {
        loop {
            if inbox.lock().expect("inbox").tlx.is_some() || *closed_rx.borrow() {
                break;
            }
            tokio::select! {
                _ = closed_rx.changed() => {}
                _ = tokio::time::sleep(Duration::from_millis(20)) => {}
            }
        }
    };
    let _ = timeout(Duration::from_secs_f64(opts.tlx_wait), wait).await;
    let mut record = outcome.record.clone();
    record.tlx = inbox.lock().expect("inbox").tlx;
    drop(out_tx);
    let _ = writer.await;
    reader.abort();

    if let Some(base) = &opts.record {
        write_log(&record_path(base, n), &outcome.log)?;
    }
    if let Some(path) = &opts.scenario.trials {
        let _held = csv_lock.lock().await;
        append_trial(path, TrialRow::from_record(&record, OMAV_MASS_KG))?;
    }
    println!("{}", summary(&outcome, condition));
    Ok(())
}
