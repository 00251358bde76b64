use std::net::SocketAddr;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message as Frame;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use duet_cli::server::{run_server, ServerSummary};
use duet_core::session::{Body, DecisionSource, FaultKind, LiveSession, Message, StrokeBank};
use duet_core::{ChordLabel, SessionConfig};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

/// One-second bars.
fn config() -> SessionConfig {
    SessionConfig {
        tempo: 240.0,
        ..SessionConfig::default()
    }
}

async fn start() -> (
    SocketAddr,
    oneshot::Sender<()>,
    tokio::task::JoinHandle<ServerSummary>,
) {
    let cfg = config();
    let bank = StrokeBank::tune(&cfg).unwrap();
    let source = DecisionSource::Chart(vec![
        ChordLabel::C,
        ChordLabel::F,
        ChordLabel::G,
        ChordLabel::C,
    ]);
    let session = LiveSession::new(cfg.clone(), source, bank);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        run_server(listener, session, cfg.mpc.dt, async {
            let _ = stopped.await;
        })
        .await
        .unwrap()
    });
    (addr, stop, server)
}

/// Connect and wait for the server hello; returns its server time.
async fn join(addr: SocketAddr) -> (Socket, f64, Instant) {
    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let frame = ws.next().await.unwrap().unwrap();
    let hello = Message::from_line(frame.to_text().unwrap()).unwrap();
    assert!(matches!(hello.body, Body::Hello { .. }));
    (ws, hello.t, Instant::now())
}

async fn drain(mut ws: Socket) -> Vec<String> {
    let mut lines = Vec::new();
    while let Some(Ok(frame)) = ws.next().await {
        match frame {
            Frame::Text(t) => lines.push(t.to_string()),
            Frame::Close(_) => break,
            _ => {}
        }
    }
    lines
}

fn note(t: f64, body: Body) -> Frame {
    Frame::Text(Message::new(t, body).to_line().into())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn two_clients_receive_identical_streams() {
    let (addr, stop, server) = start().await;
    let (mut a, t0, joined) = join(addr).await;
    let (b, _, _) = join(addr).await;
    let reader = tokio::spawn(drain(b));

    for (i, pitch) in [72u8, 76, 79, 76, 72, 76, 79, 84].into_iter().enumerate() {
        let at = 0.25 * i as f64;
        tokio::time::sleep_until((joined + Duration::from_secs_f64(at)).into()).await;
        let t = t0 + joined.elapsed().as_secs_f64();
        a.send(note(
            t,
            Body::NoteOn {
                pitch,
                velocity: 80,
            },
        ))
        .await
        .unwrap();
        tokio::time::sleep(Duration::from_millis(150)).await;
        let t = t0 + joined.elapsed().as_secs_f64();
        a.send(note(t, Body::NoteOff { pitch })).await.unwrap();
    }
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let reader_a = tokio::spawn(drain(a));
    stop.send(()).unwrap();
    let summary = server.await.unwrap();
    let from_a = reader_a.await.unwrap();
    let from_b = reader.await.unwrap();

    assert_eq!(summary.clients_served, 2);
    let kinds: Vec<String> = from_b
        .iter()
        .map(|l| Message::from_line(l).unwrap().kind().to_string())
        .collect();
    assert!(kinds.iter().any(|k| k == "bar_closed"), "{kinds:?}");
    assert!(kinds.iter().any(|k| k == "chord"), "{kinds:?}");
    assert!(kinds.iter().any(|k| k == "strike"), "{kinds:?}");
    // Client A stopped reading for the whole performance; B read as it went.
    assert_eq!(from_a, from_b);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn protocol_violation_closes_only_that_client() {
    let (addr, stop, server) = start().await;
    let (mut bad, t0, joined) = join(addr).await;
    let (good, _, _) = join(addr).await;
    let reader = tokio::spawn(drain(good));

    let t = t0 + joined.elapsed().as_secs_f64();
    let forged = format!(
        r#"{{"type":"chord","t":{t},"payload":{{"p":1,"label":"C","ck":1,"strike_times":[1.0],"velocities":[96]}}}}"#
    );
    bad.send(Frame::Text(forged.into())).await.unwrap();
    let mut saw_fault = false;
    let mut closed = false;
    while let Some(frame) = bad.next().await {
        match frame {
            Ok(Frame::Text(t)) => {
                if let Body::Fault { kind, .. } = Message::from_line(&t).unwrap().body {
                    saw_fault |= kind == FaultKind::Protocol;
                }
            }
            Ok(Frame::Close(_)) | Err(_) => {
                closed = true;
                break;
            }
            _ => {}
        }
    }
    assert!(saw_fault && closed);

    // The session keeps running for the remaining client through a bar close.
    tokio::time::sleep(Duration::from_millis(1200)).await;
    stop.send(()).unwrap();
    let summary = server.await.unwrap();
    let lines = reader.await.unwrap();
    let messages: Vec<Message> = lines
        .iter()
        .map(|l| Message::from_line(l).unwrap())
        .collect();
    assert!(messages.iter().any(|m| matches!(
        m.body,
        Body::Fault {
            kind: FaultKind::Protocol,
            ..
        }
    )));
    assert!(messages
        .iter()
        .any(|m| matches!(m.body, Body::BarClosed { p: 0, .. })));
    assert!(summary
        .performance
        .faults
        .iter()
        .any(|f| f.kind == FaultKind::Protocol));
    assert!(summary.duration > 1.0);
}
