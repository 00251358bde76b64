//! Live session over WebSockets. One coordinator task owns the session and
//! steps it on a fixed period; connection tasks only exchange messages with
//! it through channels, so a slow or broken client never stalls the clock.

use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{self, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

use duet_core::session::{Body, LiveSession, Message, Performance, PROTOCOL_VERSION};

/// Outbound lines buffered per client before it starts skipping.
const FANOUT_CAPACITY: usize = 8192;

#[derive(Debug)]
enum Inbound {
    Joined,
    Left,
    Note(Message),
    Violation(String),
}

struct Shared {
    inbound: mpsc::UnboundedSender<Inbound>,
    outbound: broadcast::Sender<Arc<str>>,
    stopped: watch::Receiver<bool>,
    clock: Instant,
}

impl Shared {
    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }
}

#[derive(Debug)]
pub struct ServerSummary {
    pub performance: Performance,
    pub cycle_times: Vec<f64>,
    pub cycle_p95: Option<f64>,
    pub clients_served: usize,
    pub duration: f64,
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route(
            "/",
            get(|| async { "duet session server: open a WebSocket at /ws\n" }),
        )
        .route("/ws", get(upgrade))
        .with_state(shared)
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let mut events = shared.outbound.subscribe();
    if shared.inbound.send(Inbound::Joined).is_err() {
        return;
    }
    let mut stopped = shared.stopped.clone();
    let (mut sink, mut stream) = socket.split();
    let hello = Message::new(
        shared.now(),
        Body::Hello {
            role: "server".into(),
            version: PROTOCOL_VERSION,
        },
    );
    if sink
        .send(ws::Message::Text(hello.to_line().into()))
        .await
        .is_ok()
    {
        loop {
            tokio::select! {
                _ = stopped.changed() => break,
                incoming = stream.next() => {
                    let text = match incoming {
                        Some(Ok(ws::Message::Text(t))) => t,
                        Some(Ok(ws::Message::Ping(_) | ws::Message::Pong(_))) => continue,
                        Some(Ok(ws::Message::Binary(_))) => {
                            reject(&mut sink, &shared, "binary frames are not part of the protocol".into()).await;
                            break;
                        }
                        Some(Ok(ws::Message::Close(_))) | Some(Err(_)) | None => break,
                    };
                    match Message::from_client(text.as_str()) {
                        Ok(m) => {
                            if shared.inbound.send(Inbound::Note(m)).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            reject(&mut sink, &shared, e.to_string()).await;
                            break;
                        }
                    }
                }
                event = events.recv() => match event {
                    Ok(line) => {
                        if sink.send(ws::Message::Text(line.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            }
        }
    }
    let _ = sink.send(ws::Message::Close(None)).await;
    let _ = shared.inbound.send(Inbound::Left);
}

/// Tell the offending client why, then let the caller drop the connection.
async fn reject<S>(sink: &mut S, shared: &Shared, detail: String)
where
    S: SinkExt<ws::Message> + Unpin,
{
    let fault = Message::new(
        shared.now(),
        Body::Fault {
            kind: duet_core::session::FaultKind::Protocol,
            detail: detail.clone(),
        },
    );
    let _ = sink.send(ws::Message::Text(fault.to_line().into())).await;
    let _ = shared.inbound.send(Inbound::Violation(detail));
}

async fn coordinate<F>(
    mut session: LiveSession,
    mut inbound: mpsc::UnboundedReceiver<Inbound>,
    shared: Arc<Shared>,
    period: f64,
    shutdown: F,
) -> (LiveSession, usize)
where
    F: Future<Output = ()>,
{
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(period));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    tokio::pin!(shutdown);
    let mut served = 0;
    loop {
        tokio::select! {
            biased;
            _ = &mut shutdown => break,
            Some(event) = inbound.recv() => match event {
                Inbound::Joined => {
                    served += 1;
                    session.set_clients(session.clients() + 1);
                }
                Inbound::Left => session.set_clients(session.clients().saturating_sub(1)),
                Inbound::Note(mut m) => {
                    m.t = m.t.min(shared.now());
                    session.handle(&m);
                }
                Inbound::Violation(detail) => session.client_fault(detail),
            },
            _ = ticker.tick() => {
                for m in session.tick(shared.now()) {
                    let _ = shared.outbound.send(m.to_line().into());
                }
            }
        }
    }
    (session, served)
}

/// Serve `session` on `listener` until `shutdown` resolves.
pub async fn run_server<F>(
    listener: TcpListener,
    session: LiveSession,
    period: f64,
    shutdown: F,
) -> std::io::Result<ServerSummary>
where
    F: Future<Output = ()> + Send,
{
    let (in_tx, in_rx) = mpsc::unbounded_channel();
    let (out_tx, _) = broadcast::channel(FANOUT_CAPACITY);
    let (stopped_tx, stopped_rx) = watch::channel(false);
    let shared = Arc::new(Shared {
        inbound: in_tx,
        outbound: out_tx,
        stopped: stopped_rx,
        clock: Instant::now(),
    });
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let app = router(shared.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    let (session, clients_served) =
        coordinate(session, in_rx, shared.clone(), period, shutdown).await;
    let duration = shared.now();
    let _ = stopped_tx.send(true);
    let _ = stop_tx.send(());
    drop(shared);
    match tokio::time::timeout(Duration::from_secs(2), server).await {
        Ok(Ok(r)) => r?,
        Ok(Err(join)) => return Err(std::io::Error::other(join)),
        Err(_) => {}
    }
    let cycle_times = session.cycle_times().to_vec();
    let cycle_p95 = session.cycle_p95();
    Ok(ServerSummary {
        performance: session.finish(duration),
        cycle_times,
        cycle_p95,
        clients_served,
        duration,
    })
}
