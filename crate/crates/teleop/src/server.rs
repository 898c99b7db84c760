//! WebSocket front end.
//!
//! One task owns the [`Session`] and ticks it at the control rate. Each
//! connection runs a reader and a writer task and talks to the session task
//! only through channels: commands in, replies and frames out. Replies and
//! frames share one queue per client, so a client sees them in the order
//! the session produced them.

use std::collections::HashMap;
use std::future::Future;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

use crate::error::TeleopError;
use crate::protocol::{decode_command, peek_seq, Envelope, ServerMessage};
use crate::session::{ClientId, Session};

/// Messages waiting for a client's writer. When it is full frames are
/// dropped for that client; a reply that does not fit disconnects it.
const CLIENT_QUEUE: usize = 64;
const INBOUND_QUEUE: usize = 256;

enum Inbound {
    Connect { id: ClientId, out: mpsc::Sender<Outbound> },
    Disconnect { id: ClientId },
    Command { id: ClientId, env: Envelope },
}

enum Outbound {
    Text(String),
    Close,
}

/// Accept clients on `listener` and run the session until `shutdown`
/// resolves.
///
/// Ticks are paced by the wall clock. A late tick is not made up: when the
/// host stalls, simulated time stalls with it.
pub async fn serve<F>(listener: TcpListener, mut session: Session, shutdown: F) -> Result<(), TeleopError>
where
    F: Future<Output = ()>,
{
    let (inbound_tx, mut inbound) = mpsc::channel(INBOUND_QUEUE);
    let acceptor = tokio::spawn(accept_loop(listener, inbound_tx));

    let mut clients: HashMap<ClientId, mpsc::Sender<Outbound>> = HashMap::new();
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(session.control_period()));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    tokio::pin!(shutdown);

    let result = loop {
        tokio::select! {
            biased;
            _ = &mut shutdown => break Ok(()),
            _ = ticker.tick() => match session.tick() {
                Ok(Some(frame)) => {
                    let text = ServerMessage::Frame(frame).to_json();
                    for out in clients.values() {
                        let _ = out.try_send(Outbound::Text(text.clone()));
                    }
                }
                Ok(None) => {}
                Err(e) => break Err(e.into()),
            },
            Some(msg) = inbound.recv() => match msg {
                Inbound::Connect { id, out } => {
                    session.connect(id);
                    clients.insert(id, out);
                }
                Inbound::Disconnect { id } => {
                    session.disconnect(id);
                    clients.remove(&id);
                }
                Inbound::Command { id, env } => {
                    let reply = match session.handle(id, &env.command) {
                        Ok(tick) => ServerMessage::Ack { seq: env.seq, tick },
                        Err(r) => ServerMessage::Reject { seq: env.seq, reason: r.to_string() },
                    };
                    let full = clients.get(&id).is_some_and(|out| out.try_send(Outbound::Text(reply.to_json())).is_err());
                    if full {
                        if let Some(out) = clients.remove(&id) {
                            let _ = out.try_send(Outbound::Close);
                        }
                        session.disconnect(id);
                    }
                }
            },
        }
    };
    acceptor.abort();
    result
}

async fn accept_loop(listener: TcpListener, inbound: mpsc::Sender<Inbound>) {
    let mut next_id: ClientId = 0;
    loop {
        let Ok((stream, _)) = listener.accept().await else {
            continue;
        };
        next_id += 1;
        tokio::spawn(connection(next_id, stream, inbound.clone()));
    }
}

async fn connection(id: ClientId, stream: TcpStream, inbound: mpsc::Sender<Inbound>) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = mpsc::channel(CLIENT_QUEUE);
    if inbound.send(Inbound::Connect { id, out: out_tx.clone() }).await.is_err() {
        return;
    }

    let writer = tokio::spawn(async move {
        while let Some(Outbound::Text(text)) = out_rx.recv().await {
            if sink.send(Message::text(text)).await.is_err() {
                return;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
        let _ = sink.close().await;
    });

    while let Some(msg) = source.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                violation(&out_tx, None, "binary messages are not supported".into()).await;
                break;
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        match decode_command(text.as_str()) {
            Ok(env) => {
                if inbound.send(Inbound::Command { id, env }).await.is_err() {
                    break;
                }
            }
            Err(e) => {
                violation(&out_tx, peek_seq(text.as_str()), e.to_string()).await;
                break;
            }
        }
    }
    let _ = inbound.send(Inbound::Disconnect { id }).await;
    drop(out_tx);
    let _ = writer.await;
}

async fn violation(out: &mpsc::Sender<Outbound>, seq: Option<u64>, reason: String) {
    let _ = out.send(Outbound::Text(ServerMessage::Error { seq, reason }.to_json())).await;
    let _ = out.send(Outbound::Close).await;
}
