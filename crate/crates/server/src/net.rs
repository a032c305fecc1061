//! Transports. Raw TCP carries newline-delimited JSON; the HTTP listener
//! serves `/status/<session>` and the same protocol as WebSocket text frames
//! on `/ws`, one message per frame.

use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use pomoshare_core::wire::{decode, encode, Envelope, ErrorReply, Message, WireError};
use pomoshare_core::SessionId;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, Notify};

use crate::hub::{ConnId, Hub, Outbox, Request};

/// Longest accepted line; anything longer ends the connection.
const MAX_LINE: usize = 1 << 20;

pub async fn serve_tcp(hub: Arc<Hub>, listener: TcpListener) -> std::io::Result<()> {
    loop {
        let (socket, peer) = listener.accept().await?;
        tracing::debug!(%peer, "tcp client connected");
        tokio::spawn(handle_tcp(hub.clone(), socket));
    }
}

async fn handle_tcp(hub: Arc<Hub>, socket: TcpStream) {
    let _ = socket.set_nodelay(true);
    let (read, mut write) = socket.into_split();
    let (in_tx, in_rx) = mpsc::channel::<String>(64);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(hub.config().client_queue);
    let reader = tokio::spawn(async move {
        let mut read = BufReader::new(read);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match (&mut read).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(_) if buf.len() > MAX_LINE => break,
                Ok(_) => {
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    if in_tx.send(line).await.is_err() {
                        break;
                    }
                }
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(mut line) = out_rx.recv().await {
            line.push('\n');
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    drive(hub, in_rx, out_tx).await;
    reader.abort();
    let _ = writer.await;
}

pub fn http_router(hub: Arc<Hub>) -> Router {
    Router::new().route("/status/{session}", get(status)).route("/ws", get(ws_upgrade)).with_state(hub)
}

pub async fn serve_http(hub: Arc<Hub>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, http_router(hub)).await
}

async fn status(State(hub): State<Arc<Hub>>, Path(session): Path<String>) -> Response {
    match hub.status(&SessionId::from(session.as_str())).await {
        Some(board) => Json(board).into_response(),
        None => {
            let body = ErrorReply::new("UnknownSession", format!("no session `{session}`"), None);
            (StatusCode::NOT_FOUND, Json(body)).into_response()
        }
    }
}

async fn ws_upgrade(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.max_message_size(MAX_LINE).on_upgrade(move |socket| handle_ws(hub, socket))
}

async fn handle_ws(hub: Arc<Hub>, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel::<String>(64);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(hub.config().client_queue);
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let text = match msg {
                WsMessage::Text(t) => t.to_string(),
                WsMessage::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                WsMessage::Close(_) => break,
                WsMessage::Ping(_) | WsMessage::Pong(_) => continue,
            };
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                if in_tx.send(line.to_owned()).await.is_err() {
                    return;
                }
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(line) = out_rx.recv().await {
            if sink.send(WsMessage::Text(line.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    drive(hub, in_rx, out_tx).await;
    reader.abort();
    let _ = writer.await;
}

/// Runs one connection's protocol: hello first, then commands, until the
/// peer goes away or the server drops it.
async fn drive(hub: Arc<Hub>, mut incoming: mpsc::Receiver<String>, out: mpsc::Sender<String>) {
    let conn: ConnId = hub.connection_id();
    let kick = Arc::new(Notify::new());
    let mut session: Option<mpsc::Sender<Request>> = None;
    let reply = |message: Message| encode(&Envelope::from_server(0, hub.now(), message));
    loop {
        let line = tokio::select! {
            line = incoming.recv() => match line {
                Some(line) => line,
                None => break,
            },
            () = kick.notified() => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let envelope = match decode(&line) {
            Ok(e) => e,
            Err(e) => {
                let fatal = matches!(e, WireError::UnsupportedVersion(_));
                let _ = out.send(reply(Message::Error(ErrorReply::new(e.code(), e.to_string(), None)))).await;
                if fatal {
                    break;
                }
                continue;
            }
        };
        match envelope.message {
            Message::Hello(hello) => {
                if let Some(old) = session.take() {
                    let _ = old.send(Request::Detach { conn }).await;
                }
                let tx = match hub.session(Some(&hello), &hello.session) {
                    Ok(tx) => tx,
                    Err(e) => {
                        let _ = out.send(reply(Message::Error(e))).await;
                        continue;
                    }
                };
                let (done, wait) = oneshot::channel();
                let outbox = Outbox { tx: out.clone(), kick: kick.clone() };
                if tx.send(Request::Attach { conn, hello, outbox, reply: done }).await.is_err() {
                    break;
                }
                match wait.await {
                    Ok(Ok(())) => session = Some(tx),
                    Ok(Err(e)) => {
                        let _ = out.send(reply(Message::Error(e))).await;
                    }
                    Err(_) => break,
                }
            }
            Message::Command(command) => match &session {
                Some(tx) => {
                    if tx.send(Request::Command { conn, command }).await.is_err() {
                        break;
                    }
                }
                None => {
                    let e = ErrorReply::new("HelloRequired", "send hello before commands", Some(command.id));
                    let _ = out.send(reply(Message::Error(e))).await;
                }
            },
            other => {
                let e = ErrorReply::new(
                    "MalformedMessage",
                    format!("clients may not send `{}` messages", other.kind()),
                    None,
                );
                let _ = out.send(reply(Message::Error(e))).await;
            }
        }
    }
    if let Some(tx) = session {
        let _ = tx.send(Request::Detach { conn }).await;
    }
}
