#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use chrono::{NaiveDate, TimeZone, Utc};
use pomoshare_core::reports::DayBoundary;
use pomoshare_core::wire::{
    decode, encode, Command, CommandBody, CreateOptions, Envelope, Hello, Message, Mirror, MirrorUpdate,
};
use pomoshare_core::{Member, SessionState, Timestamp};
use pomoshare_server::{start, ManualClock, Running, ServerConfig};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

pub const WAIT: Duration = Duration::from_secs(3);

/// 2026-03-02 08:00 UTC, a Monday morning.
pub fn morning() -> Timestamp {
    let t = Utc.with_ymd_and_hms(2026, 3, 2, 8, 0, 0).unwrap();
    Timestamp(t.timestamp_millis() as u64)
}

pub fn monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, 2).unwrap()
}

pub struct Harness {
    pub server: Running,
    pub clock: ManualClock,
    pub dir: tempfile::TempDir,
}

pub fn config(dir: &std::path::Path) -> ServerConfig {
    let mut c = ServerConfig::new(dir);
    c.day = DayBoundary::UTC;
    c
}

impl Harness {
    pub async fn new() -> Harness {
        Harness::with(|_| {}).await
    }

    pub async fn with(tweak: impl FnOnce(&mut ServerConfig)) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(morning());
        let mut c = config(dir.path());
        tweak(&mut c);
        let server = start(c, Arc::new(clock.clone()), localhost(), localhost()).await.unwrap();
        Harness { server, clock, dir }
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.tcp_addr
    }

    pub async fn client(&self) -> Client {
        Client::connect(self.addr()).await
    }

    pub async fn state(&self, session: &str) -> SessionState {
        self.server.hub.inspect(&session.into()).await.unwrap()
    }
}

pub fn localhost() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub struct Client {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
    pub mirror: Mirror,
    pub seen: Vec<Envelope>,
    /// Every event envelope in arrival order.
    pub events: Vec<Envelope>,
    next_id: u64,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Client {
        let (read, write) = TcpStream::connect(addr).await.unwrap().into_split();
        Client {
            lines: BufReader::new(read).lines(),
            write,
            mirror: Mirror::default(),
            seen: Vec::new(),
            events: Vec::new(),
            next_id: 0,
        }
    }

    pub async fn send_raw(&mut self, line: &str) {
        self.write.write_all(line.as_bytes()).await.unwrap();
        self.write.write_all(b"\n").await.unwrap();
    }

    pub async fn send(&mut self, message: Message) {
        self.next_id += 1;
        let line = encode(&Envelope::from_client(self.next_id, message));
        self.send_raw(&line).await;
    }

    /// Next message, or `None` once the server closes the connection.
    pub async fn try_recv(&mut self) -> Option<Envelope> {
        let line = tokio::time::timeout(WAIT, self.lines.next_line()).await.expect("server went quiet").ok()??;
        let env = decode(&line).unwrap_or_else(|e| panic!("bad line from server: {e}: {line}"));
        let local = env.server_time.unwrap_or_default();
        if matches!(env.message, Message::Event(_)) {
            self.events.push(env.clone());
        }
        if let MirrorUpdate::NeedSnapshot(e) = self.mirror.receive(&env, local) {
            panic!("mirror lost sync: {e:?}");
        }
        self.seen.push(env.clone());
        Some(env)
    }

    pub async fn recv(&mut self) -> Envelope {
        self.try_recv().await.expect("connection closed")
    }

    pub async fn recv_until(&mut self, mut f: impl FnMut(&Envelope) -> bool) -> Envelope {
        loop {
            let env = self.recv().await;
            if f(&env) {
                return env;
            }
        }
    }

    pub async fn hello_as(&mut self, session: &str, member: Option<Member>, create: bool) -> Envelope {
        let hello = Hello { session: session.into(), token: None, member, create: create.then(CreateOptions::default) };
        self.hello(hello).await
    }

    /// Sends hello and returns the snapshot or error reply.
    pub async fn hello(&mut self, hello: Hello) -> Envelope {
        self.send(Message::Hello(hello)).await;
        self.recv_until(|e| matches!(e.message, Message::Snapshot(_) | Message::Error(_))).await
    }

    /// Sends a command and waits for the reply addressed to it.
    pub async fn command(&mut self, body: CommandBody) -> Envelope {
        let id = format!("cmd-{}-{}", self.next_id + 1, std::process::id());
        self.command_with_id(&id, body).await
    }

    pub async fn command_with_id(&mut self, id: &str, body: CommandBody) -> Envelope {
        self.send(Message::Command(Command { id: id.into(), body })).await;
        self.recv_until(|e| match &e.message {
            Message::Ack(a) => a.command_id == id,
            Message::Report(r) => r.command_id == id,
            Message::Error(r) => r.command_id.as_deref() == Some(id),
            _ => false,
        })
        .await
    }

    pub fn last_seq(&self) -> u64 {
        self.mirror.state.as_ref().map_or(0, SessionState::last_seq)
    }

    /// Reads until the mirror has applied `seq`.
    pub async fn sync_to(&mut self, seq: u64) {
        while self.last_seq() < seq {
            self.recv().await;
        }
    }

    /// Sequence number of the first snapshot this client received.
    pub fn snapshot_seq(&self) -> u64 {
        self.seen.iter().find(|e| matches!(e.message, Message::Snapshot(_))).map_or(0, |e| e.seq)
    }

    pub fn state(&self) -> &SessionState {
        self.mirror.state.as_ref().expect("no snapshot yet")
    }
}

pub fn expect_ack(env: &Envelope) {
    assert!(matches!(env.message, Message::Ack(_)), "expected ack, got {:?}", env.message);
}

pub fn expect_error(env: &Envelope, code: &str) -> String {
    match &env.message {
        Message::Error(e) => {
            assert_eq!(e.code, code, "{}", e.reason);
            e.reason.clone()
        }
        other => panic!("expected error {code}, got {other:?}"),
    }
}
