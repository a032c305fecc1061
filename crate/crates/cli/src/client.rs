//! A blocking protocol client: one connection, one hello, then commands.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use pomoshare_core::wire::{decode, encode, Command, CommandBody, Envelope, Hello, Message, Mirror, MirrorUpdate};
use pomoshare_core::Timestamp;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const REPLY_TIMEOUT: Duration = Duration::from_secs(15);

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach {addr}: {reason}")]
    Connect { addr: String, reason: String },
    #[error("connection lost: {0}")]
    Lost(String),
    #[error("server sent something unreadable: {0}")]
    Protocol(String),
}

/// One received line, decoded, with its raw text kept for `--json`.
#[derive(Clone, Debug)]
pub struct Received {
    pub envelope: Envelope,
    pub line: String,
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
    pub mirror: Mirror,
}

pub fn local_now() -> Timestamp {
    let ms = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_millis();
    Timestamp(ms as u64)
}

impl Client {
    pub fn connect(addr: &str) -> Result<Client, ClientError> {
        let fail = |reason: String| ClientError::Connect { addr: addr.to_owned(), reason };
        let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| fail(e.to_string()))?.collect();
        let mut last = "no address".to_owned();
        for a in addrs {
            match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(REPLY_TIMEOUT)).map_err(|e| fail(e.to_string()))?;
                    let writer = stream.try_clone().map_err(|e| fail(e.to_string()))?;
                    return Ok(Client { reader: BufReader::new(stream), writer, seq: 0, mirror: Mirror::default() });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(fail(last))
    }

    pub fn send(&mut self, message: Message) -> Result<(), ClientError> {
        self.seq += 1;
        let mut line = encode(&Envelope::from_client(self.seq, message));
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(|e| ClientError::Lost(e.to_string()))
    }

    pub fn recv(&mut self) -> Result<Received, ClientError> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => return Err(ClientError::Lost("server closed the connection".into())),
            Ok(_) => {}
            Err(e) => return Err(ClientError::Lost(e.to_string())),
        }
        let line = line.trim_end().to_owned();
        let envelope = decode(&line).map_err(|e| ClientError::Protocol(e.to_string()))?;
        if let MirrorUpdate::NeedSnapshot(_) = self.mirror.receive(&envelope, local_now()) {
            // a gap: ask again and let the snapshot replace the copy
            self.mirror.state = None;
        }
        Ok(Received { envelope, line })
    }

    fn recv_until(&mut self, mut f: impl FnMut(&Envelope) -> bool) -> Result<Received, ClientError> {
        loop {
            let r = self.recv()?;
            if f(&r.envelope) {
                return Ok(r);
            }
        }
    }

    /// Sends hello; returns the snapshot or the error reply.
    pub fn hello(&mut self, hello: Hello) -> Result<Received, ClientError> {
        self.send(Message::Hello(hello))?;
        self.recv_until(|e| matches!(e.message, Message::Snapshot(_) | Message::Error(_)))
    }

    /// The first presence board after the snapshot.
    pub fn presence(&mut self) -> Result<Received, ClientError> {
        self.recv_until(|e| matches!(e.message, Message::Presence(_)))
    }

    pub fn command(&mut self, body: CommandBody) -> Result<Received, ClientError> {
        let id = command_id();
        self.send(Message::Command(Command { id: id.clone(), body }))?;
        self.recv_until(|e| match &e.message {
            Message::Ack(a) => a.command_id == id,
            Message::Report(r) => r.command_id == id,
            Message::Error(r) => r.command_id.as_deref() == Some(id.as_str()),
            _ => false,
        })
    }

    /// Hands the read side to a background thread that forwards every
    /// message; used by `status --watch`.
    pub fn into_stream(self) -> std::sync::mpsc::Receiver<Result<Received, ClientError>> {
        let (tx, rx) = std::sync::mpsc::channel();
        let Client { mut reader, writer, .. } = self;
        let _ = reader.get_ref().set_read_timeout(None);
        std::thread::spawn(move || {
            let _keep = writer;
            loop {
                let mut line = String::new();
                let r = match reader.read_line(&mut line) {
                    Ok(0) => Err(ClientError::Lost("server closed the connection".into())),
                    Ok(_) => decode(line.trim_end())
                        .map(|envelope| Received { envelope, line: line.trim_end().to_owned() })
                        .map_err(|e| ClientError::Protocol(e.to_string())),
                    Err(e) => Err(ClientError::Lost(e.to_string())),
                };
                let stop = r.is_err();
                if tx.send(r).is_err() || stop {
                    break;
                }
            }
        });
        rx
    }
}

fn command_id() -> String {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_nanos();
    format!("cli-{}-{nanos}", std::process::id())
}
