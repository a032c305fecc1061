//! Sessions and their serializers. Every session runs as one task that owns
//! its state; connections talk to it over a channel, so commands for a
//! session are applied one at a time in arrival order.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use pomoshare_core::archive::ArchiveError;
use pomoshare_core::presence::{board, next_minute_change, PresenceFeed};
use pomoshare_core::reports::{
    archive_iteration, export_iteration_csv, generate_journal, iteration_record, process, record_day,
    render_iteration_csv, render_journal, render_metrics, summarize_day, write_journal_file, DateRange,
};
use pomoshare_core::wire::{
    encode, Ack, Command, CommandBody, Envelope, ErrorReply, Hello, Message, Report, ReportFormat, ReportRequest,
    Snapshot,
};
use pomoshare_core::{
    Archive, ArchiveRecord, Effort, Interruption, LogEntry, MemberId, PresenceBoard, SessionError, SessionId,
    SessionState, Timestamp,
};
use tokio::sync::{mpsc, oneshot, Notify};

use crate::clock::TimeSource;
use crate::config::ServerConfig;
use crate::store::{Meta, SessionStore, StoreError};

pub type ConnId = u64;

/// The sending half of one client connection.
#[derive(Clone, Debug)]
pub struct Outbox {
    pub tx: mpsc::Sender<String>,
    /// Fired when the server gives up on the client (queue overflow).
    pub kick: Arc<Notify>,
}

pub enum Request {
    Attach { conn: ConnId, hello: Hello, outbox: Outbox, reply: oneshot::Sender<Result<(), ErrorReply>> },
    Command { conn: ConnId, command: Command },
    Detach { conn: ConnId },
    Status { reply: oneshot::Sender<PresenceBoard> },
    Inspect { reply: oneshot::Sender<SessionState> },
}

pub struct Hub {
    config: ServerConfig,
    time: Arc<dyn TimeSource>,
    sessions: Mutex<HashMap<SessionId, mpsc::Sender<Request>>>,
    next_conn: AtomicU64,
}

fn store_error(e: StoreError) -> ErrorReply {
    match e {
        StoreError::InvalidId(id) => ErrorReply::new("InvalidSession", format!("invalid session id `{id}`"), None),
        e => ErrorReply::new("StorageFailure", e.to_string(), None),
    }
}

fn archive_error(e: ArchiveError, id: Option<String>) -> ErrorReply {
    let code = match &e {
        ArchiveError::Io(_) => "StorageFailure",
        ArchiveError::CorruptArchive { .. } | ArchiveError::UnsupportedSchema { .. } => "CorruptArchive",
        ArchiveError::IterationFrozen(_) => "IterationFrozen",
        ArchiveError::UnknownIteration(_) => "UnknownIteration",
        ArchiveError::InconsistentIteration { .. } => "InconsistentIteration",
    };
    ErrorReply::new(code, e.to_string(), id)
}

impl Hub {
    pub fn new(config: ServerConfig, time: Arc<dyn TimeSource>) -> Arc<Hub> {
        Arc::new(Hub { config, time, sessions: Mutex::new(HashMap::new()), next_conn: AtomicU64::new(1) })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.time.now()
    }

    pub fn connection_id(&self) -> ConnId {
        self.next_conn.fetch_add(1, Ordering::Relaxed)
    }

    /// The serializer for a session, loading it from disk or creating it
    /// when the hello asks for that.
    pub fn session(&self, hello: Option<&Hello>, id: &SessionId) -> Result<mpsc::Sender<Request>, ErrorReply> {
        let mut sessions = self.sessions.lock().expect("session map lock");
        if let Some(tx) = sessions.get(id).filter(|tx| !tx.is_closed()) {
            return Ok(tx.clone());
        }
        let mut store = SessionStore::open(&self.config.data_dir, id).map_err(store_error)?;
        let state = match store.load_state().map_err(store_error)? {
            Some(state) => state,
            None => {
                let Some((hello, opts)) = hello.and_then(|h| h.create.map(|o| (h, o))) else {
                    return Err(ErrorReply::new("UnknownSession", format!("no session `{id}`"), None));
                };
                let Some(creator) = hello.member.clone() else {
                    return Err(ErrorReply::new("NotAMember", "creating a session needs a member", None));
                };
                let config = opts.resolve(self.config.defaults);
                let state = SessionState::create(id.clone(), config, creator, self.time.now())
                    .map_err(|e| ErrorReply::from_session(&e, None))?;
                store.write_meta(&Meta { token: hello.token.clone() }).map_err(store_error)?;
                store.append(&state.event_log).map_err(store_error)?;
                tracing::info!(session = %id, "session created");
                state
            }
        };
        let meta = store.meta().map_err(store_error)?;
        let (tx, rx) = mpsc::channel(1024);
        let actor = Actor {
            state,
            store,
            token: meta.token,
            config: self.config.clone(),
            time: self.time.clone(),
            subs: BTreeMap::new(),
            feed: PresenceFeed::default(),
            seen: HashMap::new(),
            seen_order: VecDeque::new(),
        };
        tokio::spawn(actor.run(rx));
        sessions.insert(id.clone(), tx.clone());
        Ok(tx)
    }

    /// Latest presence for a session, or `None` if there is no such session.
    pub async fn status(&self, id: &SessionId) -> Option<PresenceBoard> {
        let tx = self.session(None, id).ok()?;
        let (reply, rx) = oneshot::channel();
        tx.send(Request::Status { reply }).await.ok()?;
        rx.await.ok()
    }

    /// The live state of a session; for tests and diagnostics.
    pub async fn inspect(&self, id: &SessionId) -> Option<SessionState> {
        let tx = self.session(None, id).ok()?;
        let (reply, rx) = oneshot::channel();
        tx.send(Request::Inspect { reply }).await.ok()?;
        rx.await.ok()
    }
}

struct Sub {
    outbox: Outbox,
    member: Option<MemberId>,
}

/// What a command produced for its sender.
enum Outcome {
    Ack(Ack),
    Report(ReportFormat, String),
}

type SeenKey = (Option<MemberId>, String);

struct Actor {
    state: SessionState,
    store: SessionStore,
    token: Option<String>,
    config: ServerConfig,
    time: Arc<dyn TimeSource>,
    subs: BTreeMap<ConnId, Sub>,
    feed: PresenceFeed,
    /// First reply per (member, command id), for retries. Keyed by member
    /// rather than connection so a retry after a reconnect still matches.
    seen: HashMap<SeenKey, Message>,
    seen_order: VecDeque<SeenKey>,
}

fn wall_clock(t: Timestamp) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(i64::try_from(t.as_millis()).unwrap_or(i64::MAX)).unwrap_or_default()
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::Receiver<Request>) {
        let id = self.state.session_id.clone();
        loop {
            self.catch_up();
            self.publish_presence(None);
            let wake = self.next_wake();
            let sleep = match wake {
                Some(t) => self.time.sleep_until(t),
                None => Box::pin(futures::future::pending()),
            };
            tokio::select! {
                req = rx.recv() => match req {
                    Some(req) => {
                        self.catch_up();
                        self.handle(req);
                    }
                    None => break,
                },
                () = sleep => {}
            }
        }
        tracing::debug!(session = %id, "serializer stopped");
    }

    fn next_wake(&self) -> Option<Timestamp> {
        let now = self.time.now();
        let day_end = self.state.today.and_then(|d| self.config.day.period_of(d).to);
        [self.state.clock.phase_deadline, next_minute_change(&self.state.clock, now), day_end]
            .into_iter()
            .flatten()
            .min()
    }

    fn online(&self) -> BTreeSet<MemberId> {
        self.subs.values().filter_map(|s| s.member.clone()).collect()
    }

    /// Applies overdue transitions and a day change, if any.
    fn catch_up(&mut self) {
        let now = self.time.now();
        let entries = self.state.tick(now);
        self.commit(entries);
        let date = self.config.day.date_of(now);
        if self.state.today == Some(date) {
            return;
        }
        if let Some(prev) = self.state.today.filter(|p| *p < date) {
            self.auto_record(prev, now);
        }
        if self.state.today.is_none_or(|p| p < date) {
            match self.state.roll_day(date, now) {
                Ok(entries) => {
                    self.commit(entries);
                }
                Err(e) => tracing::warn!(error = %e, "day change rejected"),
            }
        }
    }

    /// Closes out a finished day unless someone already recorded it.
    fn auto_record(&mut self, date: NaiveDate, now: Timestamp) {
        let archive = self.store.archive();
        match archive.load() {
            Ok(a) if a.day(date).is_some() => {}
            Ok(_) => {
                let slice = self.config.day.slice(&self.state.event_log, date);
                if let Err(e) = record_day(&archive, &self.state.session_id, &slice, date, wall_clock(now)) {
                    tracing::error!(error = %e, %date, "recording the day failed");
                }
            }
            Err(e) => tracing::error!(error = %e, "archive unreadable"),
        }
    }

    /// Persists new log entries and fans them out. On a storage failure the
    /// in-memory state is rebuilt from disk so memory never runs ahead of it.
    fn commit(&mut self, entries: Vec<LogEntry>) -> bool {
        if entries.is_empty() {
            return true;
        }
        if let Err(e) = self.store.append(&entries) {
            tracing::error!(error = %e, "log append failed; reloading session from disk");
            match self.store.load_state() {
                Ok(Some(state)) => self.state = state,
                other => tracing::error!(?other, "reload failed; keeping memory state"),
            }
            return false;
        }
        let now = self.time.now();
        for entry in &entries {
            self.broadcast(&Envelope::event(entry, now));
        }
        true
    }

    fn broadcast(&mut self, envelope: &Envelope) {
        let line = encode(envelope);
        let mut dropped = Vec::new();
        for (conn, sub) in &self.subs {
            if sub.outbox.tx.try_send(line.clone()).is_err() {
                dropped.push(*conn);
            }
        }
        for conn in dropped {
            if let Some(sub) = self.subs.remove(&conn) {
                tracing::warn!(conn, "client too slow or gone; dropping it");
                sub.outbox.kick.notify_one();
            }
        }
    }

    fn send_to(&mut self, conn: ConnId, message: Message) {
        let envelope = Envelope::from_server(self.state.last_seq(), self.time.now(), message);
        if let Some(sub) = self.subs.get(&conn) {
            if sub.outbox.tx.try_send(encode(&envelope)).is_err() {
                let sub = self.subs.remove(&conn).expect("present");
                sub.outbox.kick.notify_one();
            }
        }
    }

    fn publish_presence(&mut self, newcomer: Option<ConnId>) {
        let now = self.time.now();
        let online = self.online();
        match self.feed.poll(&self.state, now, Some(&online)) {
            Some(b) => {
                let env = Envelope::from_server(self.state.last_seq(), now, Message::Presence(b));
                self.broadcast(&env);
            }
            None => {
                if let (Some(conn), Some(b)) = (newcomer, self.feed.latest().cloned()) {
                    self.send_to(conn, Message::Presence(b));
                }
            }
        }
    }

    fn handle(&mut self, req: Request) {
        match req {
            Request::Attach { conn, hello, outbox, reply } => {
                let result = self.attach(conn, hello, outbox);
                let ok = result.is_ok();
                let _ = reply.send(result);
                if ok {
                    self.publish_presence(Some(conn));
                }
            }
            Request::Command { conn, command } => {
                self.command(conn, command);
                self.publish_presence(None);
            }
            Request::Detach { conn } => {
                self.subs.remove(&conn);
                self.publish_presence(None);
            }
            Request::Status { reply } => {
                let b = self.feed.latest().cloned().unwrap_or_else(|| board(&self.state, self.time.now(), None));
                let _ = reply.send(b);
            }
            Request::Inspect { reply } => {
                let _ = reply.send(self.state.clone());
            }
        }
    }

    fn attach(&mut self, conn: ConnId, hello: Hello, outbox: Outbox) -> Result<(), ErrorReply> {
        if self.token.is_some() && hello.token != self.token {
            return Err(ErrorReply::new("InvalidToken", "session token missing or wrong", None));
        }
        let now = self.time.now();
        if let Some(member) = &hello.member {
            if self.state.member(&member.id).is_none() {
                let entries = self.state.join(member.clone(), now).map_err(|e| ErrorReply::from_session(&e, None))?;
                self.commit(entries);
            }
        }
        self.subs.insert(conn, Sub { outbox, member: hello.member.map(|m| m.id) });
        let snapshot = Message::Snapshot(Box::new(Snapshot { state: self.state.clone() }));
        self.send_to(conn, snapshot);
        Ok(())
    }

    fn remember(&mut self, id: SeenKey, reply: Message) {
        if self.seen_order.len() >= self.config.dedupe_window {
            if let Some(old) = self.seen_order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.seen_order.push_back(id.clone());
        self.seen.insert(id, reply);
    }

    fn command(&mut self, conn: ConnId, command: Command) {
        let member = self.subs.get(&conn).and_then(|s| s.member.clone());
        let key = (member.clone(), command.id.clone());
        if let Some(first) = self.seen.get(&key) {
            let again = match first.clone() {
                Message::Ack(ack) => Message::Ack(Ack { duplicate: true, ..ack }),
                other => other,
            };
            self.send_to(conn, again);
            return;
        }
        let id = command.id.clone();
        let reply = match self.execute(member, command) {
            Ok(Outcome::Ack(ack)) => Message::Ack(ack),
            Ok(Outcome::Report(format, body)) => Message::Report(Report { command_id: id.clone(), format, body }),
            Err(e) => Message::Error(ErrorReply { command_id: Some(id.clone()), ..e }),
        };
        self.remember(key, reply.clone());
        self.send_to(conn, reply);
    }

    fn today(&self) -> NaiveDate {
        self.state.today.unwrap_or_else(|| self.config.day.date_of(self.time.now()))
    }

    /// The archive plus live summaries for the given dates when they are
    /// today or were never recorded.
    fn archive_view(&self, dates: &[NaiveDate]) -> Result<Archive, ArchiveError> {
        let mut archive = self.store.archive().load()?;
        for date in dates {
            if Some(*date) == self.state.today || archive.day(*date).is_none() {
                let slice = self.config.day.slice(&self.state.event_log, *date);
                if !slice.is_empty() {
                    archive.push(ArchiveRecord::Day(summarize_day(&self.state.session_id, *date, &slice)));
                }
            }
        }
        Ok(archive)
    }

    fn execute(&mut self, member: Option<MemberId>, command: Command) -> Result<Outcome, ErrorReply> {
        let now = self.time.now();
        let cid = Some(command.id.clone());
        let domain = |e: SessionError| ErrorReply::from_session(&e, None);
        let who = || {
            member
                .clone()
                .ok_or_else(|| ErrorReply::new("NotAMember", "this connection did not identify a member", None))
        };
        let interruption = |kind, note, deflected| -> Result<Interruption, ErrorReply> {
            Ok(Interruption { kind, deflected, at: now, note, initiator: who()? })
        };
        let plain = Ack { command_id: command.id.clone(), duplicate: false, advice: None, journal: None };
        let entries = match command.body {
            CommandBody::Ready => self.state.declare_ready(&who()?, now),
            CommandBody::Start => self.state.start_shared(&who()?, now),
            CommandBody::Void { kind, note } => self.state.void_shared(interruption(kind, note, false)?),
            CommandBody::Interrupt { kind, note } => self.state.interrupt(interruption(kind, note, true)?),
            CommandBody::Estimate { story, units } => {
                let (advice, entries) = self.state.estimate(&story, units, now).map_err(domain)?;
                if advice.is_rejection() {
                    let reason = format!(
                        "split required: {} pomodoros is more than {}; break the story down",
                        Effort(units.unsigned_abs()),
                        Effort(self.state.ledger.rules.split_required_above)
                    );
                    return Err(ErrorReply::new("SplitRequired", reason, cid));
                }
                if !self.commit(entries) {
                    return Err(ErrorReply::new("StorageFailure", "could not persist the estimate", cid));
                }
                return Ok(Outcome::Ack(Ack { advice: Some(advice), ..plain }));
            }
            CommandBody::Track { story, ptype, half, pomodoro } => {
                let effort = if half { Effort::HALF } else { Effort::PAIR_POMODORO };
                self.state.track(&who()?, &story, &ptype, effort, pomodoro, now)
            }
            CommandBody::Rotate => self.state.rotate_pairs(now),
            CommandBody::Leave => self.state.leave(&who()?, now),
            CommandBody::AddIteration { iteration } => self.state.add_iteration(iteration, now),
            CommandBody::AddStory { story } => self.state.add_story(story, now),
            CommandBody::SetStatus { story, status } => self.state.set_status(&story, status, now),
            CommandBody::DefineType { name } => self.state.define_type(&name, now),
            CommandBody::Journal { lines, date } => {
                let member = who()?;
                let date = date.unwrap_or_else(|| self.today());
                let archive = self.archive_view(&[date]).map_err(|e| archive_error(e, cid.clone()))?;
                let entry = generate_journal(&archive, &member, date, &lines);
                self.store
                    .archive()
                    .append(&ArchiveRecord::Journal(entry.clone()))
                    .map_err(|e| archive_error(e, cid.clone()))?;
                if let Err(e) = write_journal_file(&self.store.journal_dir(), &entry) {
                    tracing::warn!(error = %e, "journal text file not written");
                }
                return Ok(Outcome::Ack(Ack { journal: Some(entry), ..plain }));
            }
            CommandBody::CloseIteration { iteration } => {
                let record = iteration_record(&self.state.ledger, &iteration, true).map_err(|e| domain(e.into()))?;
                archive_iteration(&self.store.archive(), &record).map_err(|e| archive_error(e, cid))?;
                return Ok(Outcome::Ack(plain));
            }
            CommandBody::RecordDay { date } => {
                let date = date.unwrap_or_else(|| self.today());
                let slice = self.config.day.slice(&self.state.event_log, date);
                record_day(&self.store.archive(), &self.state.session_id, &slice, date, wall_clock(now))
                    .map_err(|e| archive_error(e, cid))?;
                return Ok(Outcome::Ack(plain));
            }
            CommandBody::Report { report } => return self.report(report, member, cid),
        };
        let entries = entries.map_err(domain)?;
        if !self.commit(entries) {
            return Err(ErrorReply::new("StorageFailure", "could not persist the change", cid));
        }
        Ok(Outcome::Ack(plain))
    }

    fn report(
        &self,
        report: ReportRequest,
        member: Option<MemberId>,
        cid: Option<String>,
    ) -> Result<Outcome, ErrorReply> {
        match report {
            ReportRequest::Day { date } => {
                let date = date.unwrap_or_else(|| self.today());
                let archive = self.archive_view(&[date]).map_err(|e| archive_error(e, cid.clone()))?;
                let metrics = process(&archive, DateRange::day(date)).map_err(|e| archive_error(e, cid))?;
                Ok(Outcome::Report(ReportFormat::Text, render_metrics(&metrics)))
            }
            ReportRequest::Iteration { iteration } => {
                let archive = self.store.archive().load().map_err(|e| archive_error(e, cid.clone()))?;
                if archive.iteration(&iteration).is_some_and(|r| r.closed) {
                    let csv = export_iteration_csv(&archive, &iteration).map_err(|e| archive_error(e, cid))?;
                    return Ok(Outcome::Report(ReportFormat::Csv, csv));
                }
                let record = iteration_record(&self.state.ledger, &iteration, false)
                    .map_err(|e| ErrorReply::from_session(&e.into(), cid))?;
                Ok(Outcome::Report(ReportFormat::Csv, render_iteration_csv(&record)))
            }
            ReportRequest::Journal { member: who, date } => {
                let who = who.or(member).ok_or_else(|| ErrorReply::new("NotAMember", "whose journal?", cid.clone()))?;
                let date = date.unwrap_or_else(|| self.today());
                let archive = self.store.archive().load().map_err(|e| archive_error(e, cid.clone()))?;
                match archive.journal(&who, date) {
                    Some(entry) => Ok(Outcome::Report(ReportFormat::Text, render_journal(entry))),
                    None => Err(ErrorReply::new("NoJournal", format!("no journal of {who} for {date}"), cid)),
                }
            }
        }
    }
}
