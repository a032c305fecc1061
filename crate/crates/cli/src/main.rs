mod client;
mod config;

use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use chrono::{Local, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pomoshare_core::ledger::{Iteration, Story};
use pomoshare_core::reports::{export_iteration_csv, process, render_journal, render_metrics, DateRange};
use pomoshare_core::time::ceil_minutes;
use pomoshare_core::wire::{raw_payload, CommandBody, CreateOptions, Hello, Message, ReportRequest};
use pomoshare_core::{
    ArchiveStore, Effort, EstimateAdvice, InterruptionKind, Member, Phase, PresenceBoard, Role, StoryStatus,
};

use client::{local_now, Client, ClientError, Received};
use config::Config;

const EXIT_DOMAIN: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONNECTION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pomoshare", version, about = "Client for a shared pomodoro session")]
struct Cli {
    /// Config file (key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Server address, host:port.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Shared session token.
    #[arg(long, global = true)]
    token: Option<String>,
    #[arg(long, global = true)]
    member: Option<String>,
    #[arg(long, global = true)]
    session: Option<String>,
    /// Print the server's payload as JSON, unmodified.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Create or join a session; remembers it in the config file.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Declare yourself ready for the next pomodoro.
    Ready,
    /// Start the shared pomodoro.
    Start,
    /// Void the running pomodoro.
    Void(InterruptArgs),
    /// Log an interruption; without --deflected the pomodoro is voided.
    Interrupt {
        #[arg(long)]
        deflected: bool,
        #[command(flatten)]
        args: InterruptArgs,
    },
    /// Estimate a story in pomodoros (halves allowed).
    Estimate { story: String, pomodoros: String },
    /// Cross-mark a completed pomodoro against a story.
    Track {
        story: String,
        #[arg(long = "type")]
        ptype: String,
        /// Solo work: half a pair-pomodoro.
        #[arg(long)]
        half: bool,
        /// Pomodoro sequence number; defaults to your last completed one.
        #[arg(long)]
        pomodoro: Option<u64>,
    },
    /// Rotate pairs.
    Rotate,
    /// Leave the session.
    Leave,
    /// Phase, countdown and who is reachable.
    Status {
        /// Keep a live countdown on screen.
        #[arg(long)]
        watch: bool,
        /// Stop watching after this many seconds.
        #[arg(long = "for", requires = "watch")]
        duration: Option<u64>,
    },
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Journal(JournalCmd),
    #[command(subcommand)]
    Story(StoryCmd),
    #[command(subcommand)]
    Iteration(IterationCmd),
    /// Define a new pomodoro type.
    DefineType { name: String },
    /// Write the day's record to the archive now.
    RecordDay {
        #[arg(long)]
        date: Option<NaiveDate>,
    },
}

#[derive(Debug, Args)]
struct InterruptArgs {
    #[arg(long, value_enum, default_value = "external")]
    kind: Kind,
    #[arg(long, default_value = "")]
    note: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Developer,
    Coach,
    CustomerProxy,
}

#[derive(Debug, Args)]
struct MemberArgs {
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    /// Display name; defaults to the member id.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Subcommand)]
enum SessionCmd {
    Create {
        id: String,
        #[command(flatten)]
        member: MemberArgs,
        #[arg(long)]
        work: Option<u32>,
        #[arg(long)]
        short_break: Option<u32>,
        #[arg(long)]
        long_break: Option<u32>,
        #[arg(long)]
        long_break_every: Option<u32>,
    },
    Join {
        id: String,
        #[command(flatten)]
        member: MemberArgs,
    },
}

#[derive(Debug, Args)]
struct Offline {
    /// Read this archive file instead of asking the server.
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Use the `archive` from the config file instead of the server.
    #[arg(long, conflicts_with = "archive")]
    offline: bool,
}

#[derive(Debug, Subcommand)]
enum ReportCmd {
    /// Daily metrics.
    Day {
        #[arg(long)]
        date: Option<NaiveDate>,
        #[command(flatten)]
        offline: Offline,
    },
    /// The iteration spreadsheet as CSV.
    Iteration {
        id: String,
        #[command(flatten)]
        offline: Offline,
    },
}

#[derive(Debug, Subcommand)]
enum JournalCmd {
    /// Write today's journal entry (replaces an earlier one).
    Add {
        lines: Vec<String>,
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    Show {
        #[arg(long)]
        date: Option<NaiveDate>,
        #[command(flatten)]
        offline: Offline,
    },
}

#[derive(Debug, Subcommand)]
enum StoryCmd {
    Add {
        id: String,
        title: String,
        #[arg(long)]
        iteration: String,
        /// Bookkeeping work that never gets estimated or tracked.
        #[arg(long)]
        untracked: bool,
    },
    Status {
        id: String,
        /// planned, in-progress or done
        status: String,
    },
}

#[derive(Debug, Subcommand)]
enum IterationCmd {
    Add {
        id: String,
        start: NaiveDate,
        end: NaiveDate,
    },
    /// Freeze the iteration and archive its spreadsheet.
    Close {
        id: String,
    },
}

/// Why a run failed, mapped onto the exit code.
enum Failure {
    Domain(String),
    Usage(String),
    Connection(String),
    /// Already printed (e.g. a JSON error payload).
    Reported(u8),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Connection(e.to_string())
    }
}

struct Ctx {
    cfg: Config,
    cfg_path: PathBuf,
    json: bool,
}

impl Ctx {
    fn server(&self) -> Result<&str, Failure> {
        self.cfg.get("server").ok_or_else(|| Failure::Usage("no server configured (set server= or --server)".into()))
    }

    fn session(&self) -> Result<&str, Failure> {
        self.cfg
            .get("session")
            .ok_or_else(|| Failure::Usage("no session (run `session join <id>` or pass --session)".into()))
    }

    fn member(&self) -> Option<Member> {
        let id = self.cfg.get("member")?;
        let role = match self.cfg.get("role") {
            Some("coach") => Role::Coach,
            Some("customer_proxy" | "customer-proxy") => Role::CustomerProxy,
            _ => Role::Developer,
        };
        Some(Member {
            id: id.into(),
            display_name: self.cfg.get("name").unwrap_or(id).to_owned(),
            role,
            full_time: true,
        })
    }

    fn hello(&self, with_member: bool, create: Option<CreateOptions>) -> Result<Hello, Failure> {
        let member = if with_member {
            Some(self.member().ok_or_else(|| Failure::Usage("no member configured (set member= or --member)".into()))?)
        } else {
            None
        };
        Ok(Hello { session: self.session()?.into(), token: self.cfg.get("token").map(str::to_owned), member, create })
    }

    /// Connects and says hello; server errors at this point are domain errors.
    fn open(&self, with_member: bool, create: Option<CreateOptions>) -> Result<(Client, Received), Failure> {
        let hello = self.hello(with_member, create)?;
        let mut client = Client::connect(self.server()?)?;
        let snap = client.hello(hello)?;
        self.check(&snap)?;
        Ok((client, snap))
    }

    fn print_json(&self, r: &Received) {
        if let Some(p) = raw_payload(&r.line) {
            println!("{p}");
        }
    }

    /// Turns an error reply into a failure; prints the payload in JSON mode.
    fn check(&self, r: &Received) -> Result<(), Failure> {
        if let Message::Error(e) = &r.envelope.message {
            if self.json {
                self.print_json(r);
                return Err(Failure::Reported(EXIT_DOMAIN));
            }
            return Err(Failure::Domain(format!("{}: {}", e.code, e.reason)));
        }
        Ok(())
    }

    /// One command over a fresh connection.
    fn run(&self, body: CommandBody) -> Result<Received, Failure> {
        let (mut client, _) = self.open(true, None)?;
        let reply = client.command(body)?;
        self.check(&reply)?;
        if self.json {
            self.print_json(&reply);
        }
        Ok(reply)
    }

    fn archive(&self, o: &Offline) -> Option<Result<ArchiveStore, Failure>> {
        if let Some(p) = &o.archive {
            return Some(Ok(ArchiveStore::new(p)));
        }
        o.offline.then(|| {
            self.cfg
                .get("archive")
                .map(ArchiveStore::new)
                .ok_or_else(|| Failure::Usage("--offline needs archive= in the config file".into()))
        })
    }
}

fn parse_pomodoros(text: &str) -> Result<i64, Failure> {
    let bad = || Failure::Usage(format!("`{text}` is not a number of pomodoros in halves, like 3 or 2.5"));
    let value: f64 = text.parse().map_err(|_| bad())?;
    let units = value * 2.0;
    if !units.is_finite() || units.fract() != 0.0 || units.abs() > 1e9 {
        return Err(bad());
    }
    Ok(units as i64)
}

fn advice_note(advice: EstimateAdvice) -> &'static str {
    match advice {
        EstimateAdvice::Ok => "",
        EstimateAdvice::CombineSuggested => " (under one pomodoro: consider combining it with another story)",
        EstimateAdvice::SplitSuggested => " (over 5 pomodoros: consider breaking it down)",
        EstimateAdvice::SplitRequired => " (split required)",
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Idle => "idle",
        Phase::Work => "work",
        Phase::ShortBreak => "short break",
        Phase::LongBreak => "long break",
    }
}

fn render_board(session: &str, board: &PresenceBoard) -> String {
    let mut out = String::new();
    let left = board.statuses.iter().find_map(|s| s.minutes_remaining);
    match left {
        Some(m) => out.push_str(&format!("{session}: {} ({m}m left)\n", phase_name(board.phase))),
        None => out.push_str(&format!("{session}: {}\n", phase_name(board.phase))),
    }
    for s in &board.statuses {
        out.push_str(&format!("  {}: {}\n", s.member_id, s.message));
    }
    out
}

fn today() -> NaiveDate {
    Local::now().date_naive()
}

fn status(ctx: &Ctx, watch: bool, duration: Option<u64>) -> Result<(), Failure> {
    // saying who we are puts us on the board as online
    let (mut client, _) = ctx.open(ctx.member().is_some(), None)?;
    let presence = client.presence()?;
    let session = ctx.session()?.to_owned();
    if ctx.json {
        ctx.print_json(&presence);
    } else if let Message::Presence(b) = &presence.envelope.message {
        print!("{}", render_board(&session, b));
    }
    if !watch {
        return Ok(());
    }
    let mut mirror = client.mirror.clone();
    let stream = client.into_stream();
    let stop = duration.map(|s| std::time::Instant::now() + Duration::from_secs(s));
    let tty = std::io::stdout().is_terminal();
    let mut last_line = String::new();
    loop {
        if stop.is_some_and(|t| std::time::Instant::now() >= t) {
            break;
        }
        match stream.recv_timeout(Duration::from_millis(250)) {
            Ok(Ok(r)) => {
                mirror.receive(&r.envelope, local_now());
                if ctx.json {
                    ctx.print_json(&r);
                }
            }
            Ok(Err(e)) => return Err(e.into()),
            Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {}
            Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => {
                return Err(Failure::Connection("stream ended".into()));
            }
        }
        if ctx.json {
            continue;
        }
        let Some(state) = &mirror.state else { continue };
        // the countdown is rendered from the broadcast deadline only
        let line = match state.clock.phase_deadline {
            Some(deadline) => {
                let left = mirror.server_now(local_now()).until(deadline);
                let secs = left.div_ceil(1000);
                format!(
                    "{}: {:02}:{:02} left ({}m)",
                    phase_name(state.clock.phase),
                    secs / 60,
                    secs % 60,
                    ceil_minutes(left)
                )
            }
            None => phase_name(state.clock.phase).to_owned(),
        };
        if line != last_line {
            if tty {
                print!("\r\x1b[2K{line}");
            } else {
                println!("{line}");
            }
            let _ = std::io::stdout().flush();
            last_line = line;
        }
    }
    if tty {
        println!();
    }
    Ok(())
}

fn report_body(ctx: &Ctx, reply: &Received) {
    if ctx.json {
        return;
    }
    if let Message::Report(r) = &reply.envelope.message {
        print!("{}", r.body);
    }
}

fn execute(ctx: &mut Ctx, cmd: Cmd) -> Result<(), Failure> {
    let json = ctx.json;
    let say = |text: String| {
        if !json {
            println!("{text}");
        }
    };
    match cmd {
        Cmd::Session(sc) => {
            let (id, member_args, create) = match sc {
                SessionCmd::Create { id, member, work, short_break, long_break, long_break_every } => {
                    let opts = CreateOptions {
                        work_minutes: work,
                        short_break_minutes: short_break,
                        long_break_minutes: long_break,
                        long_break_every,
                    };
                    (id, member, Some(opts))
                }
                SessionCmd::Join { id, member } => (id, member, None),
            };
            ctx.cfg.set("session", id.clone());
            if let Some(r) = member_args.role {
                let role = match r {
                    RoleArg::Developer => "developer",
                    RoleArg::Coach => "coach",
                    RoleArg::CustomerProxy => "customer_proxy",
                };
                ctx.cfg.set("role", role);
            }
            if let Some(n) = member_args.name {
                ctx.cfg.set("name", n);
            }
            let (_, snap) = ctx.open(true, create)?;
            ctx.cfg.save(&ctx.cfg_path).map_err(|e| Failure::Usage(format!("cannot save config: {e}")))?;
            if json {
                ctx.print_json(&snap);
            } else if let Message::Snapshot(s) = &snap.envelope.message {
                let names: Vec<&str> = s.state.members.iter().map(|m| m.id.as_str()).collect();
                say(format!("session {id}: {} members ({})", names.len(), names.join(", ")));
            }
        }
        Cmd::Ready => {
            ctx.run(CommandBody::Ready)?;
            say("ready".into());
        }
        Cmd::Start => {
            ctx.run(CommandBody::Start)?;
            say("pomodoro started".into());
        }
        Cmd::Void(a) => {
            ctx.run(CommandBody::Void { kind: kind(a.kind), note: a.note })?;
            say("pomodoro voided".into());
        }
        Cmd::Interrupt { deflected, args } => {
            let (kind, note) = (kind(args.kind), args.note);
            if deflected {
                ctx.run(CommandBody::Interrupt { kind, note })?;
                say("interruption logged; the pomodoro goes on".into());
            } else {
                ctx.run(CommandBody::Void { kind, note })?;
                say("pomodoro voided".into());
            }
        }
        Cmd::Estimate { story, pomodoros } => {
            let units = parse_pomodoros(&pomodoros)?;
            let reply = ctx.run(CommandBody::Estimate { story: story.as_str().into(), units })?;
            if let Message::Ack(a) = &reply.envelope.message {
                let note = a.advice.map_or("", advice_note);
                say(format!("{story} estimated at {} pomodoros{note}", Effort(units.unsigned_abs())));
            }
        }
        Cmd::Track { story, ptype, half, pomodoro } => {
            ctx.run(CommandBody::Track { story: story.as_str().into(), ptype: ptype.clone(), half, pomodoro })?;
            let effort = if half { Effort::HALF } else { Effort::PAIR_POMODORO };
            say(format!("{story}: {effort} pomodoro of {ptype} tracked"));
        }
        Cmd::Rotate => {
            ctx.run(CommandBody::Rotate)?;
            say("pairs rotated".into());
        }
        Cmd::Leave => {
            ctx.run(CommandBody::Leave)?;
            say("left the session".into());
        }
        Cmd::Status { watch, duration } => status(ctx, watch, duration)?,
        Cmd::Report(ReportCmd::Day { date, offline }) => match ctx.archive(&offline) {
            Some(store) => {
                let archive = store?.load().map_err(|e| Failure::Domain(e.to_string()))?;
                let metrics = process(&archive, DateRange::day(date.unwrap_or_else(today)))
                    .map_err(|e| Failure::Domain(e.to_string()))?;
                if json {
                    println!("{}", serde_json::to_string(&metrics).expect("metrics serialize"));
                } else {
                    print!("{}", render_metrics(&metrics));
                }
            }
            None => {
                let reply = ctx.run(CommandBody::Report { report: ReportRequest::Day { date } })?;
                report_body(ctx, &reply);
            }
        },
        Cmd::Report(ReportCmd::Iteration { id, offline }) => match ctx.archive(&offline) {
            Some(store) => {
                let archive = store?.load().map_err(|e| Failure::Domain(e.to_string()))?;
                let csv =
                    export_iteration_csv(&archive, &id.as_str().into()).map_err(|e| Failure::Domain(e.to_string()))?;
                if json {
                    println!("{}", serde_json::json!({ "format": "csv", "body": csv }));
                } else {
                    print!("{csv}");
                }
            }
            None => {
                let reply = ctx
                    .run(CommandBody::Report { report: ReportRequest::Iteration { iteration: id.as_str().into() } })?;
                report_body(ctx, &reply);
            }
        },
        Cmd::Journal(JournalCmd::Add { lines, date }) => {
            let reply = ctx.run(CommandBody::Journal { lines, date })?;
            if let (false, Message::Ack(a)) = (json, &reply.envelope.message) {
                if let Some(entry) = &a.journal {
                    print!("{}", render_journal(entry));
                }
            }
        }
        Cmd::Journal(JournalCmd::Show { date, offline }) => match ctx.archive(&offline) {
            Some(store) => {
                let member = ctx.member().ok_or_else(|| Failure::Usage("no member configured".into()))?;
                let archive = store?.load().map_err(|e| Failure::Domain(e.to_string()))?;
                let date = date.unwrap_or_else(today);
                let entry = archive
                    .journal(&member.id, date)
                    .ok_or_else(|| Failure::Domain(format!("NoJournal: no journal of {} for {date}", member.id)))?;
                if json {
                    println!("{}", serde_json::to_string(entry).expect("journal serializes"));
                } else {
                    print!("{}", render_journal(entry));
                }
            }
            None => {
                let reply = ctx.run(CommandBody::Report { report: ReportRequest::Journal { member: None, date } })?;
                report_body(ctx, &reply);
            }
        },
        Cmd::Story(StoryCmd::Add { id, title, iteration, untracked }) => {
            let mut story = Story::new(id.as_str(), title, iteration.as_str());
            story.tracked = !untracked;
            ctx.run(CommandBody::AddStory { story })?;
            say(format!("story {id} added"));
        }
        Cmd::Story(StoryCmd::Status { id, status }) => {
            let status: StoryStatus = status
                .parse()
                .map_err(|_| Failure::Usage(format!("unknown status `{status}`; use planned, in-progress or done")))?;
            ctx.run(CommandBody::SetStatus { story: id.as_str().into(), status })?;
            say(format!("{id} is now {}", status.as_str()));
        }
        Cmd::Iteration(IterationCmd::Add { id, start, end }) => {
            ctx.run(CommandBody::AddIteration { iteration: Iteration { id: id.as_str().into(), start, end } })?;
            say(format!("iteration {id} added"));
        }
        Cmd::Iteration(IterationCmd::Close { id }) => {
            ctx.run(CommandBody::CloseIteration { iteration: id.as_str().into() })?;
            say(format!("iteration {id} closed and archived"));
        }
        Cmd::DefineType { name } => {
            ctx.run(CommandBody::DefineType { name: name.clone() })?;
            say(format!("pomodoro type {name} defined"));
        }
        Cmd::RecordDay { date } => {
            ctx.run(CommandBody::RecordDay { date })?;
            say("day recorded".into());
        }
    }
    Ok(())
}

fn kind(k: Kind) -> InterruptionKind {
    match k {
        Kind::Internal => InterruptionKind::Internal,
        Kind::External => InterruptionKind::External,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg_path = cli.config.clone().unwrap_or_else(config::default_path);
    let cfg = match Config::load(&cfg_path) {
        Ok(c) => c.with_env(|k| std::env::var(k).ok()),
        Err(e) => {
            eprintln!("pomoshare: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut ctx = Ctx { cfg, cfg_path, json: cli.json };
    for (key, flag) in
        [("server", &cli.server), ("token", &cli.token), ("member", &cli.member), ("session", &cli.session)]
    {
        if let Some(v) = flag {
            ctx.cfg.set(key, v.clone());
        }
    }
    match execute(&mut ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Reported(code)) => ExitCode::from(code),
        Err(Failure::Domain(m)) => {
            eprintln!("pomoshare: {m}");
            ExitCode::from(EXIT_DOMAIN)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("pomoshare: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Connection(m)) => {
            eprintln!("pomoshare: {m}");
            ExitCode::from(EXIT_CONNECTION)
        }
    }
}
