//! Running a session between two agents over byte streams.
//!
//! Two channels connect the guest (Bob) to the host (Alice):
//!
//! * the protocol channel carries [`Message`] frames;
//! * the nature channel carries Bob's measurement requests to the referee
//!   held by the host process, one JSON object per line:
//!
//! ```text
//! {"op":"open_box_b","state_ref":4,"beta":0.25}   ->  {"outcome":false}
//! {"op":"verify","state_ref":4}                  ->  {"outcome":true}
//! ```
//!
//! Over TCP each connection starts with a hello line naming its channel,
//! `{"channel":"protocol"}` or `{"channel":"nature"}`.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{decode_message, encode_message, Body, Message, RoundGrammar, StateRef};
use super::{
    lie_abort_reason, seed_commitment, validate_session, AlicePolicy, BobPolicy, Ledger, LieResponse, RoundRecord,
    SessionOptions,
};
use super::referee::{Referee, RoundDraws};
use crate::error::{Error, Result};
use crate::payoff::{GameConfig, RoundOutcome};
use crate::rng::{stream, SimRng};

/// Longest frame accepted on either channel.
const MAX_FRAME: u64 = 64 * 1024;

pub type SharedReferee = Arc<Mutex<Referee>>;

/// A bidirectional byte stream.
pub trait Duplex: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl Duplex for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

/// In-memory stream end. See [`memory_pair`].
#[derive(Debug)]
pub struct MemoryDuplex {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
    timeout: Option<Duration>,
}

/// Two connected in-memory stream ends.
pub fn memory_pair() -> (MemoryDuplex, MemoryDuplex) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    let end = |tx, rx| MemoryDuplex { tx, rx, pending: Vec::new(), pos: 0, timeout: None };
    (end(tx_a, rx_a), end(tx_b, rx_b))
}

impl Read for MemoryDuplex {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pos >= self.pending.len() {
            let next = match self.timeout {
                Some(t) => match self.rx.recv_timeout(t) {
                    Ok(chunk) => chunk,
                    Err(RecvTimeoutError::Timeout) => return Err(io::ErrorKind::TimedOut.into()),
                    Err(RecvTimeoutError::Disconnected) => return Ok(0),
                },
                None => match self.rx.recv() {
                    Ok(chunk) => chunk,
                    Err(_) => return Ok(0),
                },
            };
            self.pending = next;
            self.pos = 0;
        }
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for MemoryDuplex {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx.send(buf.to_vec()).map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Duplex for MemoryDuplex {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.timeout = timeout;
        Ok(())
    }
}

fn io_error(e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => Error::Transport("read timed out".into()),
        _ => Error::Transport(e.to_string()),
    }
}

/// Reads one LF-terminated line. `None` on a clean end of stream.
fn read_line<R: BufRead>(reader: &mut R, line: &mut Vec<u8>) -> Result<Option<()>> {
    line.clear();
    let n = reader.take(MAX_FRAME).read_until(b'\n', line).map_err(io_error)?;
    if n == 0 {
        return Ok(None);
    }
    if line.last() != Some(&b'\n') && n as u64 == MAX_FRAME {
        return Err(Error::Transport(format!("frame longer than {MAX_FRAME} bytes")));
    }
    Ok(Some(()))
}

/// Protocol channel with grammar checking in both directions.
struct Framed<S: Duplex> {
    io: BufReader<S>,
    grammar: RoundGrammar,
    transcript: Vec<Message>,
    line: Vec<u8>,
}

impl<S: Duplex> Framed<S> {
    fn new(mut stream: S, read_timeout: Option<Duration>) -> Result<Self> {
        stream.set_read_timeout(read_timeout).map_err(io_error)?;
        Ok(Framed { io: BufReader::new(stream), grammar: RoundGrammar::new(), transcript: Vec::new(), line: Vec::new() })
    }

    fn send(&mut self, msg: Message) -> Result<()> {
        self.grammar.accept(msg.kind()).map_err(Error::Protocol)?;
        let out = self.io.get_mut();
        out.write_all(&encode_message(&msg)).map_err(io_error)?;
        out.flush().map_err(io_error)?;
        self.transcript.push(msg);
        Ok(())
    }

    /// Best effort; the session is ending either way.
    fn send_abort(&mut self, round: u64, reason: &str) {
        let _ = self.send(Message::new(round, Body::Abort { reason: reason.to_string() }));
    }

    fn recv(&mut self, round: u64) -> Result<Message> {
        if read_line(&mut self.io, &mut self.line)?.is_none() {
            return Err(Error::Transport("peer closed the connection".into()));
        }
        let msg = decode_message(&self.line)?;
        self.grammar.accept(msg.kind()).map_err(Error::Protocol)?;
        self.transcript.push(msg.clone());
        if let Body::Abort { reason } = &msg.body {
            return Err(Error::Protocol(format!("peer aborted: {reason}")));
        }
        if msg.round != round {
            return Err(Error::Protocol(format!("expected round {round}, got {}", msg.round)));
        }
        Ok(msg)
    }
}

/// The measurements Bob can perform on a box the host has handed him.
pub trait Nature {
    fn open_box_b(&mut self, state_ref: StateRef, beta: f64) -> Result<bool>;
    fn verify(&mut self, state_ref: StateRef) -> Result<bool>;
}

fn lock(referee: &SharedReferee) -> Result<std::sync::MutexGuard<'_, Referee>> {
    referee.lock().map_err(|_| Error::Internal("referee lock poisoned".into()))
}

impl Nature for SharedReferee {
    fn open_box_b(&mut self, state_ref: StateRef, beta: f64) -> Result<bool> {
        lock(self)?.open_box_b(state_ref, beta)
    }

    fn verify(&mut self, state_ref: StateRef) -> Result<bool> {
        lock(self)?.verify(state_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum NatureRequest {
    OpenBoxB { state_ref: StateRef, beta: f64 },
    Verify { state_ref: StateRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NatureReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Nature reached over a nature channel.
pub struct RemoteNature<S: Duplex> {
    io: BufReader<S>,
    line: Vec<u8>,
}

impl<S: Duplex> RemoteNature<S> {
    pub fn new(mut stream: S, read_timeout: Option<Duration>) -> Result<Self> {
        stream.set_read_timeout(read_timeout).map_err(io_error)?;
        Ok(RemoteNature { io: BufReader::new(stream), line: Vec::new() })
    }

    fn request(&mut self, req: NatureRequest) -> Result<bool> {
        let mut bytes = serde_json::to_vec(&req).expect("requests always serialize");
        bytes.push(b'\n');
        let out = self.io.get_mut();
        out.write_all(&bytes).map_err(io_error)?;
        out.flush().map_err(io_error)?;
        if read_line(&mut self.io, &mut self.line)?.is_none() {
            return Err(Error::Transport("nature channel closed".into()));
        }
        let reply: NatureReply = serde_json::from_slice(&self.line)
            .map_err(|e| Error::Transport(format!("bad nature reply: {e}")))?;
        match reply {
            NatureReply { outcome: Some(o), error: None } => Ok(o),
            NatureReply { error: Some(e), .. } => Err(Error::Protocol(e)),
            _ => Err(Error::Transport("empty nature reply".into())),
        }
    }
}

impl<S: Duplex> Nature for RemoteNature<S> {
    fn open_box_b(&mut self, state_ref: StateRef, beta: f64) -> Result<bool> {
        self.request(NatureRequest::OpenBoxB { state_ref, beta })
    }

    fn verify(&mut self, state_ref: StateRef) -> Result<bool> {
        self.request(NatureRequest::Verify { state_ref })
    }
}

/// Answers nature requests against `referee` until the peer hangs up.
pub fn serve_nature<S: Duplex>(stream: S, referee: SharedReferee) -> Result<()> {
    let mut io = BufReader::new(stream);
    let mut line = Vec::new();
    let mut nature = referee;
    while read_line(&mut io, &mut line)?.is_some() {
        let result = match serde_json::from_slice::<NatureRequest>(&line) {
            Ok(NatureRequest::OpenBoxB { state_ref, beta }) => nature.open_box_b(state_ref, beta),
            Ok(NatureRequest::Verify { state_ref }) => nature.verify(state_ref),
            Err(e) => Err(Error::Protocol(format!("bad nature request: {e}"))),
        };
        let reply = match result {
            Ok(o) => NatureReply { outcome: Some(o), error: None },
            Err(e) => NatureReply { outcome: None, error: Some(e.to_string()) },
        };
        let mut bytes = serde_json::to_vec(&reply).expect("replies always serialize");
        bytes.push(b'\n');
        let out = io.get_mut();
        out.write_all(&bytes).map_err(io_error)?;
        out.flush().map_err(io_error)?;
    }
    Ok(())
}

/// What the host ends with.
#[derive(Debug, Clone)]
pub struct HostRun {
    pub ledger: Ledger,
    /// Every protocol frame sent or received, in order.
    pub transcript: Vec<Message>,
}

#[allow(clippy::too_many_arguments)]
fn host_round<S: Duplex>(
    framed: &mut Framed<S>,
    referee: &SharedReferee,
    config: &GameConfig,
    alice: &AlicePolicy,
    round: u64,
    n_rounds: u64,
    commitment: &str,
    rng: &mut SimRng,
) -> Result<RoundRecord> {
    let draws = RoundDraws::draw(rng);
    let (alpha, spot_check) = alice.choose(config, draws.coin)?;
    let state_ref = lock(referee)?.prepare(round, alpha, spot_check, draws)?;
    framed.send(Message::new(
        round,
        Body::Agree { gamma: config.gamma, r: config.r_gain, n_rounds, seed_commitment: commitment.to_string() },
    ))?;
    framed.send(Message::new(round, Body::BoxB { state_ref }))?;
    let claim = match framed.recv(round)?.body {
        Body::FoundClaim { found: true } => RoundOutcome::FoundInB,
        Body::FoundClaim { found: false } => return Err(Error::Protocol("found_claim with found = false".into())),
        Body::RequestA {} => {
            framed.send(Message::new(round, Body::BoxA { state_ref }))?;
            match framed.recv(round)?.body {
                Body::VerifyClaim { mismatch: true } => RoundOutcome::VerifiedMismatch,
                Body::VerifyClaim { mismatch: false } => RoundOutcome::VerifiedMatch,
                other => return Err(Error::Protocol(format!("unexpected {:?}", other.kind()))),
            }
        }
        other => return Err(Error::Protocol(format!("unexpected {:?}", other.kind()))),
    };
    let record = lock(referee)?.settle(claim, alice.penalty())?;
    framed.send(Message::new(round, Body::Settle { bob_delta: record.settlement_bob }))?;
    Ok(record)
}

/// Runs Alice's side on the protocol channel. The referee must be shared with
/// whatever serves the guest's nature channel.
pub fn host_session<S: Duplex>(
    proto: S,
    referee: &SharedReferee,
    alice: &AlicePolicy,
    n_rounds: u64,
    seed: u64,
    opts: &SessionOptions,
) -> Result<HostRun> {
    let config = *lock(referee)?.config();
    alice.validate()?;
    if n_rounds == 0 {
        return Err(Error::domain("a session needs at least one round"));
    }
    let mut framed = Framed::new(proto, opts.read_timeout)?;
    let commitment = seed_commitment(seed);
    let mut rng = stream(seed, 0);
    let mut ledger = Ledger::new(config, seed);
    for round in 0..n_rounds {
        match host_round(&mut framed, referee, &config, alice, round, n_rounds, &commitment, &mut rng) {
            Ok(rec) => {
                let caught = rec.lie_detected;
                ledger.push(rec);
                if caught && opts.lie_response == LieResponse::Abort {
                    let reason = lie_abort_reason(round);
                    framed.send_abort(round, &reason);
                    ledger.aborted = Some(reason);
                    break;
                }
            }
            Err(e) => {
                let reason = e.to_string();
                framed.send_abort(round, &reason);
                ledger.aborted = Some(reason);
                break;
            }
        }
    }
    Ok(HostRun { ledger, transcript: framed.transcript })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GuestOptions {
    /// Hang up after this many settled rounds.
    pub leave_after: Option<u64>,
    pub read_timeout: Option<Duration>,
}

/// What the guest saw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuestReport {
    pub config: Option<GameConfig>,
    pub rounds: u64,
    pub bob_total: f64,
    pub aborted: Option<String>,
}

fn guest_round<S: Duplex, N: Nature>(
    framed: &mut Framed<S>,
    nature: &mut N,
    bob: &BobPolicy,
    round: u64,
    report: &mut GuestReport,
    n_rounds: &mut Option<u64>,
) -> Result<()> {
    let Body::Agree { gamma, r, n_rounds: n, .. } = framed.recv(round)?.body else {
        unreachable!("grammar admits only agree here");
    };
    let config = GameConfig::new(gamma, r)?;
    match (report.config, *n_rounds) {
        (None, None) => {
            report.config = Some(config);
            *n_rounds = Some(n);
        }
        (Some(c), Some(prev)) if c == config && prev == n => {}
        _ => return Err(Error::Protocol("terms changed mid-session".into())),
    }
    let Body::BoxB { state_ref } = framed.recv(round)?.body else {
        unreachable!("grammar admits only box_b here");
    };
    let beta = bob.beta(&config)?;
    if nature.open_box_b(state_ref, beta)? {
        framed.send(Message::new(round, Body::FoundClaim { found: true }))?;
    } else {
        framed.send(Message::new(round, Body::RequestA {}))?;
        let Body::BoxA { state_ref: a_ref } = framed.recv(round)?.body else {
            unreachable!("grammar admits only box_a here");
        };
        let claim = bob.claim(nature.verify(a_ref)?);
        framed.send(Message::new(round, Body::VerifyClaim { mismatch: claim == RoundOutcome::VerifiedMismatch }))?;
    }
    let Body::Settle { bob_delta } = framed.recv(round)?.body else {
        unreachable!("grammar admits only settle here");
    };
    report.bob_total += bob_delta;
    report.rounds += 1;
    Ok(())
}

/// Runs Bob's side until the host's announced round count is reached, the
/// host aborts, or `leave_after` rounds have been played.
pub fn guest_session<S: Duplex, N: Nature>(
    proto: S,
    mut nature: N,
    bob: &BobPolicy,
    opts: &GuestOptions,
) -> Result<GuestReport> {
    bob.validate()?;
    let mut framed = Framed::new(proto, opts.read_timeout)?;
    let mut report = GuestReport { config: None, rounds: 0, bob_total: 0.0, aborted: None };
    let mut n_rounds = None;
    let mut round = 0;
    loop {
        if n_rounds.is_some_and(|n| round >= n) {
            break;
        }
        if opts.leave_after.is_some_and(|k| round >= k) {
            report.aborted = Some(format!("left after {round} rounds"));
            break;
        }
        if let Err(e) = guest_round(&mut framed, &mut nature, bob, round, &mut report, &mut n_rounds) {
            let reason = e.to_string();
            if !reason.starts_with("peer aborted") {
                framed.send_abort(round, &reason);
            }
            report.aborted = Some(reason);
            break;
        }
        round += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "channel", rename_all = "snake_case")]
enum Hello {
    Protocol,
    Nature,
}

fn read_hello(stream: &mut TcpStream) -> Result<Hello> {
    // byte at a time so nothing past the hello is consumed
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    while line.len() < 256 {
        if stream.read(&mut byte).map_err(io_error)? == 0 {
            return Err(Error::Transport("connection closed before hello".into()));
        }
        if byte[0] == b'\n' {
            return serde_json::from_slice(&line).map_err(|e| Error::Protocol(format!("bad hello: {e}")));
        }
        line.push(byte[0]);
    }
    Err(Error::Protocol("hello too long".into()))
}

/// Accepts the guest's two connections, returning `(protocol, nature)`.
pub fn accept_guest(listener: &TcpListener) -> Result<(TcpStream, TcpStream)> {
    let mut proto = None;
    let mut nature = None;
    while proto.is_none() || nature.is_none() {
        let (mut s, _) = listener.accept().map_err(io_error)?;
        s.set_read_timeout(Some(Duration::from_secs(10))).map_err(io_error)?;
        let slot = match read_hello(&mut s)? {
            Hello::Protocol => &mut proto,
            Hello::Nature => &mut nature,
        };
        if slot.is_some() {
            return Err(Error::Protocol("channel opened twice".into()));
        }
        s.set_read_timeout(None).map_err(io_error)?;
        *slot = Some(s);
    }
    Ok((proto.unwrap(), nature.unwrap()))
}

/// Opens both channels to a host, returning `(protocol, nature)`.
pub fn connect_host<A: ToSocketAddrs + Copy>(addr: A) -> Result<(TcpStream, TcpStream)> {
    let open = |hello: Hello| -> Result<TcpStream> {
        let mut s = TcpStream::connect(addr).map_err(io_error)?;
        s.set_nodelay(true).map_err(io_error)?;
        let mut bytes = serde_json::to_vec(&hello).expect("hello serializes");
        bytes.push(b'\n');
        s.write_all(&bytes).map_err(io_error)?;
        Ok(s)
    };
    Ok((open(Hello::Protocol)?, open(Hello::Nature)?))
}

/// Runs `host` and `guest` sessions against each other over either in-memory
/// pipes or loopback TCP, with the referee served over a nature channel.
pub fn run_session_over_transport(
    config: &GameConfig,
    alice: &AlicePolicy,
    bob: &BobPolicy,
    n_rounds: u64,
    seed: u64,
    kind: TransportKind,
) -> Result<Ledger> {
    run_session_over_transport_with(config, alice, bob, n_rounds, seed, kind, &SessionOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Memory,
    Loopback,
}

pub fn run_session_over_transport_with(
    config: &GameConfig,
    alice: &AlicePolicy,
    bob: &BobPolicy,
    n_rounds: u64,
    seed: u64,
    kind: TransportKind,
    opts: &SessionOptions,
) -> Result<Ledger> {
    validate_session(config, alice, bob, n_rounds)?;
    let guest_opts = GuestOptions { leave_after: None, read_timeout: opts.read_timeout };
    let referee: SharedReferee = Arc::new(Mutex::new(Referee::new(*config)));
    let run = match kind {
        TransportKind::Memory => {
            let (host_proto, guest_proto) = memory_pair();
            let (host_nature, guest_nature) = memory_pair();
            let nature = RemoteNature::new(guest_nature, opts.read_timeout)?;
            play(host_proto, host_nature, guest_proto, nature, &referee, alice, bob, n_rounds, seed, opts, &guest_opts)
        }
        TransportKind::Loopback => {
            let listener = TcpListener::bind("127.0.0.1:0").map_err(io_error)?;
            let addr = listener.local_addr().map_err(io_error)?;
            let (guest_proto, guest_nature) = connect_host(addr)?;
            let (host_proto, host_nature) = accept_guest(&listener)?;
            host_proto.set_nodelay(true).map_err(io_error)?;
            let nature = RemoteNature::new(guest_nature, opts.read_timeout)?;
            play(host_proto, host_nature, guest_proto, nature, &referee, alice, bob, n_rounds, seed, opts, &guest_opts)
        }
    }?;
    Ok(run.ledger)
}

#[allow(clippy::too_many_arguments)]
fn play<S: Duplex, T: Duplex, U: Duplex, V: Duplex>(
    host_proto: S,
    host_nature: T,
    guest_proto: U,
    guest_nature: RemoteNature<V>,
    referee: &SharedReferee,
    alice: &AlicePolicy,
    bob: &BobPolicy,
    n_rounds: u64,
    seed: u64,
    opts: &SessionOptions,
    guest_opts: &GuestOptions,
) -> Result<HostRun> {
    std::thread::scope(|scope| {
        let served = Arc::clone(referee);
        scope.spawn(move || serve_nature(host_nature, served));
        scope.spawn(move || guest_session(guest_proto, guest_nature, bob, guest_opts));
        host_session(host_proto, referee, alice, n_rounds, seed, opts)
    })
}
