//! Coordinator and participant client over newline-delimited JSON on TCP.
//!
//! Every line is an envelope `{"v": <version>, "kind": <kind>, "payload":
//! {...}}`. A participant registers its id and label space, receives the
//! public dataset's size and content hash, uploads its prediction vector,
//! and gets back only its own bundle. The public dataset itself never
//! crosses the wire; both sides load it out of band.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{ConflictScope, CredibilityWeights, PseudolabelBundle, PseudolabelSet, PseudolabelSets};
use crate::domain::{csv_io, CategoryId, LabelSpace, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::learners::PredictionVector;
use crate::orchestrator::{aggregate_round, local_phase, participant_report, update_phase, ParticipantReport, ParticipantSetup};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_MAX_LINE: usize = 64 * 1024 * 1024;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Register {
    pub participant: u32,
    pub label_space: Vec<CategoryId>,
    /// Size of the private training set. Only the count is sent.
    pub n_local: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterAck {
    pub participant: u32,
    pub m: usize,
    pub dataset_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictions {
    pub participant: u32,
    pub labels: Vec<CategoryId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEntry {
    pub category: CategoryId,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub participant: u32,
    pub entries: Vec<BundleEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorText {
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bye {
    pub participant: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Register(Register),
    RegisterAck(RegisterAck),
    Predictions(Predictions),
    Bundle(Bundle),
    Error(ErrorText),
    Bye(Bye),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    v: u32,
    kind: String,
    payload: Value,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Register(_) => "REGISTER",
            Message::RegisterAck(_) => "REGISTER_ACK",
            Message::Predictions(_) => "PREDICTIONS",
            Message::Bundle(_) => "BUNDLE",
            Message::Error(_) => "ERROR",
            Message::Bye(_) => "BYE",
        }
    }

    pub fn error(message: impl Into<String>) -> Message {
        Message::Error(ErrorText { message: message.into() })
    }

    /// One protocol line, without the trailing newline.
    pub fn encode(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a, T> {
            v: u32,
            kind: &'a str,
            payload: &'a T,
        }
        fn line<T: Serialize>(kind: &str, payload: &T) -> String {
            let out = Out {
                v: PROTOCOL_VERSION,
                kind,
                payload,
            };
            serde_json::to_string(&out).expect("messages serialize")
        }
        let k = self.kind();
        match self {
            Message::Register(p) => line(k, p),
            Message::RegisterAck(p) => line(k, p),
            Message::Predictions(p) => line(k, p),
            Message::Bundle(p) => line(k, p),
            Message::Error(p) => line(k, p),
            Message::Bye(p) => line(k, p),
        }
    }

    /// Parses and schema-checks one line. Unknown kinds, unknown fields and
    /// version mismatches are errors.
    pub fn decode(line: &str) -> Result<Message> {
        let env: Envelope =
            serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
        if env.v != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "protocol version {} is not supported (expected {PROTOCOL_VERSION})",
                env.v
            )));
        }
        fn payload<T: serde::de::DeserializeOwned>(kind: &str, v: Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::Protocol(format!("malformed {kind} payload: {e}")))
        }
        let k = env.kind.as_str();
        Ok(match k {
            "REGISTER" => Message::Register(payload(k, env.payload)?),
            "REGISTER_ACK" => Message::RegisterAck(payload(k, env.payload)?),
            "PREDICTIONS" => Message::Predictions(payload(k, env.payload)?),
            "BUNDLE" => Message::Bundle(payload(k, env.payload)?),
            "ERROR" => Message::Error(payload(k, env.payload)?),
            "BYE" => Message::Bye(payload(k, env.payload)?),
            other => return Err(Error::Protocol(format!("unknown message kind {other:?}"))),
        })
    }
}

impl Bundle {
    pub fn from_bundle(b: &PseudolabelBundle) -> Bundle {
        Bundle {
            participant: b.owner(),
            entries: b
                .entries()
                .map(|(&category, set)| BundleEntry {
                    category,
                    indices: set.indices().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the bundle, checking categories against `space`, index
    /// ranges against `m`, and that no index carries two labels.
    pub fn into_bundle(self, space: &LabelSpace, m: usize) -> Result<PseudolabelBundle> {
        let mut entries = BTreeMap::new();
        for e in self.entries {
            if let Some(&i) = e.indices.iter().find(|&&i| i >= m) {
                return Err(Error::IndexOutOfRange { index: i, size: m });
            }
            if entries.insert(e.category, PseudolabelSet::new(e.indices)).is_some() {
                return Err(Error::Protocol(format!("category {} appears twice in a bundle", e.category)));
            }
        }
        PseudolabelBundle::new(self.participant, entries, space)
    }
}

/// A line-oriented connection with a maximum line length.
pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    max_line: usize,
}

impl Connection {
    pub fn new(stream: TcpStream, max_line: usize) -> Result<Connection> {
        let writer = stream.try_clone()?;
        Ok(Connection {
            reader: BufReader::new(stream),
            writer,
            max_line,
        })
    }

    pub fn connect(addr: impl ToSocketAddrs, max_line: usize) -> Result<Connection> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Connection::new(stream, max_line)
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<()> {
        self.writer.set_read_timeout(timeout)?;
        Ok(())
    }

    pub fn stream(&self) -> &TcpStream {
        &self.writer
    }

    pub fn send_line(&mut self, line: &str) -> Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_line(&msg.encode())
    }

    /// Next line without its terminator, or `None` at end of stream.
    pub fn recv_line(&mut self) -> Result<Option<String>> {
        let mut buf = Vec::new();
        let n = (&mut self.reader)
            .take(self.max_line as u64 + 1)
            .read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(None);
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        } else if buf.len() > self.max_line {
            return Err(Error::Protocol(format!("line exceeds {} bytes", self.max_line)));
        }
        String::from_utf8(buf)
            .map(Some)
            .map_err(|_| Error::Protocol("line is not valid UTF-8".into()))
    }

    pub fn recv(&mut self) -> Result<Message> {
        match self.recv_line()? {
            Some(line) => Message::decode(&line),
            None => Err(Error::Protocol("connection closed by peer".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Inbound,
    Outbound,
}

/// A raw protocol line as seen by the coordinator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CapturedMessage {
    pub participant: Option<u32>,
    pub direction: Direction,
    pub line: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServeConfig {
    /// Expected participant ids with their credibility weights, in the
    /// order votes are summed.
    pub participants: Vec<(u32, f64)>,
    pub alpha: f64,
    pub conflict_scope: ConflictScope,
    pub public_size: usize,
    pub dataset_hash: String,
    /// Longest the coordinator waits without any registration or upload
    /// before aborting the round.
    pub timeout: Duration,
    pub max_line: usize,
    pub capture: bool,
}

impl ServeConfig {
    pub fn new(participants: Vec<(u32, f64)>, alpha: f64, public: &UnlabeledDataset) -> ServeConfig {
        ServeConfig {
            participants,
            alpha,
            conflict_scope: ConflictScope::default(),
            public_size: public.len(),
            dataset_hash: csv_io::content_hash(public),
            timeout: DEFAULT_TIMEOUT,
            max_line: DEFAULT_MAX_LINE,
            capture: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.participants.is_empty() {
            return Err(Error::Config("the coordinator needs at least one participant".into()));
        }
        let mut ids: Vec<u32> = self.participants.iter().map(|p| p.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("participant ids must be distinct".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.public_size == 0 {
            return Err(Error::Config("the public dataset is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RoundPhase {
    Registering,
    Collecting,
    Aggregated,
    Closed,
}

/// Coordinator bookkeeping, shared by all connection handlers.
#[derive(Debug)]
pub struct RoundState {
    pub expected: usize,
    pub registrations: BTreeMap<u32, LabelSpace>,
    pub predictions: BTreeMap<u32, PredictionVector>,
    pub phase: RoundPhase,
    bundles: BTreeMap<u32, PseudolabelBundle>,
    sets: Option<PseudolabelSets>,
    aborted: Option<String>,
    last_progress: Instant,
}

impl RoundState {
    fn new(expected: usize) -> RoundState {
        RoundState {
            expected,
            registrations: BTreeMap::new(),
            predictions: BTreeMap::new(),
            phase: RoundPhase::Registering,
            bundles: BTreeMap::new(),
            sets: None,
            aborted: None,
            last_progress: Instant::now(),
        }
    }

    fn abort(&mut self, reason: String) {
        if self.aborted.is_none() && self.phase < RoundPhase::Aggregated {
            log::warn!("round aborted: {reason}");
            self.aborted = Some(reason);
        }
    }
}

struct Shared<'a> {
    config: &'a ServeConfig,
    state: Mutex<RoundState>,
    changed: Condvar,
    captured: Mutex<Vec<CapturedMessage>>,
    streams: Mutex<Vec<TcpStream>>,
}

impl Shared<'_> {
    fn capture(&self, participant: Option<u32>, direction: Direction, line: &str) {
        if self.config.capture {
            self.captured.lock().unwrap().push(CapturedMessage {
                participant,
                direction,
                line: line.to_string(),
            });
        }
    }

    fn send(&self, conn: &mut Connection, participant: Option<u32>, msg: &Message) -> Result<()> {
        let line = msg.encode();
        self.capture(participant, Direction::Outbound, &line);
        conn.send_line(&line)
    }

    fn recv(&self, conn: &mut Connection, participant: Option<u32>) -> Result<Message> {
        match conn.recv_line()? {
            Some(line) => {
                self.capture(participant, Direction::Inbound, &line);
                Message::decode(&line)
            }
            None => Err(Error::Protocol("connection closed by peer".into())),
        }
    }

    fn abort(&self, reason: String) {
        self.state.lock().unwrap().abort(reason);
        self.changed.notify_all();
        // Wake handlers blocked on reads so they can report the abort.
        for s in self.streams.lock().unwrap().iter() {
            let _ = s.shutdown(Shutdown::Read);
        }
    }
}

/// What the coordinator saw and computed during one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ServeOutcome {
    pub participants: Vec<u32>,
    pub label_spaces: Vec<LabelSpace>,
    pub predictions: Vec<PredictionVector>,
    pub sets: PseudolabelSets,
    pub bundles: Vec<PseudolabelBundle>,
    pub messages: Vec<CapturedMessage>,
}

/// Runs the coordinator for one round on `listener` and returns once every
/// participant has received its bundle, or with an error if the round
/// aborts.
pub fn serve(listener: TcpListener, config: &ServeConfig) -> Result<ServeOutcome> {
    config.validate()?;
    listener.set_nonblocking(true)?;
    let shared = Shared {
        config,
        state: Mutex::new(RoundState::new(config.participants.len())),
        changed: Condvar::new(),
        captured: Mutex::new(Vec::new()),
        streams: Mutex::new(Vec::new()),
    };

    std::thread::scope(|scope| -> Result<()> {
        let mut handlers = Vec::new();
        loop {
            {
                let st = shared.state.lock().unwrap();
                if st.aborted.is_some() || st.phase >= RoundPhase::Aggregated {
                    break;
                }
                if st.last_progress.elapsed() > config.timeout {
                    let reason = format!(
                        "timed out after {:?} waiting for participants ({} of {} registered, {} predictions received)",
                        config.timeout,
                        st.registrations.len(),
                        st.expected,
                        st.predictions.len()
                    );
                    drop(st);
                    shared.abort(reason);
                    break;
                }
            }
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("connection from {peer}");
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    if let Ok(clone) = stream.try_clone() {
                        shared.streams.lock().unwrap().push(clone);
                    }
                    let sh = &shared;
                    handlers.push(scope.spawn(move || handle_connection(sh, stream)));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        for h in handlers {
            let _ = h.join();
        }
        Ok(())
    })?;

    let mut st = shared.state.into_inner().unwrap();
    if let Some(reason) = st.aborted.take() {
        return Err(Error::Protocol(reason));
    }
    st.phase = RoundPhase::Closed;
    let ids: Vec<u32> = config.participants.iter().map(|p| p.0).collect();
    Ok(ServeOutcome {
        label_spaces: ids.iter().map(|id| st.registrations[id].clone()).collect(),
        predictions: ids.iter().map(|id| st.predictions[id].clone()).collect(),
        bundles: ids.iter().map(|id| st.bundles[id].clone()).collect(),
        sets: st.sets.take().unwrap_or_default(),
        participants: ids,
        messages: shared.captured.into_inner().unwrap(),
    })
}

fn handle_connection(shared: &Shared, stream: TcpStream) {
    let mut conn = match Connection::new(stream, shared.config.max_line) {
        Ok(c) => c,
        Err(_) => return,
    };
    run_connection(shared, &mut conn);
    // The coordinator keeps a clone of every stream, so dropping ours does
    // not close the socket.
    let _ = conn.stream().shutdown(Shutdown::Both);
}

fn run_connection(shared: &Shared, conn: &mut Connection) {
    let _ = conn.set_timeout(Some(shared.config.timeout));
    let id = match register(shared, conn) {
        Ok(id) => id,
        Err(e) => {
            // Rejected before joining the round; the round carries on.
            let _ = shared.send(conn, None, &Message::error(e.to_string()));
            return;
        }
    };
    if let Err(e) = collect(shared, conn, id) {
        shared.abort(format!("participant {id}: {e}"));
        let reason = shared.state.lock().unwrap().aborted.clone().unwrap_or_else(|| e.to_string());
        let _ = shared.send(conn, Some(id), &Message::error(reason));
        return;
    }
    // Wait for an optional goodbye; the round is already complete.
    let _ = conn.set_timeout(Some(shared.config.timeout));
    let _ = shared.recv(conn, Some(id));
}

fn register(shared: &Shared, conn: &mut Connection) -> Result<u32> {
    let reg = match shared.recv(conn, None)? {
        Message::Register(r) => r,
        other => return Err(Error::Protocol(format!("expected REGISTER, got {}", other.kind()))),
    };
    let id = reg.participant;
    if reg.n_local == 0 {
        return Err(Error::Protocol(format!("participant {id} has an empty local dataset")));
    }
    let space = LabelSpace::new(reg.label_space).map_err(|e| Error::Protocol(format!("participant {id}: {e}")))?;
    let config = shared.config;
    if !config.participants.iter().any(|p| p.0 == id) {
        return Err(Error::Protocol(format!("participant {id} is not expected in this round")));
    }
    {
        let mut st = shared.state.lock().unwrap();
        if let Some(reason) = &st.aborted {
            return Err(Error::Protocol(format!("round aborted: {reason}")));
        }
        if st.registrations.contains_key(&id) {
            return Err(Error::Protocol(format!("participant {id} is already registered")));
        }
        st.registrations.insert(id, space);
        st.last_progress = Instant::now();
        if st.registrations.len() == st.expected {
            st.phase = RoundPhase::Collecting;
        }
    }
    shared.changed.notify_all();
    log::info!("participant {id} registered");
    let ack = Message::RegisterAck(RegisterAck {
        participant: id,
        m: config.public_size,
        dataset_hash: config.dataset_hash.clone(),
    });
    shared.send(conn, Some(id), &ack)?;
    Ok(id)
}

fn collect(shared: &Shared, conn: &mut Connection, id: u32) -> Result<()> {
    // Inbound reads wait for local training, which the straggler timeout
    // on the accept loop already bounds.
    let _ = conn.set_timeout(None);
    let preds = match shared.recv(conn, Some(id))? {
        Message::Predictions(p) => p,
        Message::Error(e) => return Err(Error::Protocol(format!("participant reported: {}", e.message))),
        other => return Err(Error::Protocol(format!("expected PREDICTIONS, got {}", other.kind()))),
    };
    if preds.participant != id {
        return Err(Error::Protocol(format!(
            "predictions labeled for participant {} on the connection of participant {id}",
            preds.participant
        )));
    }
    let vector = PredictionVector::new(preds.labels);
    {
        let mut st = shared.state.lock().unwrap();
        if let Some(reason) = &st.aborted {
            return Err(Error::Protocol(reason.clone()));
        }
        vector.validate(&st.registrations[&id], shared.config.public_size)?;
        st.predictions.insert(id, vector);
        st.last_progress = Instant::now();
        log::info!("participant {id} uploaded predictions ({}/{})", st.predictions.len(), st.expected);
        if st.predictions.len() == st.expected && st.phase == RoundPhase::Collecting {
            aggregate_locked(shared.config, &mut st)?;
        }
    }
    shared.changed.notify_all();

    let bundle = {
        let mut st = shared.state.lock().unwrap();
        loop {
            if let Some(reason) = &st.aborted {
                return Err(Error::Protocol(reason.clone()));
            }
            if st.phase >= RoundPhase::Aggregated {
                break st.bundles[&id].clone();
            }
            st = shared.changed.wait(st).unwrap();
        }
    };
    shared.send(conn, Some(id), &Message::Bundle(Bundle::from_bundle(&bundle)))
}

/// Runs once, under the state lock, when the last prediction arrives.
fn aggregate_locked(config: &ServeConfig, st: &mut RoundState) -> Result<()> {
    let ids: Vec<u32> = config.participants.iter().map(|p| p.0).collect();
    let predictions: Vec<PredictionVector> = ids.iter().map(|id| st.predictions[id].clone()).collect();
    let spaces: Vec<LabelSpace> = ids.iter().map(|id| st.registrations[id].clone()).collect();
    let weights = CredibilityWeights(config.participants.iter().map(|p| p.1).collect());
    let (sets, bundles) = aggregate_round(
        &predictions,
        &spaces,
        &ids,
        &weights,
        config.alpha,
        config.public_size,
        config.conflict_scope,
    )?;
    st.bundles = ids.iter().copied().zip(bundles).collect();
    st.sets = Some(sets);
    st.phase = RoundPhase::Aggregated;
    log::info!("aggregated {} pseudolabels", st.sets.as_ref().map_or(0, |s| s.total_pseudolabels()));
    Ok(())
}

#[derive(Clone, Debug)]
pub struct JoinOptions {
    pub max_line: usize,
    /// Read timeout while waiting on the coordinator; `None` waits
    /// indefinitely.
    pub timeout: Option<Duration>,
}

impl Default for JoinOptions {
    fn default() -> Self {
        JoinOptions {
            max_line: DEFAULT_MAX_LINE,
            timeout: Some(Duration::from_secs(600)),
        }
    }
}

/// A participant's view of a completed round.
#[derive(Debug)]
pub struct JoinOutcome {
    pub report: ParticipantReport,
    pub predictions: PredictionVector,
    pub bundle: PseudolabelBundle,
    pub federated_predictions: PredictionVector,
}

/// Runs one participant against a coordinator: register, train locally,
/// upload predictions, receive the bundle and update-train.
pub fn join(
    addr: impl ToSocketAddrs,
    participant: &ParticipantSetup,
    public: &UnlabeledDataset,
    master_seed: u64,
    options: &JoinOptions,
) -> Result<JoinOutcome> {
    let id = participant.id;
    let mut conn = Connection::connect(addr, options.max_line)?;
    conn.set_timeout(options.timeout)?;
    conn.send(&Message::Register(Register {
        participant: id,
        label_space: participant.label_space.categories().to_vec(),
        n_local: participant.train.len(),
    }))?;
    let ack = match conn.recv()? {
        Message::RegisterAck(a) => a,
        Message::Error(e) => return Err(Error::Protocol(format!("registration rejected: {}", e.message))),
        other => return Err(Error::Protocol(format!("expected REGISTER_ACK, got {}", other.kind()))),
    };
    let hash = csv_io::content_hash(public);
    if ack.m != public.len() || ack.dataset_hash != hash {
        let msg = format!(
            "public dataset hash mismatch: coordinator has {} rows with hash {}, local file has {} rows with hash {hash}",
            ack.m,
            ack.dataset_hash,
            public.len()
        );
        let _ = conn.send(&Message::error(msg.clone()));
        return Err(Error::Protocol(msg));
    }

    let local = match local_phase(participant, public, master_seed) {
        Ok(l) => l,
        Err(e) => {
            let _ = conn.send(&Message::error(e.to_string()));
            return Err(e);
        }
    };
    conn.send(&Message::Predictions(Predictions {
        participant: id,
        labels: local.predictions.labels.clone(),
    }))?;
    let wire = match conn.recv()? {
        Message::Bundle(b) => b,
        Message::Error(e) => return Err(Error::Protocol(format!("coordinator aborted the round: {}", e.message))),
        other => return Err(Error::Protocol(format!("expected BUNDLE, got {}", other.kind()))),
    };
    if wire.participant != id {
        return Err(Error::Protocol(format!("received the bundle of participant {}", wire.participant)));
    }
    let bundle = wire.into_bundle(&participant.label_space, public.len())?;
    let _ = conn.send(&Message::Bye(Bye { participant: id }));

    let update = update_phase(participant, &bundle, public, master_seed)?;
    Ok(JoinOutcome {
        report: participant_report(
            participant,
            bundle.len(),
            local.phase1_accuracy,
            update.local_accuracy,
            update.federated_accuracy,
        ),
        predictions: local.predictions,
        bundle,
        federated_predictions: update.federated_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_round_trip() {
        let msgs = [
            Message::Register(Register {
                participant: 3,
                label_space: vec![CategoryId(1), CategoryId(4)],
                n_local: 10,
            }),
            Message::RegisterAck(RegisterAck {
                participant: 3,
                m: 5,
                dataset_hash: "ab".into(),
            }),
            Message::Predictions(Predictions {
                participant: 3,
                labels: vec![CategoryId(1); 5],
            }),
            Message::Bundle(Bundle {
                participant: 3,
                entries: vec![BundleEntry {
                    category: CategoryId(4),
                    indices: vec![0, 2],
                }],
            }),
            Message::error("nope"),
            Message::Bye(Bye { participant: 3 }),
        ];
        for m in msgs {
            let line = m.encode();
            assert!(!line.contains('\n'));
            assert_eq!(Message::decode(&line).unwrap(), m);
        }
    }

    #[test]
    fn wire_format_is_envelope() {
        let line = Message::Bye(Bye { participant: 2 }).encode();
        assert_eq!(line, r#"{"v":1,"kind":"BYE","payload":{"participant":2}}"#);
        let b = Message::Bundle(Bundle {
            participant: 0,
            entries: vec![BundleEntry {
                category: CategoryId(7),
                indices: vec![1, 3],
            }],
        });
        assert_eq!(
            b.encode(),
            r#"{"v":1,"kind":"BUNDLE","payload":{"participant":0,"entries":[{"category":7,"indices":[1,3]}]}}"#
        );
    }

    #[test]
    fn decode_rejects_bad_lines() {
        for bad in [
            "not json",
            r#"{"v":2,"kind":"BYE","payload":{"participant":1}}"#,
            r#"{"v":1,"kind":"HELLO","payload":{}}"#,
            r#"{"v":1,"kind":"BYE","payload":{"participant":1,"extra":0}}"#,
            r#"{"v":1,"kind":"PREDICTIONS","payload":{"participant":1,"labels":[0.5]}}"#,
        ] {
            assert!(matches!(Message::decode(bad), Err(Error::Protocol(_))), "{bad}");
        }
    }

    #[test]
    fn wire_bundle_checks() {
        let space = LabelSpace::from_ids(&[0, 1]).unwrap();
        let b = Bundle {
            participant: 0,
            entries: vec![
                BundleEntry {
                    category: CategoryId(0),
                    indices: vec![0],
                },
                BundleEntry {
                    category: CategoryId(1),
                    indices: vec![0],
                },
            ],
        };
        assert!(b.into_bundle(&space, 3).is_err());
        let b = Bundle {
            participant: 0,
            entries: vec![BundleEntry {
                category: CategoryId(0),
                indices: vec![3],
            }],
        };
        assert!(matches!(b.into_bundle(&space, 3), Err(Error::IndexOutOfRange { .. })));
    }
}
