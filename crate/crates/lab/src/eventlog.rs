//! Append-only JSONL event logs: one record per line, keys in canonical
//! (sorted) order, flushed after every append.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use consensus_core::engine::{Event, EventKind, GameState, Millis};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Wall time written for game time zero of simulated games.
pub fn virtual_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).single().expect("valid epoch")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallClock {
    /// `wall_ts` is the epoch plus game time, so logs are byte-stable.
    Virtual(DateTime<Utc>),
    Real,
}

impl WallClock {
    fn stamp(&self, at_ms: Millis) -> String {
        let t = match self {
            WallClock::Virtual(epoch) => *epoch + Duration::milliseconds(at_ms as i64),
            WallClock::Real => Utc::now(),
        };
        t.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub schema_version: u32,
    pub game_id: String,
    pub wall_ts: String,
    pub game_clock_s: f64,
    pub kind: String,
    pub payload: Value,
}

impl LogRecord {
    pub fn from_event(seq: u64, game_id: &str, wall_ts: String, event: &Event) -> serde_json::Result<Self> {
        let mut v = serde_json::to_value(&event.kind)?;
        let payload = v.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
        Ok(Self {
            seq,
            schema_version: SCHEMA_VERSION,
            game_id: game_id.to_string(),
            wall_ts,
            game_clock_s: event.at_ms as f64 / 1000.0,
            kind: event.kind.name().to_string(),
            payload,
        })
    }

    pub fn at_ms(&self) -> Millis {
        (self.game_clock_s * 1000.0).round() as Millis
    }

    pub fn event(&self) -> serde_json::Result<Event> {
        let kind: EventKind =
            serde_json::from_value(serde_json::json!({ "kind": self.kind, "payload": self.payload }))?;
        Ok(Event::new(self.at_ms(), kind))
    }

    /// One line, keys sorted.
    pub fn to_line(&self) -> serde_json::Result<String> {
        canonical_json(self)
    }
}

/// Serializes through `Value`, whose maps keep keys sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    serde_json::to_string(&serde_json::to_value(value)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: corrupt record: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: expected seq {expected}, found {found}")]
    Sequence { path: PathBuf, line: usize, expected: u64, found: u64 },
    #[error("{path}:{line}: record belongs to game {found}, log is for {expected}")]
    ForeignGame { path: PathBuf, line: usize, expected: String, found: String },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("serialization failed: {0}")]
    Encode(#[from] serde_json::Error),
}

pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    game_id: String,
    clock: WallClock,
    next_seq: u64,
}

impl LogWriter {
    /// Creates (or truncates) the log at `path`.
    pub fn create(path: &Path, game_id: &str, clock: WallClock) -> Result<Self, LogError> {
        let io = |source| LogError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path).map_err(io)?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file), game_id: game_id.to_string(), clock, next_seq: 1 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: &Event) -> Result<u64, LogError> {
        let seq = self.next_seq;
        let record = LogRecord::from_event(seq, &self.game_id, self.clock.stamp(event.at_ms), event)?;
        self.append_record(&record)?;
        Ok(seq)
    }

    /// Appends an already built record; its seq must be the next one.
    pub fn append_record(&mut self, record: &LogRecord) -> Result<(), LogError> {
        if record.seq != self.next_seq {
            return Err(LogError::Sequence {
                path: self.path.clone(),
                line: self.next_seq as usize,
                expected: self.next_seq,
                found: record.seq,
            });
        }
        let io = |source| LogError::Io { path: self.path.clone(), source };
        let line = record.to_line()?;
        self.out.write_all(line.as_bytes()).map_err(io)?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)?;
        self.next_seq += 1;
        Ok(())
    }
}

/// Contents of a log file. A cut-off last line is skipped and reported.
#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub path: PathBuf,
    pub records: Vec<LogRecord>,
    pub warnings: Vec<String>,
}

impl LoadedLog {
    pub fn game_id(&self) -> Option<&str> {
        self.records.first().map(|r| r.game_id.as_str())
    }

    pub fn events(&self) -> Result<Vec<Event>, LogError> {
        self.records
            .iter()
            .map(|r| {
                r.event().map_err(|e| LogError::Corrupt {
                    path: self.path.clone(),
                    line: r.seq as usize,
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

pub fn read_log(path: &Path) -> Result<LoadedLog, LogError> {
    let io = |source| LogError::Io { path: path.to_path_buf(), source };
    let bytes = std::fs::read(path).map_err(io)?;
    let complete_tail = bytes.last().is_none_or(|b| *b == b'\n');
    let mut raw: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    if complete_tail {
        raw.pop();
    }
    let mut records: Vec<LogRecord> = Vec::with_capacity(raw.len());
    let mut warnings = Vec::new();
    let last = raw.len();
    for (i, line) in raw.into_iter().enumerate() {
        let lineno = i + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<LogRecord>(s).map_err(|e| e.to_string()));
        let record = match parsed {
            Ok(r) => r,
            Err(reason) if lineno == last && !complete_tail => {
                warnings.push(format!("{}:{lineno}: truncated final line skipped ({reason})", path.display()));
                break;
            }
            Err(reason) => return Err(LogError::Corrupt { path: path.to_path_buf(), line: lineno, reason }),
        };
        if record.schema_version != SCHEMA_VERSION {
            return Err(LogError::Schema(record.schema_version));
        }
        let expected = records.last().map_or(1, |r| r.seq + 1);
        if record.seq != expected {
            return Err(LogError::Sequence { path: path.to_path_buf(), line: lineno, expected, found: record.seq });
        }
        if let Some(first) = records.first() {
            if first.game_id != record.game_id {
                return Err(LogError::ForeignGame {
                    path: path.to_path_buf(),
                    line: lineno,
                    expected: first.game_id.clone(),
                    found: record.game_id,
                });
            }
        }
        records.push(record);
    }
    Ok(LoadedLog { path: path.to_path_buf(), records, warnings })
}

/// Every `*.jsonl` file under `dir`, sorted by name.
pub fn log_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event seq {seq} ({kind}) rejected: {reason}")]
    Rejected { seq: u64, kind: String, reason: String },
    #[error("invariant broken after seq {seq} ({kind}): {reason}")]
    Invariant { seq: u64, kind: String, reason: String },
    #[error("empty log")]
    Empty,
}

/// Folds a log through the engine, checking the structural invariants
/// after every event.
pub fn replay(log: &LoadedLog) -> Result<GameState, ReplayError> {
    if log.records.is_empty() {
        return Err(ReplayError::Empty);
    }
    let mut state = GameState::blank();
    for (record, event) in log.records.iter().zip(log.events()?) {
        state.apply(&event).map_err(|e| ReplayError::Rejected {
            seq: record.seq,
            kind: record.kind.clone(),
            reason: e.to_string(),
        })?;
        state.check_invariants().map_err(|reason| ReplayError::Invariant {
            seq: record.seq,
            kind: record.kind.clone(),
            reason,
        })?;
    }
    Ok(state)
}

/// Canonical JSON of a game state, for byte-level comparison.
pub fn canonical_state(state: &GameState) -> String {
    canonical_json(state).expect("game state serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use consensus_core::engine::ParticipantId;
    use consensus_core::sim::{simulate_game, stub_pool, SimSetup};
    use consensus_core::agent::{PromptTemplates, StubScripts};
    use consensus_core::{Condition, GameConfig, PersonalConfidence};
    use std::sync::Arc;

    fn sample(seed: u64) -> Vec<Event> {
        let setup = SimSetup::new(stub_pool(StubScripts::default()), Arc::new(PromptTemplates::default()));
        simulate_game("g1", GameConfig::new(Condition::BotOnly, seed), &setup).unwrap().log
    }

    fn write(dir: &Path, events: &[Event]) -> PathBuf {
        let path = dir.join("g1.jsonl");
        let mut w = LogWriter::create(&path, "g1", WallClock::Virtual(virtual_epoch())).unwrap();
        for e in events {
            w.append(e).unwrap();
        }
        path
    }

    #[test]
    fn records_round_trip() {
        for e in sample(1) {
            let r = LogRecord::from_event(1, "g", "t".into(), &e).unwrap();
            let back: LogRecord = serde_json::from_str(&r.to_line().unwrap()).unwrap();
            assert_eq!(back.event().unwrap(), e);
        }
    }

    #[test]
    fn keys_are_sorted() {
        let e = Event::new(
            1500,
            EventKind::InitialOpinion {
                participant: ParticipantId(2),
                opinion: "vegan".into(),
                confidence: PersonalConfidence::new(3).unwrap(),
            },
        );
        let line = LogRecord::from_event(4, "g", "ts".into(), &e).unwrap().to_line().unwrap();
        assert_eq!(
            line,
            r#"{"game_clock_s":1.5,"game_id":"g","kind":"initial_opinion","payload":{"confidence":3,"opinion":"vegan","participant":2},"schema_version":1,"seq":4,"wall_ts":"ts"}"#
        );
    }

    #[test]
    fn replay_reaches_live_state() {
        let dir = tempfile::tempdir().unwrap();
        let events = sample(4);
        assert!(events.len() >= 100, "{}", events.len());
        let mut live = GameState::blank();
        for e in &events {
            live.apply(e).unwrap();
        }
        let log = read_log(&write(dir.path(), &events)).unwrap();
        assert!(log.warnings.is_empty());
        let replayed = replay(&log).unwrap();
        assert_eq!(canonical_state(&replayed), canonical_state(&live));
    }

    #[test]
    fn truncated_tail_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let events = sample(2);
        let path = write(dir.path(), &events);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        std::fs::write(&path, &bytes).unwrap();
        let log = read_log(&path).unwrap();
        assert_eq!(log.records.len(), events.len() - 1);
        assert_eq!(log.warnings.len(), 1);
        replay(&log).unwrap();
    }

    #[test]
    fn corrupt_middle_line_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), &sample(2));
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "{not json";
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        match read_log(&path) {
            Err(LogError::Corrupt { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sequence_faults_are_hard_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), &sample(2));
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines.swap(3, 4);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(read_log(&path), Err(LogError::Sequence { line: 4, expected: 4, found: 5, .. })));

        lines.swap(3, 4);
        lines.remove(6);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(read_log(&path), Err(LogError::Sequence { expected: 7, found: 8, .. })));
    }

    #[test]
    fn writer_enforces_seq() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = LogWriter::create(&dir.path().join("x.jsonl"), "x", WallClock::Real).unwrap();
        let e = Event::new(0, EventKind::AgentDiagnostic(consensus_core::engine::Diagnostic {
            participant: None,
            conversation: None,
            code: "c".into(),
            detail: "d".into(),
        }));
        let r = LogRecord::from_event(5, "x", "t".into(), &e).unwrap();
        assert!(w.append_record(&r).is_err());
        assert_eq!(w.append(&e).unwrap(), 1);
    }

    #[test]
    fn replay_rejects_invalid_transition() {
        let dir = tempfile::tempdir().unwrap();
        let mut events = sample(3);
        // a second initial opinion for the same participant
        let dup = events.iter().position(|e| e.kind.name() == "initial_opinion").unwrap();
        events.insert(dup + 1, events[dup].clone());
        let log = read_log(&write(dir.path(), &events)).unwrap();
        assert!(matches!(replay(&log), Err(ReplayError::Rejected { .. })));
    }
}
