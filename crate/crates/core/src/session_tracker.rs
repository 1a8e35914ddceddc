//! Per-subject lap counting driven by camera sightings.
//!
//! The first accepted sighting starts the clock at zero laps; each later
//! sighting at least `debounce_s` after the previous accepted one adds a lap.
//! Elapsed time runs from the first to the last accepted sighting, so distance
//! and pace are lap-quantized.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity_model::{self, SessionStats};
use crate::error::{Error, Result};
use crate::face_gallery::SubjectId;

/// Fastest plausible lap speed used to derive the default debounce window.
pub const MAX_LAP_SPEED_KMH: f64 = 15.0;
pub const DEFAULT_SESSION_TIMEOUT_S: f64 = 300.0;

pub fn default_debounce_s(perimeter_m: f64) -> f64 {
    perimeter_m * 3.6 / MAX_LAP_SPEED_KMH
}

/// One line of the sighting stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SightingEvent {
    #[serde(rename = "t")]
    pub timestamp_s: f64,
    pub subject_id: SubjectId,
    pub score: f64,
    /// Raw face vector, when the producer wants the consumer to run
    /// identification itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl SightingEvent {
    pub fn new(timestamp_s: f64, subject_id: impl Into<SubjectId>, score: f64) -> Self {
        Self {
            timestamp_s,
            subject_id: subject_id.into(),
            score,
            embedding: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timestamp_s.is_finite() || self.timestamp_s < 0.0 {
            return Err(Error::invalid(format!("timestamp must be finite and >= 0, got {}", self.timestamp_s)));
        }
        if !self.score.is_finite() || !(-1.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!("score must be in [-1, 1], got {}", self.score)));
        }
        Ok(())
    }
}

pub fn parse_sighting_line(line: &str) -> Result<SightingEvent> {
    let event: SightingEvent = serde_json::from_str(line)?;
    event.validate()?;
    Ok(event)
}

/// Reads a JSONL stream. Blank lines are skipped; every other line yields its
/// 1-based line number and parse result.
pub fn read_sightings<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, Result<SightingEvent>)> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some((line_no, Err(Error::Io(e)))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some((
                line_no,
                parse_sighting_line(&l).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                }),
            )),
        }
    })
}

pub fn write_sightings<W: Write>(mut out: W, events: &[SightingEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub perimeter_m: f64,
    pub debounce_s: f64,
    pub session_timeout_s: f64,
}

impl TrackerConfig {
    pub fn new(perimeter_m: f64) -> Self {
        Self {
            perimeter_m,
            debounce_s: default_debounce_s(perimeter_m),
            session_timeout_s: DEFAULT_SESSION_TIMEOUT_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("perimeter_m", self.perimeter_m),
            ("debounce_s", self.debounce_s),
            ("session_timeout_s", self.session_timeout_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::field(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::new(110.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LapDecision {
    SessionStarted,
    AcceptedNewLap,
    Debounced,
    /// The session had been idle past its timeout; it is now closed and the
    /// sighting was not applied.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSession {
    subject_id: SubjectId,
    weight_kg: f64,
    config: TrackerConfig,
    t0_s: Option<f64>,
    last_accepted_s: Option<f64>,
    last_seen_s: Option<f64>,
    accepted: u64,
    laps: u64,
    state: SessionState,
    closed: Option<SessionRecord>,
}

impl WalkSession {
    pub fn new(subject_id: SubjectId, weight_kg: f64, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if !(weight_kg.is_finite() && weight_kg > 0.0) {
            return Err(Error::invalid(format!("body weight must be > 0 kg, got {weight_kg}")));
        }
        Ok(Self {
            subject_id,
            weight_kg,
            config,
            t0_s: None,
            last_accepted_s: None,
            last_seen_s: None,
            accepted: 0,
            laps: 0,
            state: SessionState::Active,
            closed: None,
        })
    }

    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn laps(&self) -> u64 {
        self.laps
    }

    pub fn accepted_sightings(&self) -> u64 {
        self.accepted
    }

    pub fn t0_s(&self) -> Option<f64> {
        self.t0_s
    }

    pub fn last_accepted_s(&self) -> Option<f64> {
        self.last_accepted_s
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// The persisted form, once closed.
    pub fn record(&self) -> Option<&SessionRecord> {
        self.closed.as_ref()
    }

    pub fn ingest(&mut self, event: &SightingEvent) -> Result<LapDecision> {
        if self.state == SessionState::Closed {
            return Err(Error::State(format!("session for `{}` is closed", self.subject_id)));
        }
        if event.subject_id != self.subject_id {
            return Err(Error::Routing {
                expected: self.subject_id.to_string(),
                actual: event.subject_id.to_string(),
            });
        }
        event.validate()?;
        let t = event.timestamp_s;
        if let Some(last) = self.last_seen_s {
            if t < last {
                return Err(Error::Ordering {
                    subject_id: self.subject_id.to_string(),
                    timestamp_s: t,
                    last_seen_s: last,
                });
            }
        }

        let decision = match self.last_accepted_s {
            None => {
                self.t0_s = Some(t);
                self.last_accepted_s = Some(t);
                self.accepted = 1;
                LapDecision::SessionStarted
            }
            Some(last) if t - last >= self.config.session_timeout_s => {
                self.close(last)?;
                return Ok(LapDecision::Rejected);
            }
            Some(last) if t - last >= self.config.debounce_s => {
                self.last_accepted_s = Some(t);
                self.accepted += 1;
                self.laps += 1;
                LapDecision::AcceptedNewLap
            }
            Some(_) => LapDecision::Debounced,
        };
        self.last_seen_s = Some(t);
        Ok(decision)
    }

    /// Live statistics at `now_s`. Takes `&self`, so repeated calls at the
    /// same instant are identical.
    pub fn stats(&self, now_s: f64) -> Result<SessionStats> {
        let t0 = self.t0_s.ok_or_else(|| Error::EmptySession(self.subject_id.to_string()))?;
        if !now_s.is_finite() || now_s < t0 {
            return Err(Error::invalid(format!("query time {now_s} precedes session start {t0}")));
        }
        let elapsed_s = now_s - t0;
        if elapsed_s == 0.0 {
            let met = activity_model::classify_met(0.0)?;
            return Ok(SessionStats {
                distance_m: 0.0,
                elapsed_s: 0.0,
                avg_pace_kmh: 0.0,
                met,
                kcal_per_min: activity_model::calories_per_minute(met, self.weight_kg)?,
                total_kcal: 0.0,
            });
        }
        activity_model::compute_stats(self.weight_kg, self.config.perimeter_m, self.laps, elapsed_s)
    }

    /// Closes the session at `now_s` and returns the final record.
    pub fn close(&mut self, now_s: f64) -> Result<SessionRecord> {
        if self.state == SessionState::Closed {
            return Err(Error::State(format!("session for `{}` is already closed", self.subject_id)));
        }
        let stats = self.stats(now_s)?;
        self.state = SessionState::Closed;
        let record = SessionRecord {
            subject_id: self.subject_id.clone(),
            weight_kg: self.weight_kg,
            perimeter_m: self.config.perimeter_m,
            debounce_s: self.config.debounce_s,
            t0_s: self.t0_s.expect("stats() checked for a first sighting"),
            last_accepted_s: self.last_accepted_s.expect("set with t0"),
            laps: self.laps,
            accepted_sightings: self.accepted,
            state: SessionState::Closed,
            closed_at_s: now_s,
            stats,
        };
        self.closed = Some(record.clone());
        Ok(record)
    }
}

/// Everything about a closed session, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub subject_id: SubjectId,
    pub weight_kg: f64,
    pub perimeter_m: f64,
    pub debounce_s: f64,
    pub t0_s: f64,
    pub last_accepted_s: f64,
    pub laps: u64,
    pub accepted_sightings: u64,
    pub state: SessionState,
    pub closed_at_s: f64,
    pub stats: SessionStats,
}

impl SessionRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::field(e.path().to_string(), e.inner().to_string()))
    }
}

/// Directory of closed-session JSON files.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `record` as `<subject>-<seq>.json` and returns the path.
    pub fn save(&self, record: &SessionRecord, seq: usize) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let safe: String = record
            .subject_id
            .as_str()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = self.dir.join(format!("{safe}-{seq:03}.json"));
        std::fs::write(&path, record.to_json()? + "\n")?;
        Ok(path)
    }
}

/// Outcome of running one subject's ordered sightings through the tracker.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SubjectTrack {
    pub sessions: Vec<SessionRecord>,
    pub started: u64,
    pub laps: u64,
    pub debounced: u64,
    pub timeouts: u64,
    pub ordering_errors: u64,
}

/// Feeds `events` (all for `subject_id`) through successive sessions.
///
/// A sighting after the inactivity timeout closes the current session and
/// opens a new one with that sighting. Out-of-order events are dropped and
/// counted. At the end the open session is closed at its last accepted
/// sighting.
pub fn track_subject<'a>(
    subject_id: &SubjectId,
    weight_kg: f64,
    config: TrackerConfig,
    events: impl IntoIterator<Item = &'a SightingEvent>,
) -> Result<SubjectTrack> {
    let mut out = SubjectTrack::default();
    let mut session = WalkSession::new(subject_id.clone(), weight_kg, config)?;
    for event in events {
        match session.ingest(event) {
            Ok(LapDecision::SessionStarted) => out.started += 1,
            Ok(LapDecision::AcceptedNewLap) => out.laps += 1,
            Ok(LapDecision::Debounced) => out.debounced += 1,
            Ok(LapDecision::Rejected) => {
                out.timeouts += 1;
                out.sessions.push(session.record().cloned().expect("rejected sessions are closed"));
                session = WalkSession::new(subject_id.clone(), weight_kg, config)?;
                session.ingest(event)?;
                out.started += 1;
            }
            Err(Error::Ordering { .. }) => out.ordering_errors += 1,
            Err(e) => return Err(e),
        }
    }
    if let Some(last) = session.last_accepted_s() {
        out.sessions.push(session.close(last)?);
    }
    Ok(out)
}
