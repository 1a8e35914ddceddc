//! Seeded walker simulation around a single-camera loop, plus replay of a
//! sighting stream through identification and the lap tracker.
//!
//! Camera-line crossings are solved in closed form from each walker's
//! piecewise-constant speed profile. Ground truth comes from the same
//! kinematics and never looks at the (noisy) emitted stream.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity_model;
use crate::error::{Error, Result};
use crate::face_gallery::{cosine_similarity, Embedding, EmbeddingSource, Gallery, SubjectId, SyntheticEmbeddings};
use crate::session_tracker::{track_subject, SessionRecord, SightingEvent, SubjectTrack, TrackerConfig};

pub const DEFAULT_PERIMETER_M: f64 = 110.0;

/// Constant speed over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerProfile {
    pub subject_id: SubjectId,
    pub weight_kg: f64,
    pub speed_profile: Vec<SpeedSegment>,
    #[serde(default)]
    pub start_offset_m: f64,
}

impl WalkerProfile {
    pub fn constant(subject_id: impl Into<SubjectId>, weight_kg: f64, speed_kmh: f64, horizon_s: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            weight_kg,
            speed_profile: vec![SpeedSegment {
                start_s: 0.0,
                end_s: horizon_s,
                speed_kmh,
            }],
            start_offset_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionModel {
    pub detect_prob: f64,
    pub jitter_s: f64,
    pub false_match_prob: f64,
    pub seed: u64,
}

impl DetectionModel {
    pub fn perfect() -> Self {
        Self {
            detect_prob: 1.0,
            jitter_s: 0.0,
            false_match_prob: 0.0,
            seed: 0,
        }
    }
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self::perfect()
    }
}

/// Optional face vectors attached to each emitted sighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    pub dimension: usize,
    #[serde(default)]
    pub shared_similarity: f64,
    #[serde(default)]
    pub noise_angle_rad: f64,
}

impl EmbeddingSettings {
    /// The synthetic source these settings describe under `seed`.
    pub fn source(&self, seed: u64) -> SyntheticEmbeddings {
        SyntheticEmbeddings::new(self.dimension, seed)
            .with_shared_similarity(self.shared_similarity)
            .with_noise_angle(self.noise_angle_rad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_perimeter")]
    pub perimeter_m: f64,
    pub horizon_s: f64,
    #[serde(default)]
    pub detection: DetectionModel,
    pub walkers: Vec<WalkerProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingSettings>,
}

fn default_perimeter() -> f64 {
    DEFAULT_PERIMETER_M
}

fn check_positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::field(path, format!("must be > 0, got {v}")))
    }
}

fn check_probability(path: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::field(path, format!("must be a probability in [0, 1], got {p}")))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario =
            serde_path_to_error::deserialize(de).map_err(|e| Error::field(e.path().to_string(), e.inner().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks every field, reporting the first failure with its JSON path.
    pub fn validate(&self) -> Result<()> {
        check_positive("perimeter_m", self.perimeter_m)?;
        check_positive("horizon_s", self.horizon_s)?;
        check_probability("detection.detect_prob", self.detection.detect_prob)?;
        check_probability("detection.false_match_prob", self.detection.false_match_prob)?;
        if !(self.detection.jitter_s.is_finite() && self.detection.jitter_s >= 0.0) {
            return Err(Error::field("detection.jitter_s", "must be >= 0"));
        }
        if let Some(emb) = &self.embeddings {
            emb.source(self.detection.seed)
                .validate()
                .map_err(|e| match e {
                    Error::Field { path, message } => Error::field(format!("embeddings.{path}"), message),
                    other => other,
                })?;
        }
        let mut seen = HashMap::new();
        for (i, w) in self.walkers.iter().enumerate() {
            let at = |field: &str| format!("walkers[{i}].{field}");
            if let Some(first) = seen.insert(&w.subject_id, i) {
                return Err(Error::field(at("subject_id"), format!("duplicate of walkers[{first}]")));
            }
            check_positive(&at("weight_kg"), w.weight_kg)?;
            if !(w.start_offset_m.is_finite() && w.start_offset_m >= 0.0 && w.start_offset_m < self.perimeter_m) {
                return Err(Error::field(at("start_offset_m"), "must be in [0, perimeter_m)"));
            }
            if w.speed_profile.is_empty() {
                return Err(Error::field(at("speed_profile"), "must contain at least one segment"));
            }
            let mut expected_start = 0.0;
            for (j, seg) in w.speed_profile.iter().enumerate() {
                let sp = |field: &str| format!("walkers[{i}].speed_profile[{j}].{field}");
                if !(seg.speed_kmh.is_finite() && seg.speed_kmh >= 0.0) {
                    return Err(Error::field(sp("speed_kmh"), format!("must be finite and >= 0, got {}", seg.speed_kmh)));
                }
                if seg.start_s != expected_start {
                    return Err(Error::field(
                        sp("start_s"),
                        format!("expected {expected_start} (segments must be contiguous from 0)"),
                    ));
                }
                if !(seg.end_s.is_finite() && seg.end_s > seg.start_s) {
                    return Err(Error::field(sp("end_s"), "must be greater than start_s"));
                }
                expected_start = seg.end_s;
            }
            if expected_start < self.horizon_s {
                return Err(Error::field(
                    at("speed_profile"),
                    format!("segments end at {expected_start} s, before the horizon {}", self.horizon_s),
                ));
            }
        }
        Ok(())
    }
}

/// Cumulative distance along a piecewise-constant speed profile.
#[derive(Debug, Clone)]
struct Kinematics<'a> {
    segments: &'a [SpeedSegment],
    /// Distance covered at each segment's start, in meters.
    distance_at_start: Vec<f64>,
}

impl<'a> Kinematics<'a> {
    fn new(segments: &'a [SpeedSegment]) -> Self {
        let mut acc = 0.0;
        let distance_at_start = segments
            .iter()
            .map(|s| {
                let here = acc;
                acc += s.speed_kmh / 3.6 * (s.end_s - s.start_s);
                here
            })
            .collect();
        Self {
            segments,
            distance_at_start,
        }
    }

    fn distance_at(&self, t: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.start_s <= t).saturating_sub(1);
        let s = &self.segments[i];
        self.distance_at_start[i] + s.speed_kmh / 3.6 * (t.min(s.end_s) - s.start_s)
    }

    /// Earliest time at which `distance` has been covered.
    fn time_at(&self, distance: f64) -> Option<f64> {
        self.segments.iter().zip(&self.distance_at_start).find_map(|(s, &d0)| {
            if distance == d0 {
                return Some(s.start_s);
            }
            let v = s.speed_kmh / 3.6;
            if v > 0.0 && distance > d0 {
                let t = s.start_s + (distance - d0) / v;
                (t <= s.end_s).then_some(t)
            } else {
                None
            }
        })
    }
}

/// Times (within the horizon) at which a walker passes the camera line.
fn crossing_times(walker: &WalkerProfile, perimeter_m: f64, horizon_s: f64) -> Vec<f64> {
    let kin = Kinematics::new(&walker.speed_profile);
    let total = kin.distance_at(horizon_s);
    let first_k = (walker.start_offset_m / perimeter_m).ceil() as u64;
    let last_k = ((walker.start_offset_m + total) / perimeter_m).floor() as u64;
    (first_k..=last_k)
        .filter_map(|k| kin.time_at(k as f64 * perimeter_m - walker.start_offset_m))
        .filter(|&t| t <= horizon_s)
        .collect()
}

/// Closed-form outcome for one walker, as seen by a perfect camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subject_id: SubjectId,
    /// Completed laps between the first and last crossing.
    pub true_laps: u64,
    /// `true_laps * perimeter_m`.
    pub true_distance_m: f64,
    /// Lap-quantized pace over the first-to-last crossing window.
    pub true_pace_kmh: f64,
    pub true_kcal: f64,
    /// First to last crossing, seconds.
    pub window_s: f64,
    /// Continuous distance walked over the whole horizon.
    pub path_distance_m: f64,
    /// `path_distance_m` over the horizon, km/h.
    pub mean_speed_kmh: f64,
}

fn ground_truth(walker: &WalkerProfile, perimeter_m: f64, horizon_s: f64) -> Result<GroundTruth> {
    let kin = Kinematics::new(&walker.speed_profile);
    let path = kin.distance_at(horizon_s);
    let first_k = (walker.start_offset_m / perimeter_m).ceil();
    let last_k = ((walker.start_offset_m + path) / perimeter_m).floor();
    let crossings = if last_k >= first_k { (last_k - first_k) as u64 + 1 } else { 0 };
    let laps = crossings.saturating_sub(1);

    let (window_s, pace, kcal) = if laps > 0 {
        let t_first = kin.time_at(first_k * perimeter_m - walker.start_offset_m).expect("first crossing is reachable");
        let t_last = kin.time_at(last_k * perimeter_m - walker.start_offset_m).expect("last crossing is reachable");
        let window = t_last - t_first;
        let stats = activity_model::compute_stats(walker.weight_kg, perimeter_m, laps, window)?;
        (window, stats.avg_pace_kmh, stats.total_kcal)
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(GroundTruth {
        subject_id: walker.subject_id.clone(),
        true_laps: laps,
        true_distance_m: laps as f64 * perimeter_m,
        true_pace_kmh: pace,
        true_kcal: kcal,
        window_s,
        path_distance_m: path,
        mean_speed_kmh: path / 1000.0 / (horizon_s / 3600.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub events: Vec<SightingEvent>,
    pub truth: Vec<GroundTruth>,
}

impl Simulation {
    pub fn write_stream<W: Write>(&self, out: W) -> Result<()> {
        crate::session_tracker::write_sightings(out, &self.events)
    }

    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "true_laps", "true_distance_m", "true_pace_kmh", "true_kcal"])?;
        for t in &self.truth {
            w.write_record([
                t.subject_id.to_string(),
                t.true_laps.to_string(),
                t.true_distance_m.to_string(),
                t.true_pace_kmh.to_string(),
                t.true_kcal.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `scenario`. Identical scenarios give identical output.
pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let det = &scenario.detection;
    let mut rng = ChaCha8Rng::seed_from_u64(det.seed);
    let source = scenario.embeddings.map(|e| e.source(det.seed));
    let enrolled: Vec<Option<Embedding>> = scenario
        .walkers
        .iter()
        .map(|w| source.as_ref().map(|s| s.enrollment_embedding(&w.subject_id)).transpose())
        .collect::<Result<_>>()?;
    let n = scenario.walkers.len();

    // (time, walker index, crossing index, event)
    let mut emitted: Vec<(f64, usize, usize, SightingEvent)> = Vec::new();
    for (wi, walker) in scenario.walkers.iter().enumerate() {
        let mut prev = 0.0f64;
        for (ci, t) in crossing_times(walker, scenario.perimeter_m, scenario.horizon_s).into_iter().enumerate() {
            // Fixed draw order per crossing keeps streams stable across parameter changes.
            let detected = rng.random::<f64>() < det.detect_prob;
            let jitter = if det.jitter_s > 0.0 { rng.random_range(-det.jitter_s..=det.jitter_s) } else { 0.0 };
            let false_match = rng.random::<f64>() < det.false_match_prob && n > 1;
            let other = rng.random_range(0..n.max(2) - 1);
            let base_score = rng.random_range(0.85..1.0);
            if !detected {
                continue;
            }
            let t = (t + jitter).clamp(prev, scenario.horizon_s.max(prev));
            prev = t;
            let target = if false_match { if other >= wi { other + 1 } else { other } } else { wi };
            let target_id = &scenario.walkers[target].subject_id;
            let (score, embedding) = match (&source, &enrolled[target]) {
                (Some(src), Some(reference)) => {
                    let e = src.sighting_embedding(target_id, &mut rng)?;
                    (cosine_similarity(&e, reference)?, Some(e.values().to_vec()))
                }
                _ => (base_score, None),
            };
            emitted.push((
                t,
                wi,
                ci,
                SightingEvent {
                    timestamp_s: t,
                    subject_id: target_id.clone(),
                    score,
                    embedding,
                },
            ));
        }
    }
    emitted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let truth = scenario
        .walkers
        .iter()
        .map(|w| ground_truth(w, scenario.perimeter_m, scenario.horizon_s))
        .collect::<Result<_>>()?;
    Ok(Simulation {
        events: emitted.into_iter().map(|(_, _, _, e)| e).collect(),
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub tracker: TrackerConfig,
    pub match_threshold: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            match_threshold: crate::face_gallery::DEFAULT_MATCH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectReport {
    pub subject_id: SubjectId,
    pub name: String,
    pub weight_kg: f64,
    /// `None` when no sighting was routed to this subject.
    pub track: Option<SubjectTrack>,
}

impl SubjectReport {
    pub fn sessions(&self) -> &[SessionRecord] {
        self.track.as_ref().map_or(&[], |t| &t.sessions)
    }

    pub fn total_laps(&self) -> u64 {
        self.sessions().iter().map(|s| s.laps).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayOutcome {
    /// One entry per enrolled subject, in enrollment order.
    pub subjects: Vec<SubjectReport>,
    pub events_read: u64,
    pub parse_errors: u64,
    pub unmatched: u64,
}

impl ReplayOutcome {
    pub fn closed_sessions(&self) -> impl Iterator<Item = &SessionRecord> {
        self.subjects.iter().flat_map(|s| s.sessions())
    }
}

/// Routes each event to an enrolled subject and runs the lap tracker.
///
/// Events carrying an embedding go through [`Gallery::identify`]; the rest
/// are routed by `subject_id`. Unparseable lines and unmatched events are
/// counted and skipped. Subjects are tracked in parallel once routed; output
/// order follows the gallery.
pub fn replay<I>(stream: I, gallery: &Gallery, options: &ReplayOptions) -> Result<ReplayOutcome>
where
    I: IntoIterator<Item = (usize, Result<SightingEvent>)>,
{
    options.tracker.validate()?;
    let mut outcome = ReplayOutcome::default();
    let mut routed: Vec<Vec<SightingEvent>> = vec![Vec::new(); gallery.len()];
    for (_line, event) in stream {
        let mut event = match event {
            Ok(e) => e,
            Err(_) => {
                outcome.parse_errors += 1;
                continue;
            }
        };
        outcome.events_read += 1;
        let target = match &event.embedding {
            Some(values) => match Embedding::new(values.clone()) {
                Ok(query) => {
                    let m = gallery.identify(&query, options.match_threshold)?;
                    if let Some(id) = &m.subject_id {
                        event.score = m.score;
                        event.subject_id = id.clone();
                    }
                    m.subject_id.and_then(|id| gallery.enrollment_rank(&id))
                }
                Err(_) => {
                    outcome.parse_errors += 1;
                    outcome.events_read -= 1;
                    continue;
                }
            },
            None => gallery.enrollment_rank(&event.subject_id),
        };
        match target {
            Some(i) => routed[i].push(event),
            None => outcome.unmatched += 1,
        }
    }

    outcome.subjects = gallery
        .subjects()
        .par_iter()
        .zip(routed.par_iter())
        .map(|(subject, events)| {
            let track = if events.is_empty() {
                None
            } else {
                Some(track_subject(&subject.subject_id, subject.weight_kg, options.tracker, events)?)
            };
            Ok(SubjectReport {
                subject_id: subject.subject_id.clone(),
                name: subject.name.clone(),
                weight_kg: subject.weight_kg,
                track,
            })
        })
        .collect::<Result<_>>()?;
    Ok(outcome)
}
