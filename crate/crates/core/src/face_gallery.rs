//! Enrollment gallery and cosine-similarity identity verification.
//!
//! Face embeddings are opaque vectors here; whatever produced them sits behind
//! [`EmbeddingSource`]. [`SyntheticEmbeddings`] is the deterministic source used
//! by the simulator and the tests.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 512;
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.80;
pub const GALLERY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(String);

impl SubjectId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A finite, nonzero face vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
    #[serde(skip)]
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("embedding is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!("component {i} is not finite")));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidEmbedding("zero-norm embedding".into()));
        }
        Ok(Self { values, norm })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        Embedding::new(values).map_err(serde::de::Error::custom)
    }
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
///
/// Symmetric bit-for-bit: the dot product and the norm product are both
/// commutative in IEEE arithmetic.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::Dimension {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub subject_id: SubjectId,
    pub name: String,
    pub weight_kg: f64,
    pub embedding: Embedding,
}

impl Subject {
    pub fn new(subject_id: impl Into<SubjectId>, name: impl Into<String>, weight_kg: f64, embedding: Embedding) -> Result<Self> {
        if !(weight_kg.is_finite() && weight_kg > 0.0) {
            return Err(Error::invalid(format!("body weight must be > 0 kg, got {weight_kg}")));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            name: name.into(),
            weight_kg,
            embedding,
        })
    }
}

impl From<String> for SubjectId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<SubjectId>,
    /// Best score seen; -1 for an empty gallery.
    pub score: f64,
}

/// Enrolled subjects in enrollment order.
///
/// Identification takes `&self` and enrollment `&mut self`, so a gallery shared
/// behind an `RwLock` never exposes a half-enrolled subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    dimension: usize,
    subjects: Vec<Subject>,
    index: HashMap<SubjectId, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GalleryDocument {
    version: u32,
    dimension: usize,
    subjects: Vec<Subject>,
}

impl Gallery {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("embedding dimension must be > 0"));
        }
        Ok(Self {
            dimension,
            subjects: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Subjects in enrollment order.
    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn get(&self, id: &SubjectId) -> Option<&Subject> {
        self.index.get(id).map(|&i| &self.subjects[i])
    }

    pub fn enrollment_rank(&self, id: &SubjectId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn enroll(&mut self, subject: Subject) -> Result<()> {
        if subject.embedding.dimension() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                actual: subject.embedding.dimension(),
            });
        }
        if !(subject.weight_kg.is_finite() && subject.weight_kg > 0.0) {
            return Err(Error::invalid(format!(
                "subject `{}`: body weight must be > 0 kg",
                subject.subject_id
            )));
        }
        if self.index.contains_key(&subject.subject_id) {
            return Err(Error::Conflict(subject.subject_id.to_string()));
        }
        self.index.insert(subject.subject_id.clone(), self.subjects.len());
        self.subjects.push(subject);
        Ok(())
    }

    /// Best-scoring enrolled subject, accepted iff its score reaches
    /// `threshold`. Equal scores go to the earliest enrollment.
    pub fn identify(&self, query: &Embedding, threshold: f64) -> Result<MatchResult> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::invalid(format!("match threshold must be in (0, 1], got {threshold}")));
        }
        if query.dimension() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, subject) in self.subjects.iter().enumerate() {
            let score = cosine_similarity(query, &subject.embedding)?;
            // strict `>` keeps the earliest subject on ties
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        Ok(match best {
            Some((i, score)) if score >= threshold => MatchResult {
                matched: true,
                subject_id: Some(self.subjects[i].subject_id.clone()),
                score,
            },
            Some((_, score)) => MatchResult {
                matched: false,
                subject_id: None,
                score,
            },
            None => MatchResult {
                matched: false,
                subject_id: None,
                score: -1.0,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GalleryDocument {
            version: GALLERY_FORMAT_VERSION,
            dimension: self.dimension,
            subjects: self.subjects.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: GalleryDocument = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::field(e.path().to_string(), e.inner().to_string()))?;
        if doc.version != GALLERY_FORMAT_VERSION {
            return Err(Error::field(
                "version",
                format!("unsupported gallery version {}", doc.version),
            ));
        }
        let mut gallery = Gallery::new(doc.dimension)?;
        for (i, subject) in doc.subjects.into_iter().enumerate() {
            gallery
                .enroll(subject)
                .map_err(|e| Error::field(format!("subjects[{i}]"), e.to_string()))?;
        }
        Ok(gallery)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One row of a `subject_id,name,weight_kg` roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub subject_id: SubjectId,
    pub name: String,
    pub weight_kg: f64,
}

/// Parses a roster CSV. Errors carry the 1-based data row.
pub fn read_roster<R: Read>(reader: R) -> Result<Vec<RosterEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in ["subject_id", "name", "weight_kg"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::field("header", format!("missing column `{required}`")));
        }
    }
    let mut seen = HashMap::new();
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<RosterEntry>().enumerate() {
        let row_no = i + 1;
        let entry = row.map_err(|e| Error::Row {
            row: row_no,
            source: Box::new(Error::Csv(e)),
        })?;
        if !(entry.weight_kg.is_finite() && entry.weight_kg > 0.0) {
            return Err(Error::Row {
                row: row_no,
                source: Box::new(Error::invalid(format!("weight_kg must be > 0, got {}", entry.weight_kg))),
            });
        }
        if let Some(first) = seen.insert(entry.subject_id.clone(), row_no) {
            return Err(Error::Row {
                row: row_no,
                source: Box::new(Error::Conflict(format!("{} (first seen on row {first})", entry.subject_id))),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Produces face vectors for enrollment and for individual sightings.
pub trait EmbeddingSource {
    fn dimension(&self) -> usize;

    /// The reference vector stored at enrollment.
    fn enrollment_embedding(&self, subject_id: &SubjectId) -> Result<Embedding>;

    /// A fresh observation of `subject_id`, drawing any noise from `rng`.
    fn sighting_embedding(&self, subject_id: &SubjectId, rng: &mut ChaCha8Rng) -> Result<Embedding>;
}

/// Seeded unit-vector generator.
///
/// Each subject's vector mixes a direction shared by everyone (weight
/// `shared_similarity`) with a private one, so the expected cosine between two
/// subjects is about `shared_similarity`. Sightings are the enrolled vector
/// rotated by exactly `noise_angle_rad` toward a random orthogonal direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEmbeddings {
    pub dimension: usize,
    pub seed: u64,
    #[serde(default)]
    pub shared_similarity: f64,
    #[serde(default)]
    pub noise_angle_rad: f64,
}

impl SyntheticEmbeddings {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            shared_similarity: 0.0,
            noise_angle_rad: 0.0,
        }
    }

    pub fn with_shared_similarity(mut self, rho: f64) -> Self {
        self.shared_similarity = rho;
        self
    }

    pub fn with_noise_angle(mut self, radians: f64) -> Self {
        self.noise_angle_rad = radians;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::field("dimension", "must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.shared_similarity) {
            return Err(Error::field("shared_similarity", "must be in [0, 1)"));
        }
        if !(self.noise_angle_rad.is_finite() && (0.0..=std::f64::consts::FRAC_PI_2).contains(&self.noise_angle_rad)) {
            return Err(Error::field("noise_angle_rad", "must be in [0, pi/2]"));
        }
        Ok(())
    }

    fn unit_gaussian(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.dimension).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    fn unit_vector(&self, subject_id: &SubjectId) -> Vec<f64> {
        let mut shared_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shared = self.unit_gaussian(&mut shared_rng);
        let mut own_rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(subject_id.as_str().as_bytes()));
        let own = self.unit_gaussian(&mut own_rng);
        let (a, b) = (self.shared_similarity.sqrt(), (1.0 - self.shared_similarity).sqrt());
        let mixed: Vec<f64> = shared.iter().zip(&own).map(|(s, o)| a * s + b * o).collect();
        normalize(mixed)
    }
}

impl EmbeddingSource for SyntheticEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn enrollment_embedding(&self, subject_id: &SubjectId) -> Result<Embedding> {
        self.validate()?;
        Embedding::new(self.unit_vector(subject_id))
    }

    fn sighting_embedding(&self, subject_id: &SubjectId, rng: &mut ChaCha8Rng) -> Result<Embedding> {
        self.validate()?;
        let base = self.unit_vector(subject_id);
        if self.noise_angle_rad == 0.0 {
            return Embedding::new(base);
        }
        // Gram-Schmidt a random direction against `base`.
        let ortho = loop {
            let g = self.unit_gaussian(rng);
            let along: f64 = g.iter().zip(&base).map(|(x, y)| x * y).sum();
            let r: Vec<f64> = g.iter().zip(&base).map(|(x, y)| x - along * y).collect();
            if r.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
                break normalize(r);
            }
        };
        let (c, s) = (self.noise_angle_rad.cos(), self.noise_angle_rad.sin());
        Embedding::new(base.iter().zip(&ortho).map(|(b, o)| c * b + s * o).collect())
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Builds a gallery from a roster, using `source` for every embedding.
pub fn enroll_roster(roster: &[RosterEntry], source: &dyn EmbeddingSource) -> Result<Gallery> {
    let mut gallery = Gallery::new(source.dimension())?;
    for entry in roster {
        let embedding = source.enrollment_embedding(&entry.subject_id)?;
        gallery.enroll(Subject::new(entry.subject_id.clone(), entry.name.clone(), entry.weight_kg, embedding)?)?;
    }
    Ok(gallery)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn subject(id: &str, v: &[f64]) -> Subject {
        Subject::new(id, id, 70.0, emb(v)).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let v = emb(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap(), -1.0);
        let v2 = v.scaled(2.0).unwrap();
        assert!((cosine_similarity(&v, &v2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[1.0, 0.0, 0.0])),
            Err(Error::Dimension { expected: 2, actual: 3 })
        ));
        assert!(matches!(Embedding::new(vec![0.0, 0.0]), Err(Error::InvalidEmbedding(_))));
        assert!(matches!(Embedding::new(vec![f64::NAN, 1.0]), Err(Error::InvalidEmbedding(_))));
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn enroll_examples() {
        let mut g = Gallery::new(2).unwrap();
        g.enroll(subject("A", &[1.0, 0.0])).unwrap();
        assert_eq!(g.len(), 1);
        assert!(matches!(g.enroll(subject("A", &[0.0, 1.0])), Err(Error::Conflict(_))));
        assert_eq!(g.len(), 1);
        assert!(matches!(g.enroll(subject("B", &[0.0, 1.0, 0.0])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn enroll_twenty_two() {
        let src = SyntheticEmbeddings::new(64, 7);
        let mut g = Gallery::new(64).unwrap();
        for i in 1..=22 {
            let id = SubjectId::new(format!("S{i}"));
            let e = src.enrollment_embedding(&id).unwrap();
            g.enroll(Subject::new(id, "x", 70.0, e).unwrap()).unwrap();
        }
        assert_eq!(g.len(), 22);
    }

    #[test]
    fn identify_examples() {
        let mut g = Gallery::new(2).unwrap();
        g.enroll(subject("A", &[1.0, 0.0])).unwrap();
        let r = g.identify(&emb(&[1.0, 0.0]), 0.8).unwrap();
        assert!(r.matched);
        assert_eq!(r.subject_id, Some("A".into()));
        assert_eq!(r.score, 1.0);

        g.enroll(subject("B", &[0.0, 1.0])).unwrap();
        let eps = 1e-6;
        let q = emb(&[1.0, eps]);
        let r = g.identify(&q, 0.8).unwrap();
        assert_eq!(r.subject_id, Some("A".into()));
        // cos(q, A) = 1/sqrt(1+eps^2), cos(q, B) = eps/sqrt(1+eps^2)
        assert!((r.score - 1.0 / (1.0f64 + eps * eps).sqrt()).abs() < 1e-15);

        let r10 = g.identify(&q.scaled(10.0).unwrap(), 0.8).unwrap();
        assert_eq!(r10.subject_id, r.subject_id);
        assert_eq!(r10.matched, r.matched);

        let empty = Gallery::new(2).unwrap();
        let r = empty.identify(&q, 0.8).unwrap();
        assert!(!r.matched);
        assert!(r.subject_id.is_none());
    }

    #[test]
    fn identify_below_threshold_reports_best_score() {
        let mut g = Gallery::new(2).unwrap();
        g.enroll(subject("A", &[1.0, 0.0])).unwrap();
        let r = g.identify(&emb(&[1.0, 1.0]), 0.8).unwrap();
        assert!(!r.matched);
        assert!((r.score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(g.identify(&emb(&[1.0, 1.0]), 0.0).is_err());
        assert!(g.identify(&emb(&[1.0, 1.0]), 1.5).is_err());
    }

    #[test]
    fn ties_go_to_earliest_enrollment() {
        let mut g = Gallery::new(2).unwrap();
        g.enroll(subject("first", &[1.0, 1.0])).unwrap();
        g.enroll(subject("second", &[2.0, 2.0])).unwrap();
        let r = g.identify(&emb(&[1.0, 1.0]), 0.5).unwrap();
        assert_eq!(r.subject_id, Some("first".into()));
    }

    #[test]
    fn gallery_json_round_trip() {
        let src = SyntheticEmbeddings::new(16, 3);
        let roster = vec![
            RosterEntry { subject_id: "S1".into(), name: "Ann".into(), weight_kg: 73.3 },
            RosterEntry { subject_id: "S2".into(), name: "Bo".into(), weight_kg: 74.2 },
        ];
        let g = enroll_roster(&roster, &src).unwrap();
        let back = Gallery::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["dimension"], 16);
        assert_eq!(v["subjects"][0]["subject_id"], "S1");
        assert_eq!(v["subjects"][0]["embedding"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn gallery_json_rejects_bad_documents() {
        let zero = r#"{"version":1,"dimension":2,"subjects":[{"subject_id":"A","name":"a","weight_kg":70,"embedding":[0,0]}]}"#;
        let err = Gallery::from_json(zero).unwrap_err().to_string();
        assert!(err.contains("subjects[0].embedding"), "{err}");
        let dup = r#"{"version":1,"dimension":2,"subjects":[
            {"subject_id":"A","name":"a","weight_kg":70,"embedding":[1,0]},
            {"subject_id":"A","name":"b","weight_kg":70,"embedding":[0,1]}]}"#;
        assert!(Gallery::from_json(dup).is_err());
        let ver = r#"{"version":9,"dimension":2,"subjects":[]}"#;
        assert!(Gallery::from_json(ver).is_err());
    }

    #[test]
    fn roster_parsing() {
        let csv = "subject_id,name,weight_kg\nS1,Ann,73.3\nS2,Bo,74.2\n";
        let r = read_roster(csv.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].weight_kg, 74.2);

        assert!(read_roster("subject_id,name,weight_kg\n".as_bytes()).unwrap().is_empty());

        let dup = "subject_id,name,weight_kg\nS1,Ann,73.3\nS1,Bo,74.2\n";
        match read_roster(dup.as_bytes()) {
            Err(Error::Row { row: 2, source }) => assert!(matches!(*source, Error::Conflict(_))),
            other => panic!("{other:?}"),
        }
        assert!(read_roster("subject_id,name,weight_kg\nS1,Ann,heavy\n".as_bytes()).is_err());
        assert!(read_roster("subject_id,name,weight_kg\nS1,Ann,-3\n".as_bytes()).is_err());
        assert!(read_roster("id,name\nS1,Ann\n".as_bytes()).is_err());
    }

    #[test]
    fn synthetic_source_is_deterministic_and_controllable() {
        let src = SyntheticEmbeddings::new(128, 11).with_noise_angle(0.3);
        let id = SubjectId::new("S1");
        assert_eq!(src.enrollment_embedding(&id).unwrap(), src.enrollment_embedding(&id).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seen = src.sighting_embedding(&id, &mut rng).unwrap();
        let enrolled = src.enrollment_embedding(&id).unwrap();
        let cos = cosine_similarity(&seen, &enrolled).unwrap();
        assert!((cos - 0.3f64.cos()).abs() < 1e-12);

        let tight = SyntheticEmbeddings::new(512, 5).with_shared_similarity(0.9);
        let a = tight.enrollment_embedding(&"A".into()).unwrap();
        let b = tight.enrollment_embedding(&"B".into()).unwrap();
        let c = cosine_similarity(&a, &b).unwrap();
        assert!((c - 0.9).abs() < 0.1, "{c}");

        assert!(SyntheticEmbeddings::new(8, 0).with_shared_similarity(1.0).validate().is_err());
    }
}
