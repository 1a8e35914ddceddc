//! Recognition-driven lap tracking for community parks.
//!
//! A camera at one point of a closed walking loop recognizes enrolled
//! subjects; each recognized pass is a lap. From laps, elapsed time and body
//! weight the crate derives distance, average pace, a MET band and calories
//! burned. A seeded simulator provides exact ground truth, and an evaluation
//! harness compares calorie estimates against reference-device readings.
//!
//! - [`activity_model`]: distance, pace, MET bands and calorie arithmetic
//! - [`face_gallery`]: enrollment and cosine-similarity identification
//! - [`session_tracker`]: per-subject lap state machine and sighting streams
//! - [`park_simulator`]: walker kinematics, noisy detections and replay
//! - [`evaluation`]: MAE / MPE and golden-table reproduction
//! - [`config`]: layered runtime settings

pub mod activity_model;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod face_gallery;
pub mod park_simulator;
pub mod session_tracker;

pub use activity_model::{
    average_pace, calories_per_minute, classify_met, compute_stats, distance_covered, total_calories, CalorieModel,
    MetBand, MetTable, SessionStats,
};
pub use config::Config;
pub use error::{Error, Result};
pub use evaluation::{ComparisonRecord, EvalReport};
pub use face_gallery::{cosine_similarity, Embedding, EmbeddingSource, Gallery, MatchResult, Subject, SubjectId};
pub use park_simulator::{replay, simulate, DetectionModel, GroundTruth, Scenario, WalkerProfile};
pub use session_tracker::{LapDecision, SessionRecord, SightingEvent, TrackerConfig, WalkSession};
