//! Distance, pace, MET classification and calorie arithmetic.
//!
//! Everything here is a pure function over `f64`. Values are carried at full
//! precision; [`truncate_2dp`] exists only for display, where published tables
//! truncate toward zero at two decimals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Walking pace interval mapped to a MET value.
///
/// `pace_lo` is inclusive, `pace_hi` exclusive. `pace_hi == None` marks the
/// open-ended top band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetBand {
    pub label: String,
    pub pace_lo: f64,
    pub pace_hi: Option<f64>,
    pub met: f64,
}

impl MetBand {
    fn new(label: &str, pace_lo: f64, pace_hi: Option<f64>, met: f64) -> Self {
        Self {
            label: label.to_string(),
            pace_lo,
            pace_hi,
            met,
        }
    }

    pub fn contains(&self, pace_kmh: f64) -> bool {
        pace_kmh >= self.pace_lo && self.pace_hi.is_none_or(|hi| pace_kmh < hi)
    }
}

/// An ordered set of [`MetBand`]s partitioning `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetTable {
    bands: Vec<MetBand>,
}

impl MetTable {
    /// Validates that `bands` start at 0, are contiguous, end unbounded and
    /// carry positive, non-decreasing MET values.
    pub fn new(bands: Vec<MetBand>) -> Result<Self> {
        let Some(first) = bands.first() else {
            return Err(Error::invalid("MET table must contain at least one band"));
        };
        if first.pace_lo != 0.0 {
            return Err(Error::invalid("first MET band must start at 0 km/h"));
        }
        for (i, band) in bands.iter().enumerate() {
            if !(band.met.is_finite() && band.met > 0.0) {
                return Err(Error::invalid(format!("band `{}`: MET must be > 0", band.label)));
            }
            let last = i + 1 == bands.len();
            match (band.pace_hi, last) {
                (None, true) => {}
                (None, false) => {
                    return Err(Error::invalid(format!(
                        "band `{}`: only the last band may be unbounded",
                        band.label
                    )))
                }
                (Some(_), true) => {
                    return Err(Error::invalid("last MET band must be unbounded"));
                }
                (Some(hi), false) => {
                    if hi.is_nan() || hi <= band.pace_lo {
                        return Err(Error::invalid(format!(
                            "band `{}`: upper bound must exceed lower bound",
                            band.label
                        )));
                    }
                    let next = &bands[i + 1];
                    if next.pace_lo != hi {
                        return Err(Error::invalid(format!(
                            "bands `{}` and `{}` leave a gap or overlap",
                            band.label, next.label
                        )));
                    }
                    if next.met < band.met {
                        return Err(Error::invalid("MET values must be non-decreasing with pace"));
                    }
                }
            }
        }
        Ok(Self { bands })
    }

    /// Walking bands used throughout the crate. Running MET applies from
    /// 7.2 km/h upward, matching how the observed data was scored.
    pub fn walking() -> Self {
        Self {
            bands: vec![
                MetBand::new("strolling (slow walk)", 0.0, Some(5.6), 2.0),
                MetBand::new("brisk walking", 5.6, Some(6.4), 5.0),
                MetBand::new("concentrated brisk walking", 6.4, Some(7.2), 6.3),
                MetBand::new("running", 7.2, None, 11.5),
            ],
        }
    }

    pub fn bands(&self) -> &[MetBand] {
        &self.bands
    }

    pub fn band_for(&self, pace_kmh: f64) -> Result<&MetBand> {
        check_pace(pace_kmh)?;
        // Bands partition [0, inf) so exactly one matches.
        Ok(self
            .bands
            .iter()
            .find(|b| b.contains(pace_kmh))
            .expect("validated MET table covers every non-negative pace"))
    }

    pub fn classify(&self, pace_kmh: f64) -> Result<f64> {
        self.band_for(pace_kmh).map(|b| b.met)
    }
}

impl Default for MetTable {
    fn default() -> Self {
        Self::walking()
    }
}

/// `kcal/min = MET * weight * resting_vo2_factor / divisor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalorieModel {
    resting_vo2_factor: f64,
    divisor: f64,
}

impl CalorieModel {
    pub const STANDARD: CalorieModel = CalorieModel {
        resting_vo2_factor: 3.5,
        divisor: 200.0,
    };

    pub fn resting_vo2_factor(&self) -> f64 {
        self.resting_vo2_factor
    }

    pub fn divisor(&self) -> f64 {
        self.divisor
    }

    pub fn per_minute(&self, met: f64, weight_kg: f64) -> Result<f64> {
        if !(met.is_finite() && met > 0.0) {
            return Err(Error::invalid(format!("MET must be > 0, got {met}")));
        }
        if !(weight_kg.is_finite() && weight_kg > 0.0) {
            return Err(Error::invalid(format!("body weight must be > 0 kg, got {weight_kg}")));
        }
        Ok(met * weight_kg * self.resting_vo2_factor / self.divisor)
    }
}

impl Default for CalorieModel {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Derived statistics for one walking session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub distance_m: f64,
    pub elapsed_s: f64,
    pub avg_pace_kmh: f64,
    pub met: f64,
    pub kcal_per_min: f64,
    pub total_kcal: f64,
}

fn check_pace(pace_kmh: f64) -> Result<()> {
    if !pace_kmh.is_finite() || pace_kmh < 0.0 {
        return Err(Error::invalid(format!("pace must be finite and >= 0, got {pace_kmh}")));
    }
    Ok(())
}

pub fn distance_covered(perimeter_m: f64, laps: u64) -> Result<f64> {
    if !(perimeter_m.is_finite() && perimeter_m > 0.0) {
        return Err(Error::invalid(format!("perimeter must be > 0 m, got {perimeter_m}")));
    }
    Ok(perimeter_m * laps as f64)
}

/// Average pace in km/h.
pub fn average_pace(distance_m: f64, elapsed_s: f64) -> Result<f64> {
    if !(elapsed_s.is_finite() && elapsed_s > 0.0) {
        return Err(Error::invalid(format!("elapsed time must be > 0 s, got {elapsed_s}")));
    }
    if !distance_m.is_finite() || distance_m < 0.0 {
        return Err(Error::invalid(format!("distance must be >= 0 m, got {distance_m}")));
    }
    Ok((distance_m / 1000.0) / (elapsed_s / 3600.0))
}

pub fn classify_met(pace_kmh: f64) -> Result<f64> {
    check_pace(pace_kmh)?;
    MetTable::walking().classify(pace_kmh)
}

pub fn calories_per_minute(met: f64, weight_kg: f64) -> Result<f64> {
    CalorieModel::STANDARD.per_minute(met, weight_kg)
}

pub fn total_calories(kcal_per_min: f64, elapsed_s: f64) -> Result<f64> {
    if !kcal_per_min.is_finite() || kcal_per_min < 0.0 {
        return Err(Error::invalid(format!("kcal/min must be >= 0, got {kcal_per_min}")));
    }
    if !elapsed_s.is_finite() || elapsed_s < 0.0 {
        return Err(Error::invalid(format!("elapsed time must be >= 0 s, got {elapsed_s}")));
    }
    Ok(kcal_per_min * (elapsed_s / 60.0))
}

/// Chains distance, pace, MET band and calorie model for one session. A
/// single MET is taken from the session-average pace.
pub fn compute_stats(weight_kg: f64, perimeter_m: f64, laps: u64, elapsed_s: f64) -> Result<SessionStats> {
    let distance_m = distance_covered(perimeter_m, laps)?;
    let avg_pace_kmh = average_pace(distance_m, elapsed_s)?;
    let met = classify_met(avg_pace_kmh)?;
    let kcal_per_min = calories_per_minute(met, weight_kg)?;
    let total_kcal = total_calories(kcal_per_min, elapsed_s)?;
    Ok(SessionStats {
        distance_m,
        elapsed_s,
        avg_pace_kmh,
        met,
        kcal_per_min,
        total_kcal,
    })
}

/// Truncates toward zero at two decimals, the way the published tables print.
///
/// Products like `90.51` come out of `f64` arithmetic as `90.50999999999999`;
/// values within 1e-6 of a cent boundary snap to it before truncating.
pub fn truncate_2dp(value: f64) -> f64 {
    let scaled = value * 100.0;
    let nearest = scaled.round();
    if (scaled - nearest).abs() < 1e-6 {
        nearest / 100.0
    } else {
        scaled.trunc() / 100.0
    }
}

/// [`truncate_2dp`] rendered with exactly two decimals.
pub fn format_2dp(value: f64) -> String {
    format!("{:.2}", truncate_2dp(value))
}
