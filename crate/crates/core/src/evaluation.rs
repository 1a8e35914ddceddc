//! Accuracy metrics against a reference device and golden-table reproduction.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::activity_model::{self, format_2dp, truncate_2dp};
use crate::error::{Error, Result};
use crate::face_gallery::SubjectId;

/// Roster with paces and the printed results for 22 subjects.
pub const TABLE3_CSV: &str = include_str!("../data/table3.csv");
/// System and reference-watch calorie readings for the same 22 subjects.
pub const TABLE4_CSV: &str = include_str!("../data/table4.csv");

/// Published accuracy figures that accompany the shipped tables.
pub const PUBLISHED_MAE_KCAL: f64 = 5.64;
pub const PUBLISHED_MPE_PERCENT: f64 = 1.96;

pub const SESSION_DURATION_S: f64 = 1800.0;

/// Orders ids like `S2` before `S10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let pos = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..pos], s[pos..].parse().ok())
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb).then(na.cmp(&nb)).then(a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub subject_id: SubjectId,
    pub weight_kg: f64,
    pub avg_pace_kmh: f64,
    #[serde(default)]
    pub met: Option<f64>,
    #[serde(default)]
    pub kcal_per_min: Option<String>,
    #[serde(default)]
    pub total_kcal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Result {
    pub subject_id: SubjectId,
    pub weight_kg: f64,
    pub avg_pace_kmh: f64,
    pub met: f64,
    pub kcal_per_min: f64,
    pub total_kcal: f64,
}

pub fn read_table3<R: Read>(reader: R) -> Result<Vec<Table3Row>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Row {
                row: i + 1,
                source: Box::new(Error::Csv(e)),
            })
        })
        .collect()
}

/// MET band, kcal/min and total kcal for each roster row over `duration_s`.
pub fn reproduce_table3(rows: &[Table3Row], duration_s: f64) -> Result<Vec<Table3Result>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let compute = || -> Result<Table3Result> {
                let met = activity_model::classify_met(row.avg_pace_kmh)?;
                let kcal_per_min = activity_model::calories_per_minute(met, row.weight_kg)?;
                let total_kcal = activity_model::total_calories(kcal_per_min, duration_s)?;
                Ok(Table3Result {
                    subject_id: row.subject_id.clone(),
                    weight_kg: row.weight_kg,
                    avg_pace_kmh: row.avg_pace_kmh,
                    met,
                    kcal_per_min,
                    total_kcal,
                })
            };
            compute().map_err(|e| Error::Row {
                row: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Agreement of one computed cell with its printed counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCheck {
    pub subject_id: SubjectId,
    pub column: &'static str,
    pub printed: String,
    pub computed: String,
    pub abs_diff: f64,
}

impl CellCheck {
    pub fn exact(&self) -> bool {
        self.printed == self.computed
    }
}

/// Compares truncated kcal/min and total against whatever printed columns
/// `rows` carry.
pub fn check_table3(rows: &[Table3Row], results: &[Table3Result]) -> Result<Vec<CellCheck>> {
    let mut checks = Vec::new();
    for (row, res) in rows.iter().zip(results) {
        for (column, printed, value) in [
            ("kcal_per_min", &row.kcal_per_min, res.kcal_per_min),
            ("total_kcal", &row.total_kcal, res.total_kcal),
        ] {
            let Some(printed) = printed else { continue };
            let p: f64 = printed
                .parse()
                .map_err(|_| Error::field(format!("{}.{column}", row.subject_id), format!("not a number: {printed}")))?;
            checks.push(CellCheck {
                subject_id: row.subject_id.clone(),
                column,
                printed: printed.clone(),
                computed: format_2dp(value),
                abs_diff: (truncate_2dp(value) - p).abs(),
            });
        }
    }
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub subject_id: SubjectId,
    pub dlicp_kcal: f64,
    pub reference_kcal: f64,
}

impl ComparisonRecord {
    pub fn new(subject_id: impl Into<SubjectId>, dlicp_kcal: f64, reference_kcal: f64) -> Result<Self> {
        let r = Self {
            subject_id: subject_id.into(),
            dlicp_kcal,
            reference_kcal,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dlicp_kcal.is_finite() && self.dlicp_kcal > 0.0) {
            return Err(Error::invalid(format!(
                "{}: system reading must be > 0 kcal, got {}",
                self.subject_id, self.dlicp_kcal
            )));
        }
        if !(self.reference_kcal.is_finite() && self.reference_kcal >= 0.0) {
            return Err(Error::invalid(format!(
                "{}: reference reading must be >= 0 kcal, got {}",
                self.subject_id, self.reference_kcal
            )));
        }
        Ok(())
    }

    pub fn deviation(&self) -> f64 {
        self.dlicp_kcal - self.reference_kcal
    }

    pub fn percent_deviation(&self) -> f64 {
        self.deviation() / self.dlicp_kcal * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub subject_id: SubjectId,
    pub dlicp_kcal: f64,
    pub reference_kcal: f64,
    /// Printed deviation, kept verbatim (`+5.4`, `-7`, `3.54`).
    #[serde(default)]
    pub deviation: Option<String>,
}

impl Table4Row {
    pub fn record(&self) -> ComparisonRecord {
        ComparisonRecord {
            subject_id: self.subject_id.clone(),
            dlicp_kcal: self.dlicp_kcal,
            reference_kcal: self.reference_kcal,
        }
    }
}

/// Parses and validates a comparison CSV; the first bad row is reported.
pub fn read_table4<R: Read>(reader: R) -> Result<Vec<Table4Row>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<Table4Row>()
        .enumerate()
        .map(|(i, r)| {
            let wrap = |e| Error::Row {
                row: i + 1,
                source: Box::new(e),
            };
            let row = r.map_err(|e| wrap(Error::Csv(e)))?;
            row.record().validate().map_err(wrap)?;
            Ok(row)
        })
        .collect()
}

fn check_records(records: &[ComparisonRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("at least one comparison record is required"));
    }
    records.iter().try_for_each(ComparisonRecord::validate)
}

/// Mean absolute error in kcal.
pub fn mae(records: &[ComparisonRecord]) -> Result<f64> {
    check_records(records)?;
    Ok(records.iter().map(|r| r.deviation().abs()).sum::<f64>() / records.len() as f64)
}

/// Signed mean percentage error, relative to the system reading.
pub fn mpe(records: &[ComparisonRecord]) -> Result<f64> {
    check_records(records)?;
    Ok(records.iter().map(ComparisonRecord::percent_deviation).sum::<f64>() / records.len() as f64)
}

/// Like [`mpe`] but averaging absolute percentages. Diagnostic only.
pub fn mape(records: &[ComparisonRecord]) -> Result<f64> {
    check_records(records)?;
    Ok(records.iter().map(|r| r.percent_deviation().abs()).sum::<f64>() / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub subject_id: SubjectId,
    pub dlicp_kcal: f64,
    pub reference_kcal: f64,
    pub deviation: f64,
    pub percent: f64,
}

/// `system - reference` per subject, ordered by subject id.
pub fn deviation_table(records: &[ComparisonRecord]) -> Result<Vec<Deviation>> {
    check_records(records)?;
    let mut out: Vec<Deviation> = records
        .iter()
        .map(|r| Deviation {
            subject_id: r.subject_id.clone(),
            dlicp_kcal: r.dlicp_kcal,
            reference_kcal: r.reference_kcal,
            deviation: r.deviation(),
            percent: r.percent_deviation(),
        })
        .collect();
    out.sort_by(|a, b| natural_cmp(a.subject_id.as_str(), b.subject_id.as_str()));
    Ok(out)
}

/// Rounds `value` to as many decimals as `printed` shows and compares.
pub fn matches_printed(value: f64, printed: &str) -> Result<bool> {
    let p: f64 = printed
        .trim()
        .trim_start_matches('+')
        .parse()
        .map_err(|_| Error::invalid(format!("not a number: {printed}")))?;
    let decimals = printed.split_once('.').map_or(0, |(_, frac)| frac.len()) as i32;
    let scale = 10f64.powi(decimals);
    Ok((value * scale).round() == (p * scale).round())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    #[serde(rename = "mae")]
    pub mae_kcal: f64,
    #[serde(rename = "mpe")]
    pub mpe_percent: f64,
    #[serde(rename = "mape")]
    pub mape_percent: f64,
    pub paper_mae: f64,
    pub paper_mpe: f64,
    /// Recomputed values agree with the published ones to their printed precision.
    pub mae_matches_published: bool,
    pub mpe_matches_published: bool,
    pub per_subject: Vec<Deviation>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn evaluate(records: &[ComparisonRecord]) -> Result<EvalReport> {
    let mae_kcal = mae(records)?;
    let mpe_percent = mpe(records)?;
    Ok(EvalReport {
        n: records.len(),
        mae_kcal,
        mpe_percent,
        mape_percent: mape(records)?,
        paper_mae: PUBLISHED_MAE_KCAL,
        paper_mpe: PUBLISHED_MPE_PERCENT,
        mae_matches_published: (mae_kcal - PUBLISHED_MAE_KCAL).abs() < 0.005,
        mpe_matches_published: (mpe_percent - PUBLISHED_MPE_PERCENT).abs() < 0.005,
        per_subject: deviation_table(records)?,
    })
}

pub fn render_table3(results: &[Table3Result]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>12} {:>14} {:>6} {:>14} {:>14}",
        "Subject", "Weight (kg)", "Pace (km/h)", "MET", "kcal/min", "Total kcal"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>14} {:>6} {:>14} {:>14}",
            r.subject_id.as_str(),
            r.weight_kg,
            r.avg_pace_kmh,
            r.met,
            format_2dp(r.kcal_per_min),
            format_2dp(r.total_kcal)
        );
    }
    s
}

pub fn render_deviations(rows: &[Deviation]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>14} {:>14} {:>12} {:>10}",
        "Subject", "System kcal", "Reference", "Deviation", "Dev %"
    );
    for d in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>14.2} {:>14.2} {:>+12.2} {:>+10.2}",
            d.subject_id.as_str(),
            d.dlicp_kcal,
            d.reference_kcal,
            d.deviation,
            d.percent
        );
    }
    s
}

pub fn render_summary(report: &EvalReport) -> String {
    let flag = |ok: bool| if ok { "agrees" } else { "MISMATCH" };
    let mut s = String::new();
    let _ = writeln!(s, "{:<28} {:>12} {:>12}", format!("Metric (n = {})", report.n), "recomputed", "published");
    let _ = writeln!(
        s,
        "{:<28} {:>12.2} {:>12.2}  {}",
        "MAE (kcal)",
        report.mae_kcal,
        report.paper_mae,
        flag(report.mae_matches_published)
    );
    let _ = writeln!(
        s,
        "{:<28} {:>12.2} {:>12.2}  {}",
        "MPE (%, signed)",
        report.mpe_percent,
        report.paper_mpe,
        flag(report.mpe_matches_published)
    );
    let _ = writeln!(s, "{:<28} {:>12.2} {:>12}", "MAPE (%, diagnostic)", report.mape_percent, "-");
    s
}
