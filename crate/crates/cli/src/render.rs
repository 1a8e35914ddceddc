use std::fmt::Write;

use parktrack_core::activity_model::format_2dp;
use parktrack_core::park_simulator::ReplayOutcome;
use parktrack_core::SessionRecord;

const HEADER: [&str; 8] = ["Subject", "Weight (kg)", "Laps", "Distance (m)", "Pace (km/h)", "MET", "kcal/min", "Total kcal"];

fn header(s: &mut String) {
    let _ = writeln!(
        s,
        "{:<10} {:>11} {:>6} {:>12} {:>11} {:>6} {:>9} {:>11}",
        HEADER[0], HEADER[1], HEADER[2], HEADER[3], HEADER[4], HEADER[5], HEADER[6], HEADER[7]
    );
}

fn row(s: &mut String, r: &SessionRecord) {
    let _ = writeln!(
        s,
        "{:<10} {:>11} {:>6} {:>12} {:>11} {:>6} {:>9} {:>11}",
        r.subject_id.as_str(),
        r.weight_kg,
        r.laps,
        r.stats.distance_m,
        format_2dp(r.stats.avg_pace_kmh),
        r.stats.met,
        format_2dp(r.stats.kcal_per_min),
        format_2dp(r.stats.total_kcal)
    );
}

/// One line per closed session, with subjects that were never seen listed
/// after the table.
pub fn session_table(outcome: &ReplayOutcome) -> String {
    let mut s = String::new();
    header(&mut s);
    for r in outcome.closed_sessions() {
        row(&mut s, r);
    }
    let unseen: Vec<_> = outcome
        .subjects
        .iter()
        .filter(|r| r.track.is_none())
        .map(|r| r.subject_id.as_str())
        .collect();
    if !unseen.is_empty() {
        let _ = writeln!(s, "no sightings: {}", unseen.join(", "));
    }
    s
}

pub fn session_detail(r: &SessionRecord) -> String {
    let mut s = String::new();
    header(&mut s);
    row(&mut s, r);
    let _ = writeln!(
        s,
        "window {:.1} s -> {:.1} s ({:.1} s), {} accepted sightings, perimeter {} m, debounce {} s",
        r.t0_s, r.last_accepted_s, r.stats.elapsed_s, r.accepted_sightings, r.perimeter_m, r.debounce_s
    );
    s
}
