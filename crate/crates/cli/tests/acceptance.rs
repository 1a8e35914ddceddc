//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use parktrack_core::activity_model::{classify_met, truncate_2dp};
use parktrack_core::evaluation::{
    deviation_table, evaluate, matches_printed, read_table3, read_table4, reproduce_table3, SESSION_DURATION_S,
    TABLE3_CSV, TABLE4_CSV,
};
use parktrack_core::face_gallery::{cosine_similarity, enroll_roster, Embedding, Gallery, RosterEntry, Subject, SyntheticEmbeddings};
use parktrack_core::park_simulator::{replay, simulate, DetectionModel, ReplayOptions, Scenario, WalkerProfile};
use parktrack_core::session_tracker::{LapDecision, SightingEvent, TrackerConfig, WalkSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Integer cents parsed straight from printed text.
fn cents(s: &str) -> i64 {
    let s = s.trim().trim_start_matches('+');
    let neg = s.starts_with('-');
    let s = s.trim_start_matches('-');
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    let frac = format!("{frac:0<2}");
    let v = whole.parse::<i64>().unwrap() * 100 + frac[..2].parse::<i64>().unwrap();
    if neg {
        -v
    } else {
        v
    }
}

fn criterion_1_table3() -> Check {
    let start = Instant::now();
    let rows = read_table3(TABLE3_CSV.as_bytes()).map_err(|e| e.to_string())?;
    let results = reproduce_table3(&rows, SESSION_DURATION_S).map_err(|e| e.to_string())?;
    let mut ok = 0;
    for (row, r) in rows.iter().zip(&results) {
        for (printed, value) in [(&row.kcal_per_min, r.kcal_per_min), (&row.total_kcal, r.total_kcal)] {
            let printed: f64 = printed.as_deref().ok_or("missing printed cell")?.parse().map_err(|_| "bad cell")?;
            if (truncate_2dp(value) - printed).abs() <= 0.02 {
                ok += 1;
            } else {
                return Err(format!("{}: computed {} vs printed {printed}", row.subject_id, truncate_2dp(value)));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(ok == 44, format!("{ok}/44 cells"))?;
    ensure(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!("44/44 cells within 0.02 in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn criterion_2_table4() -> Check {
    let rows = read_table4(TABLE4_CSV.as_bytes()).map_err(|e| e.to_string())?;
    let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
    let devs = deviation_table(&records).map_err(|e| e.to_string())?;
    let mut ok = 0;
    for (row, d) in rows.iter().zip(&devs) {
        let printed = row.deviation.as_deref().ok_or("missing printed deviation")?;
        ensure(row.subject_id == d.subject_id, "ordering")?;
        ensure(
            matches_printed(d.deviation, printed).map_err(|e| e.to_string())?,
            format!("{}: {} vs {printed}", row.subject_id, d.deviation),
        )?;
        ok += 1;
    }
    ensure(ok == 22, format!("{ok}/22"))?;
    Ok("22/22 deviations at printed precision".into())
}

fn criterion_3_metrics(bin: &Path, tmp: &Path) -> Check {
    // Spreadsheet-style oracle over the printed strings.
    let lines: Vec<Vec<&str>> = TABLE4_CSV.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let n = lines.len() as f64;
    let oracle_mae = lines.iter().map(|f| (cents(f[1]) - cents(f[2])).abs()).sum::<i64>() as f64 / 100.0 / n;
    let oracle_mpe = lines
        .iter()
        .map(|f| (cents(f[1]) - cents(f[2])) as f64 / cents(f[1]) as f64 * 100.0)
        .sum::<f64>()
        / n;

    let records: Vec<_> = read_table4(TABLE4_CSV.as_bytes())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| r.record())
        .collect();
    let report = evaluate(&records).map_err(|e| e.to_string())?;
    ensure((report.mae_kcal - oracle_mae).abs() < 1e-9, "MAE disagrees with oracle")?;
    ensure((report.mpe_percent - oracle_mpe).abs() < 1e-9, "MPE disagrees with oracle")?;
    ensure((report.mae_kcal - 5.98).abs() <= 0.01, format!("MAE {}", report.mae_kcal))?;
    ensure((report.mpe_percent - 1.82).abs() <= 0.05, format!("MPE {}", report.mpe_percent))?;

    let out_json = tmp.join("report.json");
    let o = Command::new(bin)
        .args(["eval", "--out"])
        .arg(&out_json)
        .env_remove("PARKTRACK_DATA_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), "eval command failed")?;
    let stdout = String::from_utf8_lossy(&o.stdout);
    ensure(stdout.contains("5.98") && stdout.contains("5.64"), "MAE pair not displayed")?;
    ensure(stdout.contains("1.82") && stdout.contains("1.96"), "MPE pair not displayed")?;
    ensure(stdout.contains("MISMATCH"), "discrepancy not flagged")?;
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out_json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(json["paper_mae"] == 5.64 && json["paper_mpe"] == 1.96, "published values missing from JSON")?;
    ensure(json["mae_matches_published"] == false, "JSON does not flag MAE mismatch")?;
    Ok(format!(
        "MAE {:.4} (oracle {:.4}), MPE {:.4}% (oracle {:.4}%); published 5.64 / 1.96% shown and flagged",
        report.mae_kcal, oracle_mae, report.mpe_percent, oracle_mpe
    ))
}

fn criterion_4_met() -> Check {
    let rows = read_table3(TABLE3_CSV.as_bytes()).map_err(|e| e.to_string())?;
    for row in &rows {
        let met = classify_met(row.avg_pace_kmh).map_err(|e| e.to_string())?;
        ensure(Some(met) == row.met, format!("{}: {met} vs {:?}", row.subject_id, row.met))?;
    }
    ensure(classify_met(8.8).ok() == Some(11.5), "8.8 km/h must score 11.5")?;
    Ok(format!("{}/22 MET values, S9 8.8 km/h -> 11.5", rows.len()))
}

fn criterion_5_end_to_end() -> Check {
    let horizon = 1800.0;
    let scenario = Scenario {
        perimeter_m: 110.0,
        horizon_s: horizon,
        detection: DetectionModel::perfect(),
        walkers: vec![WalkerProfile::constant("S", 70.5, 6.0, horizon)],
        embeddings: None,
    };
    let sim = simulate(&scenario).map_err(|e| e.to_string())?;
    let roster = [RosterEntry { subject_id: "S".into(), name: "walker".into(), weight_kg: 70.5 }];
    let gallery = enroll_roster(&roster, &SyntheticEmbeddings::new(16, 0)).map_err(|e| e.to_string())?;
    let out = replay(sim.events.into_iter().map(|e| (0, Ok(e))), &gallery, &ReplayOptions::default())
        .map_err(|e| e.to_string())?;
    let sessions = out.subjects[0].sessions();
    ensure(sessions.len() == 1, format!("{} sessions", sessions.len()))?;
    let s = &sessions[0];
    ensure(s.laps == 27, format!("{} laps", s.laps))?;
    ensure(rel_err(s.stats.avg_pace_kmh, 6.0) <= 1e-9, format!("pace {}", s.stats.avg_pace_kmh))?;
    // Closed form: 27 laps of 110 m, 66 s each, MET 5 at 6.0 km/h.
    let elapsed_min = 27.0 * 66.0 / 60.0;
    let kcal = 5.0 * 70.5 * 3.5 / 200.0 * elapsed_min;
    ensure(rel_err(s.stats.total_kcal, kcal) <= 1e-9, format!("kcal {} vs {kcal}", s.stats.total_kcal))?;
    Ok(format!("27 laps, pace {:.12} km/h, {:.6} kcal (closed form {kcal:.6})", s.stats.avg_pace_kmh, s.stats.total_kcal))
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

fn criterion_6_properties(bin: &Path, tmp: &Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Cosine symmetry, bounds and scale invariance over 1000 pairs.
    for i in 0..1000 {
        let dim = 2 + i % 63;
        let a = Embedding::new(random_unit(&mut rng, dim)).unwrap();
        let b = Embedding::new(random_unit(&mut rng, dim)).unwrap();
        let c = rng.random_range(0.001..1000.0);
        let ab = cosine_similarity(&a, &b).unwrap();
        ensure(ab == cosine_similarity(&b, &a).unwrap(), format!("pair {i}: asymmetric"))?;
        ensure((-1.0..=1.0).contains(&ab), format!("pair {i}: out of bounds"))?;
        let scaled = cosine_similarity(&a.scaled(c).unwrap(), &b).unwrap();
        ensure((scaled - ab).abs() <= 1e-12, format!("pair {i}: scale changed cosine"))?;
    }

    // identify argmax scale invariance over 1000 queries.
    let mut gallery = Gallery::new(32).unwrap();
    for k in 0..22 {
        let e = Embedding::new(random_unit(&mut rng, 32)).unwrap();
        gallery.enroll(Subject::new(format!("S{k}"), "x", 70.0, e).unwrap()).unwrap();
    }
    for i in 0..1000 {
        let q = Embedding::new(random_unit(&mut rng, 32)).unwrap();
        let tau = rng.random_range(0.05..0.6);
        let c = rng.random_range(0.001..1000.0);
        let r = gallery.identify(&q, tau).unwrap();
        let rs = gallery.identify(&q.scaled(c).unwrap(), tau).unwrap();
        ensure(r.subject_id == rs.subject_id && r.matched == rs.matched, format!("query {i}: scale changed result"))?;
    }

    // Lap conservation and debounce soundness over random streams.
    for stream in 0..300 {
        let debounce = rng.random_range(5.0..60.0);
        let config = TrackerConfig { perimeter_m: 110.0, debounce_s: debounce, session_timeout_s: 1e12 };
        let mut s = WalkSession::new("S".into(), 70.0, config).unwrap();
        let mut t = 0.0;
        let mut accepted: Vec<f64> = Vec::new();
        for _ in 0..rng.random_range(1..300) {
            t += rng.random_range(0.0..90.0);
            let d = s.ingest(&SightingEvent::new(t, "S", 0.9)).unwrap();
            if matches!(d, LapDecision::SessionStarted | LapDecision::AcceptedNewLap) {
                accepted.push(t);
            }
            ensure(s.laps() + 1 == accepted.len() as u64, format!("stream {stream}: lap conservation"))?;
        }
        ensure(accepted.windows(2).all(|w| w[1] - w[0] >= debounce), format!("stream {stream}: debounce"))?;
    }

    // Tracker laps never exceed truth.
    for &p in &[0.0, 0.5, 1.0] {
        for seed in [1u64, 2, 3] {
            let walkers = (0..6)
                .map(|k| WalkerProfile {
                    start_offset_m: 17.0 * k as f64,
                    ..WalkerProfile::constant(format!("S{k}"), 60.0 + k as f64, 3.5 + 1.3 * k as f64, 1800.0)
                })
                .collect::<Vec<_>>();
            let scenario = Scenario {
                perimeter_m: 110.0,
                horizon_s: 1800.0,
                detection: DetectionModel { detect_prob: p, jitter_s: 1.0, false_match_prob: 0.0, seed },
                walkers,
                embeddings: None,
            };
            let sim = simulate(&scenario).unwrap();
            let roster: Vec<_> = scenario
                .walkers
                .iter()
                .map(|w| RosterEntry { subject_id: w.subject_id.clone(), name: "x".into(), weight_kg: w.weight_kg })
                .collect();
            let g = enroll_roster(&roster, &SyntheticEmbeddings::new(8, seed)).unwrap();
            let out = replay(sim.events.iter().cloned().map(|e| (0, Ok(e))), &g, &ReplayOptions::default()).unwrap();
            for (rep, truth) in out.subjects.iter().zip(&sim.truth) {
                ensure(rep.total_laps() <= truth.true_laps, format!("p={p} seed={seed}: {} over truth", rep.subject_id))?;
                if p == 1.0 {
                    ensure(rep.total_laps() == truth.true_laps, format!("p=1 seed={seed}: {} lost laps", rep.subject_id))?;
                }
            }
        }
    }

    let commands = determinism(bin, tmp)?;
    Ok(format!(
        "1000 cosine pairs, 1000 identify queries, 300 random streams, 9 truth-bound runs, {commands} commands byte-identical"
    ))
}

/// Runs every subcommand twice in separate directories and compares all output bytes.
fn determinism(bin: &Path, tmp: &Path) -> Result<usize, String> {
    let scenario = r#"{"perimeter_m": 110, "horizon_s": 1800,
      "detection": {"detect_prob": 0.8, "jitter_s": 2.0, "false_match_prob": 0.05, "seed": 0},
      "embeddings": {"dimension": 32, "shared_similarity": 0.1, "noise_angle_rad": 0.3},
      "walkers": [
        {"subject_id": "S1", "weight_kg": 73.3, "speed_profile": [{"start_s": 0, "end_s": 1800, "speed_kmh": 6.3}]},
        {"subject_id": "S2", "weight_kg": 49.5, "speed_profile": [{"start_s": 0, "end_s": 900, "speed_kmh": 8.8}, {"start_s": 900, "end_s": 1800, "speed_kmh": 5.0}], "start_offset_m": 40}
      ]}"#;
    let roster = "subject_id,name,weight_kg\nS1,One,73.3\nS2,Two,49.5\n";
    let steps: [&[&str]; 4] = [
        &["enroll", "--roster", "r.csv", "--out", "g.json", "--dim", "32", "--seed", "11"],
        &["simulate", "--scenario", "s.json", "--stream", "s.jsonl", "--truth", "t.csv", "--seed", "11"],
        &["track", "--stream", "s.jsonl", "--gallery", "g.json", "--data-dir", "data"],
        &["eval", "--out", "report.json"],
    ];
    let mut runs = Vec::new();
    for run in 0..2 {
        let dir = tmp.join(format!("det{run}"));
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("s.json"), scenario).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("r.csv"), roster).map_err(|e| e.to_string())?;
        let mut captured = Vec::new();
        for args in steps {
            let o = Command::new(bin)
                .current_dir(&dir)
                .env_remove("PARKTRACK_DATA_DIR")
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(o.status.code() == Some(0), format!("{} exited {:?}", args[0], o.status.code()))?;
            captured.push(o.stdout);
        }
        for f in ["g.json", "s.jsonl", "t.csv", "report.json", "data/sessions/S1-000.json", "data/sessions/S2-000.json"] {
            captured.push(std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        runs.push(captured);
    }
    ensure(runs[0] == runs[1], "outputs differ between identical runs")?;
    Ok(steps.len())
}

fn criterion_7_quantization() -> Check {
    let mut worst: f64 = 0.0;
    for &horizon in &[600.0, 1800.0, 3600.0, 7200.0] {
        let walkers: Vec<_> = [3.3, 4.7, 5.5, 6.0, 6.9, 8.8, 11.0]
            .iter()
            .enumerate()
            .map(|(k, &v)| WalkerProfile {
                start_offset_m: 11.0 * k as f64,
                ..WalkerProfile::constant(format!("S{k}"), 70.0, v, horizon)
            })
            .collect();
        let scenario = Scenario {
            perimeter_m: 110.0,
            horizon_s: horizon,
            detection: DetectionModel::perfect(),
            walkers,
            embeddings: None,
        };
        let sim = simulate(&scenario).map_err(|e| e.to_string())?;
        let roster: Vec<_> = scenario
            .walkers
            .iter()
            .map(|w| RosterEntry { subject_id: w.subject_id.clone(), name: "x".into(), weight_kg: w.weight_kg })
            .collect();
        let g = enroll_roster(&roster, &SyntheticEmbeddings::new(8, 0)).map_err(|e| e.to_string())?;
        let out = replay(sim.events.into_iter().map(|e| (0, Ok(e))), &g, &ReplayOptions::default()).map_err(|e| e.to_string())?;
        let bound = 110.0 / horizon * 3.6;
        for (rep, walker) in out.subjects.iter().zip(&scenario.walkers) {
            let true_pace = walker.speed_profile[0].speed_kmh;
            let tracked = rep.sessions().first().ok_or("no session")?.stats.avg_pace_kmh;
            let err = (tracked - true_pace).abs();
            worst = worst.max(err / bound);
            ensure(err <= bound, format!("T={horizon} {}: |{tracked} - {true_pace}| > {bound}", rep.subject_id))?;
        }
    }
    Ok(format!("4 horizons x 7 walkers within 110/T*3.6 (worst {:.2e} of bound)", worst))
}

fn main() {
    // `cargo test` passes harness flags like `--nocapture`; they do not apply here.
    let bin = Path::new(env!("CARGO_BIN_EXE_parktrack"));
    let tmp = tempfile::tempdir().expect("tempdir");
    let results: Vec<(&str, Check)> = vec![
        ("1 calorie table reproduction", criterion_1_table3()),
        ("2 comparison deviations", criterion_2_table4()),
        ("3 MAE / MPE recomputation", criterion_3_metrics(bin, tmp.path())),
        ("4 MET banding", criterion_4_met()),
        ("5 end-to-end oracle", criterion_5_end_to_end()),
        ("6 property suites", criterion_6_properties(bin, tmp.path())),
        ("7 pace quantization bound", criterion_7_quantization()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
