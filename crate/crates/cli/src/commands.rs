use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use parktrack_core::config::{ConfigOverrides, DATA_DIR_ENV};
use parktrack_core::evaluation::{self, TABLE3_CSV, TABLE4_CSV};
use parktrack_core::face_gallery::{self, EmbeddingSource, SyntheticEmbeddings};
use parktrack_core::park_simulator::{self, Scenario};
use parktrack_core::session_tracker::{read_sightings, SessionRecord, SessionStore};
use parktrack_core::{Config, Embedding, Gallery, Subject};

use crate::render;
use crate::{Common, EnrollArgs, EvalArgs, ReportArgs, SimulateArgs, TrackArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_EMPTY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

fn resolve_config(common: &Common, flags: ConfigOverrides) -> Result<Config> {
    let file = common
        .config
        .as_deref()
        .map(|p| ConfigOverrides::load(p).with_context(|| format!("config {}", p.display())))
        .transpose()?;
    let env = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    let flags = ConfigOverrides {
        data_dir: common.data_dir.clone(),
        ..flags
    };
    Ok(Config::resolve(flags, env, file)?)
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> parktrack_core::Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn enroll(args: EnrollArgs) -> Result<u8> {
    let config = resolve_config(
        &args.common,
        ConfigOverrides {
            embedding_dim: args.dim,
            ..Default::default()
        },
    )?;
    let file = File::open(&args.roster).with_context(|| format!("roster {}", args.roster.display()))?;
    let roster = face_gallery::read_roster(file).with_context(|| format!("roster {}", args.roster.display()))?;

    let gallery = match &args.embeddings {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("embeddings {}", path.display()))?;
            let supplied: BTreeMap<String, Vec<f64>> =
                serde_json::from_str(&text).with_context(|| format!("embeddings {}", path.display()))?;
            let dim = match roster.first() {
                Some(first) => supplied
                    .get(first.subject_id.as_str())
                    .map(Vec::len)
                    .ok_or_else(|| anyhow!("no embedding supplied for `{}`", first.subject_id))?,
                None => config.embedding_dim,
            };
            let mut gallery = Gallery::new(dim)?;
            for (i, entry) in roster.iter().enumerate() {
                let values = supplied
                    .get(entry.subject_id.as_str())
                    .ok_or_else(|| anyhow!("row {}: no embedding supplied for `{}`", i + 1, entry.subject_id))?;
                let embedding = Embedding::new(values.clone()).with_context(|| format!("row {}", i + 1))?;
                gallery
                    .enroll(Subject::new(entry.subject_id.clone(), entry.name.clone(), entry.weight_kg, embedding)?)
                    .with_context(|| format!("row {}", i + 1))?;
            }
            gallery
        }
        None => {
            let source = SyntheticEmbeddings::new(config.embedding_dim, args.common.seed.unwrap_or(0));
            face_gallery::enroll_roster(&roster, &source as &dyn EmbeddingSource)?
        }
    };
    write_file(&args.out, |w| {
        w.write_all(gallery.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    if gallery.is_empty() {
        eprintln!("warning: roster {} has no subjects; wrote an empty gallery", args.roster.display());
        return Ok(EXIT_EMPTY);
    }
    println!("enrolled {} subjects (dimension {}) -> {}", gallery.len(), gallery.dimension(), args.out.display());
    Ok(EXIT_OK)
}

pub fn simulate(args: SimulateArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.scenario).with_context(|| format!("scenario {}", args.scenario.display()))?;
    let mut scenario = Scenario::from_json(&text).with_context(|| format!("scenario {}", args.scenario.display()))?;
    if let Some(seed) = args.common.seed {
        scenario.detection.seed = seed;
    }
    let sim = park_simulator::simulate(&scenario)?;
    write_file(&args.stream, |w| sim.write_stream(w))?;
    write_file(&args.truth, |w| sim.write_truth(w))?;
    println!(
        "{} sightings from {} walkers over {} s -> {}, {}",
        sim.events.len(),
        scenario.walkers.len(),
        scenario.horizon_s,
        args.stream.display(),
        args.truth.display()
    );
    Ok(EXIT_OK)
}

pub fn track(args: TrackArgs) -> Result<u8> {
    let config = resolve_config(
        &args.common,
        ConfigOverrides {
            perimeter_m: args.perimeter,
            debounce_s: args.debounce,
            match_threshold: args.threshold,
            session_timeout_s: args.timeout,
            ..Default::default()
        },
    )?;
    let gallery = Gallery::load(&args.gallery).with_context(|| format!("gallery {}", args.gallery.display()))?;
    let file = File::open(&args.stream).with_context(|| format!("stream {}", args.stream.display()))?;
    let mut parse_failures = Vec::new();
    let stream = read_sightings(BufReader::new(file)).inspect(|(line, r)| {
        if let Err(e) = r {
            parse_failures.push((*line, e.to_string()));
        }
    });
    let outcome = park_simulator::replay(stream, &gallery, &config.replay_options())?;
    for (line, msg) in parse_failures.iter().take(5) {
        eprintln!("skipped line {line}: {msg}");
    }
    if outcome.parse_errors > 0 {
        eprintln!("skipped {} unparseable line(s)", outcome.parse_errors);
    }
    if outcome.unmatched > 0 {
        eprintln!("{} sighting(s) matched no enrolled subject", outcome.unmatched);
    }

    print!("{}", render::session_table(&outcome));
    let store = SessionStore::new(config.sessions_dir());
    let mut written = 0;
    for report in &outcome.subjects {
        for (seq, record) in report.sessions().iter().enumerate() {
            store.save(record, seq)?;
            written += 1;
        }
    }
    if written == 0 {
        eprintln!("no sessions closed");
        return Ok(EXIT_EMPTY);
    }
    eprintln!("wrote {written} session file(s) to {}", store.dir().display());
    Ok(EXIT_OK)
}

fn read_or_bundled(path: &Option<PathBuf>, bundled: &'static str) -> Result<Vec<u8>> {
    match path {
        Some(p) => std::fs::read(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(bundled.as_bytes().to_vec()),
    }
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let config = resolve_config(&args.common, ConfigOverrides::default())?;
    let t3 = read_or_bundled(&args.table3, TABLE3_CSV)?;
    let t4 = read_or_bundled(&args.table4, TABLE4_CSV)?;

    let rows = evaluation::read_table3(t3.as_slice()).context("calorie table")?;
    let results = evaluation::reproduce_table3(&rows, evaluation::SESSION_DURATION_S).context("calorie table")?;
    let checks = evaluation::check_table3(&rows, &results)?;
    let comparison = evaluation::read_table4(t4.as_slice()).context("comparison table")?;
    if comparison.is_empty() {
        bail!("comparison table has no rows");
    }
    let records: Vec<_> = comparison.iter().map(|r| r.record()).collect();
    let report = evaluation::evaluate(&records)?;

    println!("Reproduced calorie table ({} rows, 30 min)", results.len());
    print!("{}", evaluation::render_table3(&results));
    if !checks.is_empty() {
        let exact = checks.iter().filter(|c| c.exact()).count();
        println!("printed cells reproduced: {exact}/{}", checks.len());
        for c in checks.iter().filter(|c| !c.exact()) {
            println!("  {} {}: printed {} computed {}", c.subject_id, c.column, c.printed, c.computed);
        }
    }
    println!();
    println!("Deviation (system - reference)");
    print!("{}", evaluation::render_deviations(&report.per_subject));
    let printed_devs: Vec<_> = comparison.iter().filter_map(|r| r.deviation.as_ref().map(|d| (r, d))).collect();
    if !printed_devs.is_empty() {
        let mut agree = 0;
        for (row, printed) in &printed_devs {
            if evaluation::matches_printed(row.record().deviation(), printed)? {
                agree += 1;
            } else {
                println!("  {}: printed deviation {} != computed {:.2}", row.subject_id, printed, row.record().deviation());
            }
        }
        println!("printed deviations reproduced: {agree}/{}", printed_devs.len());
    }
    println!();
    print!("{}", evaluation::render_summary(&report));
    if !(report.mae_matches_published && report.mpe_matches_published) {
        println!("note: published MAE/MPE are not recoverable from the comparison table above");
    }

    let out = args.out.unwrap_or_else(|| config.data_dir.join("report.json"));
    write_file(&out, |w| {
        w.write_all(report.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    eprintln!("report -> {}", out.display());
    Ok(EXIT_OK)
}

pub fn report(args: ReportArgs) -> Result<u8> {
    let record = SessionRecord::load(&args.session).with_context(|| format!("session {}", args.session.display()))?;
    print!("{}", render::session_detail(&record));
    Ok(EXIT_OK)
}
