//! Subcommand bodies. Each returns the text to print; artifacts go to the
//! paths given on the command line and depend only on inputs, settings and
//! the seed.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use duet_core::dataset::{load_dataset, save_dataset};
use duet_core::metrics::feedback::{simulate_feedback_conditions, Condition, FeedbackRun};
use duet_core::metrics::report::render_table;
use duet_core::metrics::{analyze, SyncReport};
use duet_core::mir::extract_corpus;
use duet_core::model::{
    evaluate, load_model, replacement_table, save_model, train, EvaluationReport, ReplacementTable,
};
use duet_core::session::{
    parse_jsonl, run_replay, scripted_pieces, Agent, Body, DecisionSource, Fault, LiveSession,
    Piece, StrokeBank,
};
use duet_core::{parse_smf, write_smf, ChordLabel, MidiTrack};

use crate::args::{
    AnalyzeArgs, Decisions, EvaluateArgs, ExtractArgs, FeedbackArgs, ReplayArgs, ServeArgs,
    TrainArgs,
};
use crate::error::CliError;
use crate::settings::Settings;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(dir.display(), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::runtime(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(path.display(), e))?;
    text.push('\n');
    write_file(path, text)
}

pub fn extract(args: &ExtractArgs, settings: &Settings) -> Result<String, CliError> {
    let (pairs, manifest) =
        extract_corpus(&args.corpus, &settings.mir).map_err(|e| CliError::Data(e.to_string()))?;
    save_dataset(&args.out, &pairs).map_err(|e| CliError::runtime(args.out.display(), e))?;
    if let Some(path) = &args.manifest {
        write_json(path, &manifest)?;
    }
    let mut s = String::new();
    writeln!(s, "songs    {}", manifest.songs).unwrap();
    writeln!(s, "pairs    {}", manifest.pairs).unwrap();
    writeln!(s, "skipped  {}", manifest.skipped.len()).unwrap();
    for (chord, n) in &manifest.per_chord {
        writeln!(s, "  {chord:<5} {n}").unwrap();
    }
    Ok(s)
}

fn load_pairs(path: &Path) -> Result<Vec<duet_core::ChordMelodyPair>, CliError> {
    load_dataset(path).map_err(|e| CliError::data(path.display(), e))
}

pub fn train_model(args: &TrainArgs, settings: &Settings) -> Result<String, CliError> {
    let pairs = load_pairs(&args.data)?;
    let cfg = &settings.train;
    let outcome = train(&pairs, cfg).map_err(|e| CliError::Data(e.to_string()))?;
    save_model(&args.out, &outcome.model, &cfg.hash(), cfg.seed)
        .map_err(|e| CliError::runtime(args.out.display(), e))?;
    if let Some(path) = &args.history {
        write_json(path, &outcome.history)?;
    }
    if let Some(path) = &args.test_out {
        save_dataset(path, &outcome.split.test)
            .map_err(|e| CliError::runtime(path.display(), e))?;
    }
    let mut s = String::new();
    writeln!(
        s,
        "split    {} train / {} val / {} test",
        outcome.split.train.len(),
        outcome.split.val.len(),
        outcome.split.test.len()
    )
    .unwrap();
    writeln!(
        s,
        "epochs   {} (kept epoch {})",
        outcome.history.len(),
        outcome.best_epoch
    )
    .unwrap();
    if let Some(last) = outcome
        .history
        .iter()
        .find(|h| h.epoch == outcome.best_epoch)
    {
        writeln!(
            s,
            "train    loss {:.4} accuracy {:.4}",
            last.train_loss, last.train_accuracy
        )
        .unwrap();
        if let (Some(l), Some(a)) = (last.val_loss, last.val_accuracy) {
            writeln!(s, "val      loss {l:.4} accuracy {a:.4}").unwrap();
        }
    }
    if !outcome.split.test.is_empty() {
        let table = replacement_table(&pairs, settings.replacement_strength);
        let report = evaluate(&outcome.model, &outcome.split.test, &table)
            .map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(
            s,
            "test     raw {:.4} refined {:.4}",
            report.raw_accuracy, report.refined_accuracy
        )
        .unwrap();
    }
    Ok(s)
}

#[derive(Serialize)]
struct EvaluationOutput<'a> {
    report: &'a EvaluationReport,
    table: &'a ReplacementTable,
}

pub fn evaluate_model(args: &EvaluateArgs, settings: &Settings) -> Result<String, CliError> {
    let model = load_model(&args.checkpoint, None)
        .map_err(|e| CliError::data(args.checkpoint.display(), e))?;
    let pairs = load_pairs(&args.data)?;
    let table_pairs = match &args.table_data {
        Some(path) => load_pairs(path)?,
        None => pairs.clone(),
    };
    let table = replacement_table(&table_pairs, settings.replacement_strength);
    let report = evaluate(&model, &pairs, &table).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(path) = &args.out {
        write_json(
            path,
            &EvaluationOutput {
                report: &report,
                table: &table,
            },
        )?;
    }
    Ok(report.render(&table))
}

fn parse_chart(text: &str) -> Result<Vec<ChordLabel>, CliError> {
    let chart = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == '|')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<ChordLabel>()
                .map_err(|e| CliError::Usage(format!("chord chart: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if chart.is_empty() {
        return Err(CliError::Usage("chord chart is empty".into()));
    }
    Ok(chart)
}

fn decision_source(
    d: &Decisions,
    settings: &Settings,
    piece: Option<&Piece>,
) -> Result<DecisionSource, CliError> {
    if let Some(chart) = &d.chart {
        return Ok(DecisionSource::Chart(parse_chart(chart)?));
    }
    if let Some(path) = d
        .checkpoint
        .as_ref()
        .or(settings.session.checkpoint.as_ref())
    {
        let model = load_model(path, None).map_err(|e| CliError::data(path.display(), e))?;
        return Ok(DecisionSource::Model(Box::new(model)));
    }
    match piece {
        Some(p) => Ok(DecisionSource::Chart(p.chart.clone())),
        None => Err(CliError::Usage(
            "no chord source: pass --checkpoint, --chart or set the `checkpoint` key".into(),
        )),
    }
}

fn stroke_bank(settings: &Settings) -> Result<StrokeBank, CliError> {
    StrokeBank::tune(&settings.session).map_err(|e| CliError::runtime("keystroke tuning", e))
}

fn find_piece(name: &str) -> Result<Piece, CliError> {
    let pieces = scripted_pieces();
    let names: Vec<&str> = pieces.iter().map(|p| p.name).collect();
    let wanted = name.replace(['-', '_'], " ");
    pieces
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(&wanted))
        .cloned()
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown piece `{name}` (available: {})",
                names.join(", ")
            ))
        })
}

fn read_midi(path: &Path) -> Result<MidiTrack, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(path.display(), e))?;
    parse_smf(&bytes).map_err(|e| CliError::data(path.display(), e))
}

#[derive(Serialize)]
struct ChordRow {
    bar: u32,
    label: ChordLabel,
    ck: u8,
    strike_times: Vec<f64>,
}

#[derive(Serialize)]
struct ReplayReport<'a> {
    bars: u32,
    t_bar: f64,
    chords: Vec<ChordRow>,
    faults: &'a [Fault],
    late_notes: usize,
    sync: Option<SyncReport>,
}

pub fn replay(args: &ReplayArgs, settings: &Settings) -> Result<String, CliError> {
    let cfg = &settings.session;
    let piece = args.piece.as_deref().map(find_piece).transpose()?;
    let melody = match (&args.melody, &piece) {
        (Some(path), _) => read_midi(path)?,
        (None, Some(p)) => p
            .track(cfg.tempo, cfg.signature.beats)
            .map_err(|e| CliError::Data(format!("piece {}: {e}", p.name)))?,
        (None, None) => return Err(CliError::Usage("pass --melody or --piece".into())),
    };
    let source = decision_source(&args.decisions, settings, piece.as_ref())?;
    let bank = stroke_bank(settings)?;
    let outcome = run_replay(&melody, source, &bank, cfg);
    let perf = &outcome.performance;

    let dir = &args.out_dir;
    let merged =
        write_smf(&outcome.merged_midi()).map_err(|e| CliError::runtime("merged MIDI", e))?;
    write_file(&dir.join("duet.mid"), merged)?;
    write_file(&dir.join("session.jsonl"), outcome.log_jsonl())?;
    write_file(&dir.join("trajectory.txt"), perf.trajectory.to_text())?;
    write_json(&dir.join("beats.json"), &outcome.beats())?;
    let sync = outcome.report(&settings.analysis).ok();
    let report = ReplayReport {
        bars: outcome.bars,
        t_bar: outcome.t_bar,
        chords: perf
            .plans
            .iter()
            .map(|p| ChordRow {
                bar: p.bar,
                label: p.chord,
                ck: p.ck,
                strike_times: p.strike_times.clone(),
            })
            .collect(),
        faults: &perf.faults,
        late_notes: perf.late_notes,
        sync,
    };
    write_json(&dir.join("report.json"), &report)?;

    let mut s = String::new();
    writeln!(s, "bars     {}", outcome.bars).unwrap();
    let chart: Vec<String> = report
        .chords
        .iter()
        .map(|c| format!("{}x{}", c.label, c.ck))
        .collect();
    writeln!(
        s,
        "chords   {}",
        if chart.is_empty() {
            "-".into()
        } else {
            chart.join(" ")
        }
    )
    .unwrap();
    writeln!(s, "strikes  {}", perf.accompaniment.len() / 3).unwrap();
    writeln!(s, "faults   {}", perf.faults.len()).unwrap();
    if let Some(r) = &report.sync {
        s.push_str(&render_table(&[("replay".to_string(), r.clone())]));
    }
    Ok(s)
}

#[derive(Serialize)]
struct CycleStats {
    cycles: usize,
    p95_ms: Option<f64>,
    max_ms: Option<f64>,
    budget_ms: f64,
    clients_served: usize,
    duration_s: f64,
    faults: usize,
    hardware: String,
}

pub fn serve(args: &ServeArgs, settings: &Settings) -> Result<String, CliError> {
    let mut cfg = settings.session.clone();
    if let Some(bind) = &args.bind {
        cfg.bind = bind.clone();
    }
    if let Some(d) = args.duration {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::Usage(format!(
                "--duration must be positive, got {d}"
            )));
        }
    }
    let source = decision_source(&args.decisions, settings, None)?;
    let bank = stroke_bank(settings)?;
    let period = cfg.mpc.dt;
    let session = LiveSession::new(cfg.clone(), source, bank);
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("async runtime", e))?;
    let duration = args.duration;
    let summary = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.bind)
            .await
            .map_err(|e| CliError::runtime(format!("bind {}", cfg.bind), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::runtime("listener", e))?;
        eprintln!("listening on ws://{addr}/ws");
        let shutdown = async move {
            match duration {
                Some(d) => tokio::time::sleep(std::time::Duration::from_secs_f64(d)).await,
                None => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        };
        crate::server::run_server(listener, session, period, shutdown)
            .await
            .map_err(|e| CliError::runtime("server", e))
    })?;
    if let Some(path) = &args.log {
        write_file(path, duet_core::session::to_jsonl(&summary.performance.log))?;
    }
    let stats = CycleStats {
        cycles: summary.cycle_times.len(),
        p95_ms: summary.cycle_p95.map(|v| v * 1e3),
        max_ms: summary
            .cycle_times
            .iter()
            .copied()
            .reduce(f64::max)
            .map(|v| v * 1e3),
        budget_ms: settings.session.budget * 1e3,
        clients_served: summary.clients_served,
        duration_s: summary.duration,
        faults: summary.performance.faults.len(),
        hardware: crate::hardware_description(),
    };
    if let Some(path) = &args.stats {
        write_json(path, &stats)?;
    }
    let mut s = String::new();
    writeln!(
        s,
        "served   {:.1} s, {} clients",
        stats.duration_s, stats.clients_served
    )
    .unwrap();
    writeln!(s, "chords   {}", summary.performance.plans.len()).unwrap();
    writeln!(s, "faults   {}", stats.faults).unwrap();
    if let Some(p95) = stats.p95_ms {
        writeln!(
            s,
            "cycle    p95 {p95:.3} ms over {} cycles (budget {:.1} ms)",
            stats.cycles, stats.budget_ms
        )
        .unwrap();
    }
    writeln!(s, "hardware {}", stats.hardware).unwrap();
    Ok(s)
}

fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            CliError::Data(format!(
                "{}:{}: `{line}` is not a time",
                path.display(),
                i + 1
            ))
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(CliError::Data(format!(
                "{}:{}: time must be a nonnegative number",
                path.display(),
                i + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// Human and robot beats matched by bar from a session log.
fn beats_from_log(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
    let messages = parse_jsonl(&text)
        .map_err(|(line, e)| CliError::Data(format!("{}:{line}: {e}", path.display())))?;
    let mut human = std::collections::BTreeMap::new();
    let mut robot = std::collections::BTreeMap::new();
    for m in &messages {
        if let Body::Beat { agent, p, at } = m.body {
            match agent {
                Agent::Human => human.insert(p, at),
                Agent::Robot => robot.insert(p, at),
            };
        }
    }
    Ok(robot
        .iter()
        .filter_map(|(p, &r)| human.get(p).map(|&h| (h, r)))
        .unzip())
}

fn beat_grid(human: &[f64], robot: &[f64], period: f64) -> Vec<f64> {
    let last = human.iter().chain(robot).copied().fold(0.0, f64::max);
    let n = (last / period).floor() as usize + 1;
    (0..=n).map(|k| k as f64 * period).collect()
}

pub fn analyze_beats(args: &AnalyzeArgs, settings: &Settings) -> Result<String, CliError> {
    let (human, robot, name) = match (&args.log, &args.human, &args.robot) {
        (Some(log), _, _) => {
            let (h, r) = beats_from_log(log)?;
            (h, r, log.display().to_string())
        }
        (None, Some(h), Some(r)) => (read_series(h)?, read_series(r)?, "beats".to_string()),
        _ => {
            return Err(CliError::Usage(
                "pass --log or both --human and --robot".into(),
            ))
        }
    };
    let period = args.period.unwrap_or_else(|| settings.session.t_bar());
    if !(period.is_finite() && period > 0.0) {
        return Err(CliError::Usage(format!(
            "--period must be positive, got {period}"
        )));
    }
    let grid = beat_grid(&human, &robot, period);
    let report = analyze(&human, &robot, &grid, &settings.analysis)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(render_table(&[(name, report)]))
}

#[derive(Serialize)]
struct ConditionSummary {
    condition: String,
    runs: usize,
    mae: f64,
    entropy: f64,
    si: f64,
    mean_abs_tg: f64,
    reports: Vec<SyncReport>,
}

fn summarize(
    condition: Condition,
    runs: &[FeedbackRun],
    settings: &Settings,
) -> Result<ConditionSummary, CliError> {
    let reports = runs
        .iter()
        .map(|r| analyze(&r.human_beats, &r.robot_beats, &r.grid, &settings.analysis))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::runtime(condition.name(), e))?;
    let n = reports.len() as f64;
    let mean = |f: fn(&SyncReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(ConditionSummary {
        condition: condition.name().to_string(),
        runs: reports.len(),
        mae: mean(|r| r.mae),
        entropy: mean(|r| r.entropy),
        si: mean(|r| r.si),
        mean_abs_tg: mean(|r| r.mean_abs_tg),
        reports,
    })
}

pub fn simulate_feedback(args: &FeedbackArgs, settings: &Settings) -> Result<String, CliError> {
    let mut summaries = Vec::new();
    for condition in Condition::ALL {
        let runs = simulate_feedback_conditions(condition, settings.seed(), &settings.feedback);
        if let Some(dir) = &args.midi_dir {
            let bytes = write_smf(&runs[0].to_midi())
                .map_err(|e| CliError::runtime(condition.name(), e))?;
            write_file(&dir.join(format!("{}.mid", condition.name())), bytes)?;
        }
        summaries.push(summarize(condition, &runs, settings)?);
    }
    if let Some(path) = &args.out {
        write_json(path, &summaries)?;
    }
    let mut s = String::new();
    writeln!(
        s,
        "{:<8} {:>5} {:>9} {:>12} {:>8} {:>10}",
        "cond", "runs", "MAE(s)", "entropy(bit)", "SI", "|TG|(s)"
    )
    .unwrap();
    for c in &summaries {
        writeln!(
            s,
            "{:<8} {:>5} {:>9.4} {:>12.4} {:>8.4} {:>10.4}",
            c.condition, c.runs, c.mae, c.entropy, c.si, c.mean_abs_tg
        )
        .unwrap();
    }
    Ok(s)
}
