use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distilltrack::distill::{
    distill_dataset, storage_overhead, DetectionRecord, LookupEmbedder, OracleEmbedder, RecordKey,
    TeacherEmbedder,
};
use distilltrack::io::config::RunConfig;
use distilltrack::io::mot::{
    group_rows, parse_mot, to_detection_frames, to_ground_truth, to_hypotheses,
    to_scored_detections, write_mot, MotFrame, MotRow,
};
use distilltrack::io::scenario::{frame_image_id, synth_scenario, ScenarioConfig};
use distilltrack::io::{augmented, IoError};
use distilltrack::losses::toy::{generate_toy_data, retrieval_top1, train_toy_head};
use distilltrack::metrics::{evaluate_sequence, format_report};
use distilltrack::postprocess::postprocess;
use distilltrack::selftest;
use distilltrack::tracker::track_sequence;

#[derive(Parser)]
#[command(
    name = "distilltrack",
    version,
    about = "Distillation, tracking and MOT evaluation tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attach teacher embeddings to a detection file.
    Distill {
        /// Detections in MOT text layout; frame numbers become image ids.
        #[arg(long = "in")]
        input: PathBuf,
        /// `oracle` or `file:<path>` (MOT rows with embedding columns).
        #[arg(long)]
        embedder: String,
        /// Output path; `.bin` selects the binary layout.
        #[arg(long)]
        out: PathBuf,
        /// MOT rows whose id column names the identity of each box (oracle only).
        #[arg(long)]
        identities: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Oracle sample noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Run the tracker over a detection sequence.
    Track {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate tracker output against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long)]
        det: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Sequence name in the report; defaults to the ground-truth file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate a synthetic sequence: gt.txt, det.txt, identities.txt.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the toy joint head and write its loss curve.
    Traintoy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in gradient, assignment and metric checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Validation(String),
    Io(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_mot(path: &Path) -> Result<Vec<MotFrame>, Failure> {
    parse_mot(&read_text(path)?)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file so a failed run leaves nothing behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
    let name = path
        .file_name()
        .ok_or_else(|| Failure::Io(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            RunConfig::parse(&read_text(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
        None => Ok(RunConfig::default()),
    }
}

fn records_of(frames: &[MotFrame]) -> Result<Vec<DetectionRecord>, Failure> {
    let mut out = Vec::new();
    for f in frames {
        for r in &f.rows {
            let bbox = r
                .bbox()
                .map_err(|e| invalid(format!("frame {}: {e}", f.frame)))?;
            out.push(DetectionRecord::person(frame_image_id(f.frame), bbox));
        }
    }
    Ok(out)
}

fn keyed_rows(frames: &[MotFrame]) -> Result<Vec<(RecordKey, &MotRow)>, Failure> {
    let mut out = Vec::new();
    for f in frames {
        for r in &f.rows {
            let bbox = r
                .bbox()
                .map_err(|e| invalid(format!("frame {}: {e}", f.frame)))?;
            out.push((RecordKey::new(&frame_image_id(f.frame), &bbox), r));
        }
    }
    Ok(out)
}

fn distill(
    input: &Path,
    embedder: &str,
    out: &Path,
    identities: Option<&Path>,
    dim: usize,
    seed: u64,
    noise: f64,
) -> Result<(), Failure> {
    let base_bytes = fs::metadata(input)
        .map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?
        .len();
    let frames = read_mot(input)?;
    let records = records_of(&frames)?;
    let teacher: Box<dyn TeacherEmbedder> = if let Some(path) = embedder.strip_prefix("file:") {
        let table = read_mot(Path::new(path))?;
        let entries = keyed_rows(&table)?
            .into_iter()
            .map(|(k, r)| (k, r.embedding.clone()))
            .collect::<Vec<_>>();
        if entries.iter().any(|(_, e)| e.is_empty()) {
            return Err(invalid(format!("{path}: rows need embedding columns")));
        }
        Box::new(LookupEmbedder::new(format!("file:{path}"), entries).map_err(invalid)?)
    } else if embedder == "oracle" {
        if dim == 0 || !(noise.is_finite() && noise >= 0.0) {
            return Err(invalid("oracle needs dim >= 1 and a non-negative noise"));
        }
        let mut oracle = OracleEmbedder::new(dim, seed, noise);
        if let Some(path) = identities {
            let table = read_mot(path)?;
            let map: HashMap<RecordKey, u64> = keyed_rows(&table)?
                .into_iter()
                .map(|(k, r)| (k, r.id.max(0) as u64))
                .collect();
            oracle = oracle.with_identities(map);
        }
        Box::new(oracle)
    } else {
        return Err(invalid(format!(
            "unknown embedder {embedder:?}; use oracle or file:<path>"
        )));
    };
    let dataset = distill_dataset(&records, teacher.as_ref()).map_err(invalid)?;
    let bytes = augmented::write_file(out, &dataset)?;
    write_atomic(out, &bytes)?;
    if base_bytes > 0 {
        let ratio = storage_overhead(&dataset.records, base_bytes, dataset.metadata.float_width)
            .map_err(invalid)?;
        eprintln!(
            "distilled {} records, D_t={}, embedding payload {:.1}% of {} input bytes",
            dataset.records.len(),
            dataset.metadata.dim,
            ratio * 100.0,
            base_bytes
        );
    } else {
        eprintln!(
            "distilled {} records from an empty input",
            dataset.records.len()
        );
    }
    Ok(())
}

fn track(input: &Path, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_run_config(config)?;
    let frames = to_scored_detections(&read_mot(input)?)?;
    let filtered = frames
        .iter()
        .map(|f| postprocess(f, &cfg.postprocess))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let outputs =
        track_sequence(&filtered, &cfg.association, cfg.backfill_tentative).map_err(invalid)?;
    let rows: Vec<MotRow> = outputs
        .iter()
        .map(|o| MotRow::new(o.frame, o.track_id as i64, &o.bbox, 1.0))
        .collect();
    write_atomic(out, write_mot(&group_rows(rows)).as_bytes())?;
    eprintln!("tracked {} frames, {} boxes", filtered.len(), outputs.len());
    Ok(())
}

fn eval(
    gt: &Path,
    res: &Path,
    det: Option<&Path>,
    report: &Path,
    name: Option<String>,
) -> Result<(), Failure> {
    let gts = to_ground_truth(&read_mot(gt)?)?;
    let hyps = to_hypotheses(&read_mot(res)?)?;
    let dets = match det {
        Some(p) => Some(to_detection_frames(&read_mot(p)?)?),
        None => None,
    };
    let name = name.unwrap_or_else(|| {
        gt.file_stem().map_or_else(
            || "sequence".to_string(),
            |s| s.to_string_lossy().into_owned(),
        )
    });
    let e = evaluate_sequence(&name, &gts, &hyps, dets.as_deref());
    write_atomic(report, format_report(&[e]).as_bytes())
}

fn synth(config: Option<&Path>, out_dir: &Path) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => ScenarioConfig::parse(&read_text(p)?)
            .map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => ScenarioConfig::default(),
    };
    let s = synth_scenario(&cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Failure::Io(format!("{}: {e}", out_dir.display())))?;
    write_atomic(&out_dir.join("gt.txt"), write_mot(&s.gt_rows()).as_bytes())?;
    write_atomic(
        &out_dir.join("det.txt"),
        write_mot(&s.detection_rows(true)).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("identities.txt"),
        write_mot(&s.identity_rows()).as_bytes(),
    )?;
    Ok(())
}

fn traintoy(config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_run_config(config)?;
    let (train, heldout) = generate_toy_data(&cfg.toy_data).map_err(invalid)?;
    let outcome = train_toy_head(&train, &cfg.toy_head, &cfg.losses()).map_err(invalid)?;
    let mut text = String::from("iteration,l_c,l_b,l_e,total\n");
    for r in &outcome.curve {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.l_c, r.l_b, r.l_e, r.total
        ));
    }
    write_atomic(out, text.as_bytes())?;
    let top1 = retrieval_top1(&outcome.head, &train, &heldout);
    eprintln!("held-out top-1 retrieval {:.4}", top1);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Distill {
            input,
            embedder,
            out,
            identities,
            dim,
            seed,
            noise,
        } => distill(
            &input,
            &embedder,
            &out,
            identities.as_deref(),
            dim,
            seed,
            noise,
        ),
        Command::Track { input, config, out } => track(&input, config.as_deref(), &out),
        Command::Eval {
            gt,
            res,
            det,
            report,
            name,
        } => eval(&gt, &res, det.as_deref(), &report, name),
        Command::Synth { config, out_dir } => synth(config.as_deref(), &out_dir),
        Command::Traintoy { config, out } => traintoy(config.as_deref(), &out),
        Command::Selftest { seed } => {
            let results = selftest::run_all(seed);
            for r in &results {
                eprintln!(
                    "{} {}: {}",
                    if r.passed { "ok  " } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(invalid("self-test failed"))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
