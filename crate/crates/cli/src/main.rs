//! `xpcr`: profile forecasters, train meta-learners, recommend, evaluate, serve.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use xpcr_core::data::{load_dataset, manifest_paths, subsample_variants, write_dataset, Dataset};
use xpcr_core::evaluation::{build_database, convergence_csv, run_study, StudyConfig};
use xpcr_core::forecasters::ModelPool;
use xpcr_core::metafeatures::FeatureSchema;
use xpcr_core::metalearn::{LearnerBundle, LearnerConfig};
use xpcr_core::profiler::{ProfilerConfig, TimingMode};
use xpcr_core::propertydb::{PropertyDatabase, RecordStatus};
use xpcr_core::recommender::{recommend, Mode};
use xpcr_core::scoring::WeightVector;
use xpcr_core::synthetic::{family_specs, generate_family, VARIANT_FRACTIONS};
use xpcr_core::Error;

#[derive(Parser)]
#[command(name = "xpcr", version, about = "Multi-objective, explainable forecaster selection")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Nominal device power used to turn time into energy.
    #[arg(long, global = true, default_value_t = 65.0)]
    power_rating_w: f64,
    /// Grouped cross-validation folds.
    #[arg(long, global = true, default_value_t = 5)]
    folds: usize,
    /// JSON file of property weights, or inline `name=value,...`.
    #[arg(long, global = true)]
    weights: Option<String>,
    /// `work` counts operations (reproducible); `wall` reads the clock.
    #[arg(long, global = true, value_enum, default_value_t = Timing::Work)]
    timing: Timing,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Timing {
    Work,
    Wall,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Compositional,
    Direct,
}

#[derive(Subcommand)]
enum Command {
    /// Profile every model on every dataset manifest into a property database.
    Profile {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated model keys; defaults to the whole pool.
        #[arg(long)]
        models: Option<String>,
    },
    /// Select and fit one meta-learner per property plus a direct compound learner.
    Train {
        #[arg(long)]
        db: PathBuf,
    },
    /// Rank the pool for a dataset with a trained bundle.
    Recommend {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value_t = ModeArg::Compositional)]
        mode: ModeArg,
    },
    /// Full study: variants, profiling, grouped CV, quality and convergence reports.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Use the manifests as they are instead of adding subsampled variants.
        #[arg(long)]
        no_variants: bool,
    },
    /// HTTP API for the UI.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Extra manifests to expose that are not in the database.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory of UI assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Write the synthetic dataset families as manifests.
    DemoData {
        /// Number of families (at most 19).
        #[arg(long, default_value_t = xpcr_core::synthetic::NUM_FAMILIES)]
        families: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InsufficientGroups { .. } | Error::InsufficientData(_) | Error::PropertyUnavailable { .. } => 3,
        Error::SchemaMismatch { .. } => 4,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::SeriesTooShort { .. }
        | Error::InvalidDataset(_)
        | Error::UnknownModel(_)
        | Error::UnknownProperty(_)
        | Error::UnknownDataset(_)
        | Error::InvalidWeights { .. }
        | Error::InvalidProfile { .. }
        | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Writes to stdout; a closed pipe (`xpcr ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn print_json(v: &Value) -> Result<(), Error> {
    emit(&serde_json::to_string_pretty(v)?)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File path if it exists, otherwise inline `name=value` pairs.
fn parse_weights(arg: Option<&str>) -> Result<WeightVector, Error> {
    let Some(arg) = arg else {
        return Ok(WeightVector::default());
    };
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let map: BTreeMap<String, f64> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        WeightVector::from_pairs(map)
    } else {
        WeightVector::parse_inline(arg)
    }
}

fn load_dir(dir: &Path) -> Result<Vec<Dataset>, Error> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("data directory {} does not exist", dir.display())));
    }
    let paths = manifest_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no manifests in {}", dir.display())));
    }
    paths.iter().map(load_dataset).collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    let weights = parse_weights(cli.weights.as_deref())?;
    let profiler = ProfilerConfig {
        power_rating_w: cli.power_rating_w,
        timing: match cli.timing {
            Timing::Work => TimingMode::Work,
            Timing::Wall => TimingMode::Wall,
        },
        ..ProfilerConfig::default()
    };
    let learner = LearnerConfig {
        seed: cli.seed,
        ..LearnerConfig::default()
    };
    match cli.command {
        Command::Profile { data, models } => {
            let pool = match models {
                Some(list) => ModelPool::new(list.split(',').map(str::trim))?,
                None => ModelPool::default(),
            };
            let datasets = load_dir(&data)?;
            let (db, warnings) = build_database(&datasets, &pool, &profiler)?;
            for w in &warnings {
                log::warn!("{w}");
            }
            let out = cli.out.unwrap_or_else(|| PathBuf::from("property_db.jsonl"));
            db.save(&out)?;
            let count = |s: RecordStatus| db.records().filter(|r| r.status == s).count();
            print_json(&json!({
                "command": "profile",
                "datasets": datasets.len(),
                "models": pool.keys(),
                "records": db.len(),
                "ok": count(RecordStatus::Ok),
                "undefined": count(RecordStatus::Undefined),
                "failed": count(RecordStatus::Failed),
                "warnings": warnings.len(),
                "schema_hash": db.schema().map(FeatureSchema::hash),
            }))
        }
        Command::Train { db } => {
            let db = PropertyDatabase::load(&db)?;
            let outcome = LearnerBundle::train(&db, &weights, cli.folds, &learner)?;
            let bundle = outcome.bundle;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("bundle.json"));
            bundle.save(&out)?;
            let report_path = out.with_extension("cv.json");
            write(&report_path, &(serde_json::to_string_pretty(&bundle.cv_reports)? + "\n"))?;
            let chosen: BTreeMap<&str, String> = bundle
                .cv_reports
                .iter()
                .map(|(t, r)| (t.as_str(), r.chosen.to_string()))
                .collect();
            let errors: BTreeMap<&str, f64> = bundle
                .cv_reports
                .iter()
                .map(|(t, r)| (t.as_str(), r.error_of(r.chosen).unwrap_or(f64::NAN)))
                .collect();
            print_json(&json!({
                "command": "train",
                "property_learners": bundle.learners.len(),
                "direct_learner": bundle.compound.is_some(),
                "folds": cli.folds,
                "chosen": chosen,
                "cv_error": errors,
                "schema_hash": bundle.schema_hash,
                "bundle_sha256": bundle.content_hash()?,
            }))
        }
        Command::Recommend {
            manifest,
            bundle,
            k,
            mode,
        } => {
            let d = load_dataset(&manifest)?;
            let bundle = LearnerBundle::load(&bundle)?;
            let schema = FeatureSchema::new(&ModelPool::default());
            let mode = match mode {
                ModeArg::Compositional => Mode::Compositional,
                ModeArg::Direct => Mode::Direct,
            };
            let mut rec = recommend(&d, &bundle, &schema, &weights, mode)?;
            if let Some(k) = k {
                rec = rec.truncate(k);
            }
            let text = serde_json::to_string_pretty(&rec)?;
            if let Some(out) = cli.out {
                write(&out, &(text.clone() + "\n"))?;
            }
            emit(&text)
        }
        Command::Evaluate { data, no_variants } => {
            let originals = load_dir(&data)?;
            let mut datasets = Vec::new();
            for (i, d) in originals.into_iter().enumerate() {
                if !no_variants {
                    let variants = subsample_variants(&d, &VARIANT_FRACTIONS, cli.seed.wrapping_add(1 + i as u64))?;
                    datasets.push(d);
                    datasets.extend(variants);
                } else {
                    datasets.push(d);
                }
            }
            let config = StudyConfig {
                seed: cli.seed,
                n_folds: cli.folds,
                weights,
                profiler,
                learner,
                ..StudyConfig::default()
            };
            let out_dir = cli.out.unwrap_or_else(|| PathBuf::from("study"));
            create_dir(&out_dir)?;
            let outcome = run_study(&datasets, &ModelPool::default(), &config)?;
            let db_path = out_dir.join("property_db.jsonl");
            outcome.db.save(&db_path)?;
            let r = &outcome.report;
            write(&out_dir.join("report.json"), &(serde_json::to_string_pretty(r)? + "\n"))?;
            write(&out_dir.join("quality.csv"), &r.quality.to_csv())?;
            write(&out_dir.join("convergence.csv"), &convergence_csv(&r.convergence))?;
            let modes: BTreeMap<String, Value> = r
                .modes
                .iter()
                .map(|(m, s)| {
                    (
                        m.as_str().to_string(),
                        json!({
                            "abs_error": s.abs_error.mean,
                            "top1": s.top1.mean,
                            "top5_hit": s.top5_hit.mean,
                            "top5_hit_std": s.top5_hit.std,
                        }),
                    )
                })
                .collect();
            print_json(&json!({
                "command": "evaluate",
                "datasets": r.num_datasets,
                "groups": r.num_groups,
                "db_rows": r.db_rows,
                "oracle_top1": r.oracle_top1,
                "in_fold_evaluations": r.in_fold_evaluations,
                "modes": modes,
                "artifacts": ["property_db.jsonl", "report.json", "quality.csv", "convergence.csv"],
            }))
        }
        Command::Serve {
            port,
            db,
            bundle,
            data,
            static_dir,
        } => {
            let addr = SocketAddr::from(([127, 0, 0, 1], port));
            let runtime = tokio::runtime::Runtime::new().map_err(|source| Error::Io {
                path: PathBuf::from("<runtime>"),
                source,
            })?;
            let load = move || {
                let db = PropertyDatabase::load(&db)?;
                let bundle = LearnerBundle::load(&bundle)?;
                let extra = match &data {
                    Some(dir) => load_dir(dir)?,
                    None => Vec::new(),
                };
                xpcr_service::ServiceState::new(db, bundle, &extra)
            };
            runtime
                .block_on(xpcr_service::serve(addr, static_dir, load))
                .map_err(|source| Error::Io {
                    path: PathBuf::from(addr.to_string()),
                    source,
                })
        }
        Command::DemoData { families } => {
            let specs = family_specs(cli.seed);
            if families == 0 || families > specs.len() {
                return Err(Error::InvalidArgument(format!(
                    "--families must be between 1 and {}",
                    specs.len()
                )));
            }
            let out = cli.out.unwrap_or_else(|| PathBuf::from("demo_data"));
            create_dir(&out)?;
            let mut names = Vec::new();
            for (i, spec) in specs.iter().take(families).enumerate() {
                let d = generate_family(spec, cli.seed.wrapping_add(1 + i as u64))?;
                write_dataset(&d, &out)?;
                names.push(d.name);
            }
            print_json(&json!({ "command": "demo-data", "datasets": names }))
        }
    }
}
