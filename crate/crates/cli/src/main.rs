use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aplanc::config::{parse_scene_plan, parse_train_config, read_text};
use aplanc::eval::{
    ablation_suite, aggregate, evaluate_extractor, evaluate_traditional, format_ablation_csv,
    predict_extractor, predict_traditional, read_report_csv, read_waveforms_csv, render_svg, waveform_path,
    write_report_csv, write_waveforms_csv, Waveforms,
};
use aplanc::io::{load_split, Recording, Split};
use aplanc::nct::{load_pretrained, prepare_recordings, train_stage, write_metrics_csv, Stage, TrainConfig};
use aplanc::sim::make_corpus;
use aplanc::study::{run_study, write_study, write_study_corpus, StudyConfig, Variant};
use aplanc::{Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aplanc", version, about = "Unsupervised radar heartbeat sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus of range matrices with ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Run the phase-based baseline on the test split.
    Traditional {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train one stage and write the best-epoch checkpoints.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        stage: u32,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt_dir: PathBuf,
        /// Stage-one checkpoint directory (required for stage 2).
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Evaluate a heartbeat extractor checkpoint.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Render a report as SVG.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_svg: PathBuf,
    },
    /// Compare several checkpoints on the test split.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        /// `name=dir` pairs, one per configuration.
        #[arg(long = "ckpt", required = true)]
        ckpts: Vec<String>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Simulate the study corpus, train every configuration per seed and
    /// report low-SNR test accuracy.
    Study {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        corpus_seed: u64,
        /// Also train the pseudo-label-only and stage-2-without-noise rows.
        #[arg(long)]
        full_table: bool,
    },
}

/// Worker threads from RADAR_APLANC_THREADS, defaulting to 1.
fn threads() -> Result<usize> {
    match std::env::var("RADAR_APLANC_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::config(
                "RADAR_APLANC_THREADS",
                format!("expected a positive integer, got {v:?}"),
            )
        }),
        Err(_) => Ok(1),
    }
}

fn split_arg(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        other => other.parse().map(Some).map_err(Error::Argument),
    }
}

fn load_nonempty(manifest: &Path, split: Option<Split>) -> Result<Vec<Recording>> {
    let (recs, skipped) = load_split(manifest, split)?;
    if recs.is_empty() {
        let which = split.map_or("any".to_string(), |s| s.to_string());
        return Err(match skipped.into_iter().next() {
            Some((path, e)) => Error::Data(format!(
                "no recordings in the {which} split could be loaded (first failure {}: {e})",
                path.display()
            )),
            None => Error::Data(format!(
                "no recordings in the {which} split of {}",
                manifest.display()
            )),
        });
    }
    Ok(recs)
}

fn print_summary(label: &str, evals: &[aplanc::eval::RecordingEval]) -> Result<()> {
    let all = aggregate(evals)?;
    println!(
        "{label}: {} recordings, {} windows, MAE {:.2} bpm, RMSE {:.2} bpm, r {:.3}",
        evals.len(),
        all.pred_bpm.len(),
        all.mae_bpm,
        all.rmse_bpm,
        all.pearson_r
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, count } => {
            let plan = parse_scene_plan(&read_text(&config)?, &config)?;
            if count == 0 {
                log::warn!("--count 0: writing an empty manifest");
            }
            let entries = make_corpus(&plan.scenes(count), &out)?;
            println!("wrote {} recordings to {}", entries.len(), out.display());
        }
        Command::Traditional { manifest, report } => {
            let recs = load_nonempty(&manifest, Some(Split::Test))?;
            let evals = evaluate_traditional(&recs)?;
            write_report_csv(&report, &evals)?;
            let waves = recs
                .iter()
                .map(|r| Waveforms::excerpt(r, &predict_traditional(r)?))
                .collect::<Result<Vec<_>>>()?;
            write_waveforms_csv(&waveform_path(&report), &waves)?;
            print_summary("traditional", &evals)?;
        }
        Command::Train {
            manifest,
            stage,
            config,
            ckpt_dir,
            init_from,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_train_config(&read_text(p)?, p)?,
                None => TrainConfig::default(),
            };
            cfg.stage = Stage::from_number(stage)
                .ok_or_else(|| Error::Argument(format!("--stage must be 1 or 2, got {stage}")))?;
            let pretrained = match (&cfg.stage, &init_from) {
                (Stage::Two, None) => {
                    return Err(Error::Argument(
                        "stage 2 requires stage-1 checkpoints; pass --init-from <stage-1 ckpt dir>".into(),
                    ))
                }
                (_, Some(dir)) => Some(load_pretrained(dir)?),
                (Stage::One, None) => None,
            };
            let outcome = train_stage(&manifest, &cfg, pretrained.as_ref())?;
            outcome.best.write(&ckpt_dir)?;
            write_metrics_csv(&ckpt_dir.join("metrics.csv"), &outcome)?;
            println!(
                "stage {}: best epoch {} of {} (val MAE {:.2} bpm), checkpoints in {}",
                cfg.stage.number(),
                outcome.best_epoch,
                outcome.epochs.len(),
                outcome.best_val_mae,
                ckpt_dir.display()
            );
        }
        Command::Eval {
            manifest,
            ckpt,
            report,
            split,
        } => {
            let ckpts = load_pretrained(&ckpt)?;
            let recs = load_nonempty(&manifest, split_arg(&split)?)?;
            let evals = evaluate_extractor(&ckpts.gh, &recs)?;
            write_report_csv(&report, &evals)?;
            let delta_d = aplanc::eval::delta_d_of(&ckpts.gh)?;
            let waves = prepare_recordings(&recs, delta_d)?
                .iter()
                .map(|p| {
                    let pred = predict_extractor(&ckpts.gh, p.recording, p.center, delta_d)?;
                    Waveforms::excerpt(p.recording, &pred)
                })
                .collect::<Result<Vec<_>>>()?;
            write_waveforms_csv(&waveform_path(&report), &waves)?;
            print_summary("extractor", &evals)?;
        }
        Command::Plot { report, out_svg } => {
            let rows = read_report_csv(&report)?;
            let wpath = waveform_path(&report);
            let waves = if wpath.exists() {
                read_waveforms_csv(&wpath)?
            } else {
                log::warn!("{} not found; plotting heart rates only", wpath.display());
                Vec::new()
            };
            std::fs::write(&out_svg, render_svg(&rows, &waves)).map_err(|e| Error::Io {
                path: out_svg.clone(),
                source: e,
            })?;
            println!("wrote {}", out_svg.display());
        }
        Command::Ablate {
            manifest,
            ckpts,
            report,
        } => {
            let configs = ckpts
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(n, d)| (n.to_string(), PathBuf::from(d)))
                        .ok_or_else(|| Error::Argument(format!("--ckpt expects name=dir, got {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let recs = load_nonempty(&manifest, Some(Split::Test))?;
            let rows = ablation_suite(&recs, &configs)?;
            std::fs::write(&report, format_ablation_csv(&rows)).map_err(|e| Error::Io {
                path: report.clone(),
                source: e,
            })?;
            for r in &rows {
                println!(
                    "{:<24} MAE {:.2}  RMSE {:.2}  r {:.3}",
                    r.name, r.report.mae_bpm, r.report.rmse_bpm, r.report.pearson_r
                );
            }
        }
        Command::Study {
            out,
            epochs,
            seeds,
            corpus_seed,
            full_table,
        } => {
            let cfg = StudyConfig {
                epochs,
                seeds: (0..seeds).collect(),
                corpus_seed,
                variants: if full_table {
                    Variant::ALL.to_vec()
                } else {
                    StudyConfig::default().variants
                },
                threads: threads()?,
                ..StudyConfig::default()
            };
            let manifest = write_study_corpus(&out, corpus_seed)?;
            let result = run_study(&manifest, &cfg)?;
            write_study(&out, &result)?;
            println!("{:<30} MAE {:.2}", "traditional", result.baseline_low_snr.mae_bpm);
            for v in &cfg.variants {
                if let Some(m) = result.median_mae(*v) {
                    println!(
                        "{:<30} median MAE {:.2} over {} seeds",
                        v.name(),
                        m,
                        cfg.seeds.len()
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
