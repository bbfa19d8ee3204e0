//! Desk-scale ablation study on a synthetic corpus: the traditional
//! baseline against the stage-one, stage-two and loss-ablated extractors.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate_extractor, evaluate_traditional, EvalReport};
use crate::io::{load_split, Recording, Split, MANIFEST_NAME};
use crate::nct::{format_metrics_csv, train, Checkpoints, LossTerms, Stage, Stage2Init, TrainConfig};
use crate::sim::{make_corpus, SceneConfig, ScenePlan, SPEED_OF_LIGHT};

/// Training variants, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    NoiseOnly,
    PseudoOnly,
    Stage1,
    Stage2NoNoise,
    Stage2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::NoiseOnly,
        Variant::PseudoOnly,
        Variant::Stage1,
        Variant::Stage2NoNoise,
        Variant::Stage2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoiseOnly => "noise_only",
            Variant::PseudoOnly => "pseudo_only",
            Variant::Stage1 => "stage1",
            Variant::Stage2NoNoise => "stage2_no_noise",
            Variant::Stage2 => "stage2",
        }
    }

    fn needs_stage1(self) -> bool {
        matches!(self, Variant::Stage2 | Variant::Stage2NoNoise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub corpus_seed: u64,
    pub variants: Vec<Variant>,
    pub stage2_init: Stage2Init,
    /// Worker threads across seeds.
    pub threads: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 1e-3,
            k: 8,
            seeds: vec![0, 1, 2],
            corpus_seed: 1,
            variants: vec![Variant::Stage1, Variant::Stage2, Variant::NoiseOnly],
            stage2_init: Stage2Init::FromStage1,
            threads: 1,
        }
    }
}

/// Radar setup of the study: 16 samples per chirp, 10 cm range cells,
/// 30 s at 120 chirps/s. The short chirp keeps the range-FFT gain at 12 dB
/// so the low-SNR group sits where phase unwrapping starts to slip.
pub fn study_base() -> SceneConfig {
    let s = 16;
    let mut base = SceneConfig {
        samples_per_chirp: s,
        n_range_bins: s,
        ..SceneConfig::default()
    };
    base.chirp_slope_hz_per_s = SPEED_OF_LIGHT / (2.0 * 0.1) * base.adc_rate_hz / s as f64;
    base
}

fn plan(snr_db: (f64, f64), val_fraction: f64, test_fraction: f64, seed: u64) -> ScenePlan {
    ScenePlan {
        base: study_base(),
        snr_db,
        distance_m: (0.4, 1.0),
        chest_amp_m: (1e-4, 2e-4),
        resp_amp_m: (5e-4, 1e-3),
        clutter_amp: (0.2, 0.5),
        val_fraction,
        test_fraction,
        seed,
        ..ScenePlan::default()
    }
}

/// 10 high-SNR scenes (10 to 20 dB) followed by 20 low-SNR scenes
/// (-12 to -5 dB). Only low-SNR scenes are held out for testing.
pub fn study_scenes(corpus_seed: u64) -> Vec<(SceneConfig, Split)> {
    let mut scenes = plan((10.0, 20.0), 0.1, 0.0, corpus_seed).scenes(10);
    scenes.extend(plan((-12.0, -5.0), 0.2, 0.4, corpus_seed.wrapping_add(1)).scenes(20));
    scenes
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub best_epoch: usize,
    pub low_snr: EvalReport,
    pub metrics_csv: String,
    pub checkpoints: Checkpoints,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub baseline_low_snr: EvalReport,
    pub runs: Vec<RunResult>,
}

impl StudyResult {
    /// Median low-SNR MAE of a variant over seeds.
    pub fn median_mae(&self, variant: Variant) -> Option<f64> {
        let mut v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.low_snr.mae_bpm)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "# reference: simulator ground-truth mean heart rate per 10 s window; low-SNR test split\nconfiguration,seed,best_epoch,mae_bpm,rmse_bpm,pearson_r\n",
        );
        let b = &self.baseline_low_snr;
        out.push_str(&format!(
            "traditional,,,{:.4},{:.4},{:.4}\n",
            b.mae_bpm, b.rmse_bpm, b.pearson_r
        ));
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4}\n",
                r.variant.name(),
                r.seed,
                r.best_epoch,
                r.low_snr.mae_bpm,
                r.low_snr.rmse_bpm,
                r.low_snr.pearson_r
            ));
        }
        out
    }
}

fn train_config(cfg: &StudyConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        k: cfg.k,
        seed,
        stage2_init: cfg.stage2_init,
        ..TrainConfig::default()
    }
}

fn run_seed(
    cfg: &StudyConfig,
    seed: u64,
    train_set: &[Recording],
    val_set: &[Recording],
    low_test: &[Recording],
) -> Result<Vec<RunResult>> {
    let base = train_config(cfg, seed);
    let mut stage1: Option<Checkpoints> = None;
    let needs_stage1 = cfg.variants.iter().any(|v| v.needs_stage1());
    let mut order: Vec<Variant> = cfg.variants.clone();
    if needs_stage1 && !order.contains(&Variant::Stage1) {
        order.insert(0, Variant::Stage1);
    }
    order.sort_by_key(|v| Variant::ALL.iter().position(|a| a == v));
    let mut out = Vec::new();
    for variant in order {
        let (tc, pretrained) = match variant {
            Variant::NoiseOnly => (
                TrainConfig {
                    terms: LossTerms {
                        positive: false,
                        negative: true,
                    },
                    ..base.clone()
                },
                None,
            ),
            Variant::PseudoOnly => (
                TrainConfig {
                    terms: LossTerms {
                        positive: true,
                        negative: false,
                    },
                    ..base.clone()
                },
                None,
            ),
            Variant::Stage1 => (base.clone(), None),
            Variant::Stage2NoNoise => (
                TrainConfig {
                    stage: Stage::Two,
                    terms: LossTerms {
                        positive: true,
                        negative: false,
                    },
                    ..base.clone()
                },
                stage1.as_ref(),
            ),
            Variant::Stage2 => (
                TrainConfig {
                    stage: Stage::Two,
                    ..base.clone()
                },
                stage1.as_ref(),
            ),
        };
        log::info!("seed {seed}: training {}", variant.name());
        let outcome = train(train_set, val_set, &tc, pretrained)?;
        let report = aggregate(&evaluate_extractor(&outcome.best.gh, low_test)?)?;
        let result = RunResult {
            variant,
            seed,
            best_epoch: outcome.best_epoch,
            low_snr: report,
            metrics_csv: format_metrics_csv(&outcome),
            checkpoints: outcome.best,
        };
        if variant == Variant::Stage1 {
            stage1 = Some(result.checkpoints.clone());
        }
        if cfg.variants.contains(&variant) {
            out.push(result);
        }
    }
    Ok(out)
}

/// Loads the study recordings, split into train, val and the low-SNR part
/// of the test split.
pub fn load_study(manifest: &Path) -> Result<(Vec<Recording>, Vec<Recording>, Vec<Recording>)> {
    let (recs, skipped) = load_split(manifest, None)?;
    if let Some((p, e)) = skipped.into_iter().next() {
        return Err(Error::Data(format!("{}: {e}", p.display())));
    }
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    let mut low_test = Vec::new();
    for r in recs {
        match r.entry.split {
            Split::Train => train_set.push(r),
            Split::Val => val_set.push(r),
            Split::Test if r.entry.snr_db < 0.0 => low_test.push(r),
            Split::Test => {}
        }
    }
    if low_test.is_empty() {
        return Err(Error::Data("no low-SNR recordings in the test split".into()));
    }
    Ok((train_set, val_set, low_test))
}

/// Writes the study corpus under `out_dir/corpus` and returns the manifest.
pub fn write_study_corpus(out_dir: &Path, corpus_seed: u64) -> Result<PathBuf> {
    let dir = out_dir.join("corpus");
    make_corpus(&study_scenes(corpus_seed), &dir)?;
    Ok(dir.join(MANIFEST_NAME))
}

/// Trains every variant for every seed and evaluates it on the low-SNR
/// test split. Seeds run on up to `cfg.threads` threads; results keep seed
/// order.
pub fn run_study(manifest: &Path, cfg: &StudyConfig) -> Result<StudyResult> {
    let (train_set, val_set, low_test) = load_study(manifest)?;
    let baseline_low_snr = aggregate(&evaluate_traditional(&low_test)?)?;
    let threads = cfg.threads.max(1);
    let mut runs = Vec::new();
    for chunk in cfg.seeds.chunks(threads) {
        let results: Vec<Result<Vec<RunResult>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let (t, v, l) = (&train_set, &val_set, &low_test);
                    s.spawn(move || run_seed(cfg, seed, t, v, l))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Training("worker thread panicked".into())))
                })
                .collect()
        });
        for r in results {
            runs.extend(r?);
        }
    }
    Ok(StudyResult {
        baseline_low_snr,
        runs,
    })
}

/// Writes the summary table, per-run metrics logs and checkpoints.
pub fn write_study(out_dir: &Path, result: &StudyResult) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let summary = out_dir.join("summary.csv");
    std::fs::write(&summary, result.summary_csv()).map_err(|e| Error::io(&summary, e))?;
    for r in &result.runs {
        let dir = out_dir.join(format!("{}_seed{}", r.variant.name(), r.seed));
        r.checkpoints.write(&dir)?;
        let path = dir.join("metrics.csv");
        std::fs::write(&path, &r.metrics_csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
