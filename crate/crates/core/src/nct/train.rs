use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{nct_loss_terms, window_hrs, AugCandidates, Branch, LossTerms, NctLossBreakdown};
use crate::dsp::{traditional_heartbeat, TimeSeries, HR_WINDOW_S};
use crate::error::{Error, Result};
use crate::eval::{evaluate, predict_extractor};
use crate::io::{load_split, read_rapw, Recording, Split};
use crate::model::{
    backward_tape, forward, forward_features, window_features, AdamWConfig, Architecture, ExtractorParams,
    Features, OptimizerState,
};
use crate::rangeproc::{
    heartbeat_window, random_noise_window, select_center_bin, EdgePolicy, NoiseExclusion,
};
use crate::sampling::{SampleSource, TemporalSampling};

pub const GH_FILE: &str = "gh.rapw";
pub const GN_FILE: &str = "gn.rapw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stage {
    #[default]
    One,
    Two,
}

impl Stage {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            1 => Some(Stage::One),
            2 => Some(Stage::Two),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// Starting weights of the trainable extractors in stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stage2Init {
    #[default]
    Random,
    FromStage1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub k: usize,
    pub delta_d: usize,
    pub sub_len_s: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub stage: Stage,
    pub terms: LossTerms,
    /// Only the center bin is kept out of noise windows (literal reading).
    pub strict_noise_exclusion: bool,
    /// Raw periodograms instead of unit-norm spectra in the loss.
    pub strict_psd: bool,
    pub stage2_init: Stage2Init,
    pub max_consecutive_skips: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            k: 4,
            delta_d: 2,
            sub_len_s: 10.0,
            seed: 0,
            deterministic: true,
            stage: Stage::One,
            terms: LossTerms::default(),
            strict_noise_exclusion: false,
            strict_psd: false,
            stage2_init: Stage2Init::Random,
            max_consecutive_skips: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("k", self.k as f64),
            ("sub_len_s", self.sub_len_s),
            ("max_consecutive_skips", self.max_consecutive_skips as f64),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        if !self.terms.positive && !self.terms.negative {
            return Err(Error::config("loss", "at least one loss term must be enabled"));
        }
        Ok(())
    }

    pub fn exclusion(&self) -> NoiseExclusion {
        if self.strict_noise_exclusion {
            NoiseExclusion::CenterBin
        } else {
            NoiseExclusion::HeartbeatWindow
        }
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Heartbeat and noise extractor weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoints {
    pub gh: ExtractorParams,
    pub gn: ExtractorParams,
}

impl Checkpoints {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::io::write_rapw(&dir.join(GH_FILE), &self.gh)?;
        crate::io::write_rapw(&dir.join(GN_FILE), &self.gn)
    }
}

/// Reads `gh.rapw` and `gn.rapw` from a checkpoint directory.
pub fn load_pretrained(dir: &Path) -> Result<Checkpoints> {
    Ok(Checkpoints {
        gh: read_rapw(&dir.join(GH_FILE))?,
        gn: read_rapw(&dir.join(GN_FILE))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    /// `None` for a skipped step.
    pub loss: Option<NctLossBreakdown>,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_total: f64,
    pub val_mae: f64,
    pub agree: usize,
    pub override_: usize,
    pub fallback: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoints,
    pub last: Checkpoints,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
}

/// Per-recording inputs that stay fixed during training.
#[derive(Debug, Clone)]
pub struct PreparedRecording<'a> {
    pub recording: &'a Recording,
    pub center: usize,
    pub features: Features,
    /// Stage-one pseudo-label, the traditional signal at the center bin.
    pub pseudo_label: TimeSeries,
}

/// Picks the center bin, cuts the heartbeat window and computes the
/// stage-one pseudo-label. Recordings shorter than one evaluation window or
/// with a window past the matrix edge are rejected.
pub fn prepare_recordings<'a>(recs: &'a [Recording], delta_d: usize) -> Result<Vec<PreparedRecording<'a>>> {
    recs.iter()
        .map(|rec| {
            let m = &rec.matrix;
            if (m.n_chirps() as f64) < HR_WINDOW_S * m.chirp_rate_hz() {
                return Err(Error::Data(format!(
                    "{}: {} chirps is shorter than one {HR_WINDOW_S} s window",
                    rec.name,
                    m.n_chirps()
                )));
            }
            let center = select_center_bin(m, None)?;
            let window = heartbeat_window(m, center, delta_d, EdgePolicy::Error)
                .map_err(|e| Error::Data(format!("{}: {e}", rec.name)))?;
            Ok(PreparedRecording {
                recording: rec,
                center,
                features: window_features(&window),
                pseudo_label: traditional_heartbeat(m, center)?,
            })
        })
        .collect()
}

/// Mean absolute HR error of `gh` over every window of every recording.
fn validation_mae(gh: &ExtractorParams, recs: &[PreparedRecording], delta_d: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in recs {
        let pred = predict_extractor(gh, p.recording, p.center, delta_d)?;
        let reference = p.recording.truth.window_hr(HR_WINDOW_S);
        let report = evaluate(&pred, &reference, HR_WINDOW_S)?;
        sum += report.mae_bpm * report.pred_bpm.len() as f64;
        n += report.pred_bpm.len();
    }
    Ok(if n > 0 { sum / n as f64 } else { f64::NAN })
}

struct StepResult {
    loss: NctLossBreakdown,
    branch: Option<Branch>,
    grad_h: Vec<f64>,
    grad_n: Option<Vec<f64>>,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    gh: ExtractorParams,
    gn: ExtractorParams,
    frozen: Option<&'a Checkpoints>,
    aug: Vec<Option<AugCandidates>>,
}

impl Trainer<'_> {
    fn step(&mut self, prep: &PreparedRecording, idx: usize, rng: &mut ChaCha8Rng) -> Result<StepResult> {
        let cfg = self.cfg;
        let m = &prep.recording.matrix;
        let noise = random_noise_window(m, prep.center, cfg.delta_d, cfg.exclusion(), rng)?;

        let (label, branch) = match (cfg.stage, self.frozen) {
            (Stage::One, _) => (prep.pseudo_label.clone(), None),
            (Stage::Two, Some(frozen)) => {
                if self.aug[idx].is_none() {
                    self.aug[idx] = Some(AugCandidates::new(m, prep.center, &frozen.gh, cfg.delta_d)?);
                }
                let aug_noise = random_noise_window(m, prep.center, cfg.delta_d, cfg.exclusion(), rng)?;
                let q = forward(&frozen.gn, &aug_noise)?;
                let (signal, decision) = self.aug[idx].as_ref().unwrap().select(&window_hrs(&q)?);
                (signal, Some(decision.branch))
            }
            (Stage::Two, None) => return Err(Error::config("stage", "stage 2 requires stage-1 checkpoints")),
        };

        let rate = m.chirp_rate_hz();
        let tape_h = forward_features(&self.gh, &prep.features)?;
        let p = TimeSeries::new(tape_h.output().to_vec(), rate)?;
        let mut plan = TemporalSampling::draw(p.len(), rate, cfg.k, cfg.sub_len_s, rng)?;
        plan.normalize = !cfg.strict_psd;

        let s_pl = if cfg.terms.positive {
            Some(plan.apply(&label, SampleSource::PseudoLabel)?)
        } else {
            None
        };
        let (s_p, tapes_p) = plan.apply_taped(&p, SampleSource::Positive)?;
        let negative = if cfg.terms.negative {
            let features = window_features(&noise);
            let tape_n = forward_features(&self.gn, &features)?;
            let q = TimeSeries::new(tape_n.output().to_vec(), rate)?;
            let (s_n, tapes_n) = plan.apply_taped(&q, SampleSource::Negative)?;
            Some((tape_n, s_n, tapes_n))
        } else {
            None
        };

        let loss = nct_loss_terms(s_pl.as_ref(), &s_p, negative.as_ref().map(|(_, s, _)| s))?;
        let grad_p = plan.backward(&tapes_p, &loss.grad_positive, p.len())?;
        let grad_h = backward_tape(&self.gh, &tape_h, &grad_p)?;
        let grad_n = match &negative {
            Some((tape_n, _, tapes_n)) => {
                let grad_q = plan.backward(tapes_n, &loss.grad_negative, p.len())?;
                Some(backward_tape(&self.gn, tape_n, &grad_q)?)
            }
            None => None,
        };
        Ok(StepResult {
            loss: loss.breakdown,
            branch,
            grad_h,
            grad_n,
        })
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs one training stage. `pretrained` holds the frozen stage-one
/// extractors and is required for stage two.
pub fn train(
    train_set: &[Recording],
    val_set: &[Recording],
    cfg: &TrainConfig,
    pretrained: Option<&Checkpoints>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage == Stage::Two && pretrained.is_none() {
        return Err(Error::config(
            "stage",
            "stage 2 requires stage-1 checkpoints (--init-from)",
        ));
    }
    if train_set.is_empty() {
        return Err(Error::Data("no training recordings".into()));
    }
    let train_prep = prepare_recordings(train_set, cfg.delta_d)?;
    let val_prep = prepare_recordings(val_set, cfg.delta_d)?;
    if val_prep.is_empty() {
        log::warn!("no validation recordings; keeping the last epoch");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arch = Architecture::for_half_width(cfg.delta_d);
    let (gh, gn) = match (cfg.stage, cfg.stage2_init, pretrained) {
        (Stage::Two, Stage2Init::FromStage1, Some(c)) => (c.gh.clone(), c.gn.clone()),
        _ => {
            let gh = ExtractorParams::random(&arch, &mut rng);
            let gn = ExtractorParams::random(&arch, &mut rng);
            (gh, gn)
        }
    };
    for p in [&gh, &gn] {
        if p.input_channels() != arch.input_channels {
            return Err(Error::config(
                "delta_d",
                format!(
                    "checkpoint expects {} input channels, delta_d = {} gives {}",
                    p.input_channels(),
                    cfg.delta_d,
                    arch.input_channels
                ),
            ));
        }
    }
    let mut opt_h = OptimizerState::new(gh.len(), cfg.adamw());
    let mut opt_n = OptimizerState::new(gn.len(), cfg.adamw());
    let mut trainer = Trainer {
        cfg,
        gh,
        gn,
        frozen: if cfg.stage == Stage::Two { pretrained } else { None },
        aug: vec![None; train_prep.len()],
    };

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Checkpoints)> = None;
    let mut consecutive_skips = 0usize;
    let mut order: Vec<usize> = (0..train_prep.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut log = EpochLog {
            epoch,
            mean_total: 0.0,
            val_mae: f64::NAN,
            agree: 0,
            override_: 0,
            fallback: 0,
            skipped: 0,
        };
        let mut total_sum = 0.0;
        for (step, &idx) in order.iter().enumerate() {
            let result = trainer.step(&train_prep[idx], idx, &mut rng)?;
            let finite = result.loss.total.is_finite()
                && all_finite(&result.grad_h)
                && result.grad_n.as_deref().is_none_or(all_finite);
            if !finite {
                consecutive_skips += 1;
                log.skipped += 1;
                log::warn!("epoch {epoch} step {step}: non-finite loss or gradient, step skipped");
                steps.push(StepLog {
                    epoch,
                    step,
                    loss: None,
                    branch: result.branch,
                });
                if consecutive_skips >= cfg.max_consecutive_skips {
                    return Err(Error::Training(format!(
                        "{consecutive_skips} consecutive non-finite steps"
                    )));
                }
                continue;
            }
            consecutive_skips = 0;
            opt_h.step(trainer.gh.values_mut(), &result.grad_h)?;
            if let Some(g) = &result.grad_n {
                opt_n.step(trainer.gn.values_mut(), g)?;
            }
            match result.branch {
                Some(Branch::Agree) => log.agree += 1,
                Some(Branch::Override) => log.override_ += 1,
                Some(Branch::Fallback) => log.fallback += 1,
                None => {}
            }
            total_sum += result.loss.total;
            steps.push(StepLog {
                epoch,
                step,
                loss: Some(result.loss),
                branch: result.branch,
            });
        }
        let done = order.len() - log.skipped;
        log.mean_total = if done > 0 {
            total_sum / done as f64
        } else {
            f64::NAN
        };
        if !val_prep.is_empty() {
            log.val_mae = validation_mae(&trainer.gh, &val_prep, cfg.delta_d)?;
        }
        log::info!(
            "stage {} epoch {epoch}: loss {:.4}, val MAE {:.2} bpm",
            cfg.stage.number(),
            log.mean_total,
            log.val_mae
        );
        let better = match &best {
            None => true,
            Some((_, v, _)) => log.val_mae < *v || (v.is_nan() && !log.val_mae.is_nan()),
        };
        if better || val_prep.is_empty() {
            best = Some((
                epoch,
                log.val_mae,
                Checkpoints {
                    gh: trainer.gh.clone(),
                    gn: trainer.gn.clone(),
                },
            ));
        }
        epochs.push(log);
    }

    let (best_epoch, best_val_mae, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        last: Checkpoints {
            gh: trainer.gh,
            gn: trainer.gn,
        },
        best_epoch,
        best_val_mae,
        epochs,
        steps,
    })
}

/// Loads the train and val splits of a manifest and runs [`train`].
pub fn train_stage(
    manifest: &Path,
    cfg: &TrainConfig,
    pretrained: Option<&Checkpoints>,
) -> Result<TrainOutcome> {
    let (recs, skipped) = load_split(manifest, None)?;
    if !skipped.is_empty() {
        log::warn!("{} recordings could not be loaded", skipped.len());
    }
    let (train_set, val_set): (Vec<_>, Vec<_>) = recs
        .into_iter()
        .filter(|r| r.entry.split != Split::Test)
        .partition(|r| r.entry.split == Split::Train);
    train(&train_set, &val_set, cfg, pretrained)
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.9}")
    }
}

/// Metrics log text: one row per step; `val_mae` is filled on the last row
/// of each epoch, branch counts are cumulative within the epoch.
pub fn format_metrics_csv(outcome: &TrainOutcome) -> String {
    let mut out = String::from("epoch,step,l_p,l_n,total,val_mae,agree,override,fallback\n");
    let mut counts = [0usize; 3];
    for (i, s) in outcome.steps.iter().enumerate() {
        if s.step == 0 {
            counts = [0; 3];
        }
        if s.loss.is_some() {
            match s.branch {
                Some(Branch::Agree) => counts[0] += 1,
                Some(Branch::Override) => counts[1] += 1,
                Some(Branch::Fallback) => counts[2] += 1,
                None => {}
            }
        }
        let last_of_epoch = outcome.steps.get(i + 1).is_none_or(|n| n.epoch != s.epoch);
        let val = if last_of_epoch {
            outcome
                .epochs
                .iter()
                .find(|e| e.epoch == s.epoch)
                .map_or(String::new(), |e| fmt_f(e.val_mae))
        } else {
            String::new()
        };
        let (lp, ln, total) = match s.loss {
            Some(l) => (fmt_f(l.l_p), fmt_f(l.l_n), fmt_f(l.total)),
            None => ("nan".into(), "nan".into(), "nan".into()),
        };
        out.push_str(&format!(
            "{},{},{lp},{ln},{total},{val},{},{},{}\n",
            s.epoch, s.step, counts[0], counts[1], counts[2]
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    std::fs::write(path, format_metrics_csv(outcome)).map_err(|e| Error::io(path, e))
}
