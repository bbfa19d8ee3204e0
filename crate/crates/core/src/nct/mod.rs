//! Noise-contrastive triplet loss and the augmented pseudo-label generator.

mod train;

pub use train::{
    format_metrics_csv, load_pretrained, prepare_recordings, train, train_stage, write_metrics_csv,
    Checkpoints, EpochLog, PreparedRecording, Stage, Stage2Init, StepLog, TrainConfig, TrainOutcome, GH_FILE,
    GN_FILE,
};

use rand::Rng;

use crate::dsp::{
    argmax_first, argmin_first, hr_from_signal, traditional_heartbeat, TimeSeries, HR_WINDOW_S,
};
use crate::error::{Error, Result};
use crate::model::{forward, ExtractorParams};
use crate::rangeproc::{heartbeat_window, random_noise_window, EdgePolicy, NoiseExclusion, RangeMatrix};
use crate::sampling::SampleSet;

/// Loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NctLossBreakdown {
    pub l_p: f64,
    pub l_n: f64,
    pub total: f64,
}

/// Loss value plus its gradient with respect to every positive and negative
/// spectrum (same order as the input sets).
#[derive(Debug, Clone, PartialEq)]
pub struct NctLoss {
    pub breakdown: NctLossBreakdown,
    pub grad_positive: Vec<Vec<f64>>,
    pub grad_negative: Vec<Vec<f64>>,
}

fn check_sets(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.k() != b.k() {
        return Err(Error::Argument(format!(
            "sample sets differ in size: {} vs {}",
            a.k(),
            b.k()
        )));
    }
    if a.k() == 0 {
        return Err(Error::Argument("empty sample set".into()));
    }
    let grid = &a.spectra[0];
    if a.spectra.iter().chain(&b.spectra).any(|s| !s.same_grid(grid)) {
        return Err(Error::Argument(
            "sample sets do not share one frequency grid".into(),
        ));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean pairwise squared distance between two sets, and its gradient
/// with respect to each element of `moving`.
fn pairwise_term(fixed: &SampleSet, moving: &SampleSet) -> (f64, Vec<Vec<f64>>) {
    let k = fixed.k() as f64;
    let scale = 1.0 / (k * k);
    let mut value = 0.0;
    let mut grads = vec![vec![0.0; moving.spectra[0].power.len()]; moving.k()];
    for a in &fixed.spectra {
        for (b, g) in moving.spectra.iter().zip(grads.iter_mut()) {
            value += sq_dist(&a.power, &b.power);
            for ((gi, ai), bi) in g.iter_mut().zip(&a.power).zip(&b.power) {
                *gi += 2.0 * scale * (bi - ai);
            }
        }
    }
    (scale * value, grads)
}

/// Which loss terms take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub positive: bool,
    pub negative: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        Self {
            positive: true,
            negative: true,
        }
    }
}

/// `l_p = 1/K^2 sum_ij |S_PL[i] - S_P[j]|^2`, `l_n = -1/K^2 sum_ij |S_P[i] - S_N[j]|^2`.
pub fn nct_loss(s_pl: &SampleSet, s_p: &SampleSet, s_n: &SampleSet) -> Result<NctLoss> {
    nct_loss_terms(Some(s_pl), s_p, Some(s_n))
}

/// NCT loss with optional terms; a missing set drops its term.
pub fn nct_loss_terms(s_pl: Option<&SampleSet>, s_p: &SampleSet, s_n: Option<&SampleSet>) -> Result<NctLoss> {
    let bins = s_p.spectra.first().map_or(0, |s| s.power.len());
    let mut grad_positive = vec![vec![0.0; bins]; s_p.k()];
    let mut grad_negative = Vec::new();
    let mut l_p = 0.0;
    let mut l_n = 0.0;
    if let Some(pl) = s_pl {
        check_sets(pl, s_p)?;
        let (v, g) = pairwise_term(pl, s_p);
        l_p = v;
        grad_positive = g;
    }
    if let Some(n) = s_n {
        check_sets(s_p, n)?;
        let (v, g_p) = pairwise_term(n, s_p);
        let (_, g_n) = pairwise_term(s_p, n);
        l_n = -v;
        for (acc, g) in grad_positive.iter_mut().zip(g_p) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a -= b;
            }
        }
        grad_negative = g_n
            .into_iter()
            .map(|g| g.into_iter().map(|v| -v).collect())
            .collect();
    }
    Ok(NctLoss {
        breakdown: NctLossBreakdown {
            l_p,
            l_n,
            total: l_p + l_n,
        },
        grad_positive,
        grad_negative,
    })
}

/// How to treat signals of different length in [`signal_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthPolicy {
    #[default]
    Error,
    TruncateToShorter,
}

/// Heart rate of every consecutive 10 s window (remainder dropped).
pub fn window_hrs(x: &TimeSeries) -> Result<Vec<f64>> {
    let windows = x.windows(HR_WINDOW_S);
    if windows.is_empty() {
        return Err(Error::Argument(format!(
            "signal of {:.2} s is shorter than one {HR_WINDOW_S} s window",
            x.duration_s()
        )));
    }
    windows.iter().map(hr_from_signal).collect()
}

/// Mean absolute difference of two per-window heart-rate sequences.
pub fn hr_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64
}

/// Mean absolute heart-rate difference over consecutive 10 s windows, in bpm.
pub fn signal_distance(a: &TimeSeries, b: &TimeSeries, policy: LengthPolicy) -> Result<f64> {
    if a.rate_hz != b.rate_hz {
        return Err(Error::Argument(format!(
            "sample rates differ: {} vs {} Hz",
            a.rate_hz, b.rate_hz
        )));
    }
    if a.len() != b.len() && policy == LengthPolicy::Error {
        return Err(Error::Argument(format!(
            "signal lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let ha = window_hrs(a)?;
    let hb = window_hrs(b)?;
    Ok(hr_distance(&ha, &hb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `argmax X == argmin Y`.
    Agree,
    /// The closest traditional candidate is farther from the noise than `p`.
    Override,
    /// The pretrained prediction is kept.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// Zero-based index into the traditional candidates.
    Traditional(usize),
    Pretrained,
}

/// Outcome of the quality assessment and decision modules.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelDecision {
    pub chosen: Choice,
    /// Noise distance `X_i = D(Phi_i, q)`.
    pub noise_dists: Vec<f64>,
    /// Heartbeat distance `Y_i = D(Phi_i, p)`.
    pub hb_dists: Vec<f64>,
    /// `D(p, q)`.
    pub p_noise_dist: f64,
    pub branch: Branch,
}

/// Decision rule over noise distances `x`, heartbeat distances `y` and the
/// pretrained signal's noise distance. Ties in argmax / argmin resolve to
/// the smaller index.
pub fn decide(x: &[f64], y: &[f64], p_noise_dist: f64) -> (Choice, Branch) {
    assert!(!x.is_empty() && x.len() == y.len(), "distance vectors must match");
    let best_y = argmin_first(y);
    if argmax_first(x) == best_y {
        (Choice::Traditional(best_y), Branch::Agree)
    } else if x[best_y] > p_noise_dist {
        (Choice::Traditional(best_y), Branch::Override)
    } else {
        (Choice::Pretrained, Branch::Fallback)
    }
}

/// Candidate signals for one recording under frozen stage-one extractors.
/// Everything except the noise signal is fixed per recording, so it is
/// computed once.
#[derive(Debug, Clone)]
pub struct AugCandidates {
    pub traditional: Vec<TimeSeries>,
    pub traditional_hrs: Vec<Vec<f64>>,
    pub pretrained: TimeSeries,
    pub pretrained_hrs: Vec<f64>,
    pub hb_dists: Vec<f64>,
}

impl AugCandidates {
    pub fn new(m: &RangeMatrix, center: usize, gh: &ExtractorParams, half_width: usize) -> Result<Self> {
        let window = heartbeat_window(m, center, half_width, EdgePolicy::Error)?;
        let lo = window.center_bin - half_width;
        let traditional = (lo..lo + window.width())
            .map(|b| traditional_heartbeat(m, b))
            .collect::<Result<Vec<_>>>()?;
        let traditional_hrs = traditional.iter().map(window_hrs).collect::<Result<Vec<_>>>()?;
        let pretrained = forward(gh, &window)?;
        let pretrained_hrs = window_hrs(&pretrained)?;
        let hb_dists = traditional_hrs
            .iter()
            .map(|h| hr_distance(h, &pretrained_hrs))
            .collect();
        Ok(Self {
            traditional,
            traditional_hrs,
            pretrained,
            pretrained_hrs,
            hb_dists,
        })
    }

    /// Applies the decision rule given the per-window heart rates of a
    /// noise signal.
    pub fn select(&self, noise_hrs: &[f64]) -> (TimeSeries, PseudoLabelDecision) {
        let noise_dists: Vec<f64> = self
            .traditional_hrs
            .iter()
            .map(|h| hr_distance(h, noise_hrs))
            .collect();
        let p_noise_dist = hr_distance(&self.pretrained_hrs, noise_hrs);
        let (chosen, branch) = decide(&noise_dists, &self.hb_dists, p_noise_dist);
        let signal = match chosen {
            Choice::Traditional(i) => self.traditional[i].clone(),
            Choice::Pretrained => self.pretrained.clone(),
        };
        (
            signal,
            PseudoLabelDecision {
                chosen,
                noise_dists,
                hb_dists: self.hb_dists.clone(),
                p_noise_dist,
                branch,
            },
        )
    }
}

/// Augmented pseudo-label for one range matrix: chooses between the
/// traditional signals of every bin in the heartbeat window and the
/// pretrained prediction, using a freshly drawn noise window.
#[allow(clippy::too_many_arguments)]
pub fn aug_pseudo_gen<R: Rng + ?Sized>(
    m: &RangeMatrix,
    center: usize,
    gh: &ExtractorParams,
    gn: &ExtractorParams,
    half_width: usize,
    exclusion: NoiseExclusion,
    rng: &mut R,
) -> Result<(TimeSeries, PseudoLabelDecision)> {
    let candidates = AugCandidates::new(m, center, gh, half_width)?;
    let noise = random_noise_window(m, center, half_width, exclusion, rng)?;
    let q = forward(gn, &noise)?;
    Ok(candidates.select(&window_hrs(&q)?))
}
