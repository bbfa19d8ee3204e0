//! Random temporal sampling of a signal into sets of band spectra.

use rand::Rng;

use crate::dsp::{cached_plan, samples_for, BandSpectrum, PsdTape, TimeSeries, CARDIAC_HI_HZ, CARDIAC_LO_HZ};
use crate::error::{Error, Result};

/// Grid spacing of the training spectra.
pub const SAMPLE_DF_HZ: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    PseudoLabel,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub spectra: Vec<BandSpectrum>,
    pub source: SampleSource,
}

impl SampleSet {
    pub fn k(&self) -> usize {
        self.spectra.len()
    }
}

/// Sub-window placement shared by every set built in one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSampling {
    pub offsets: Vec<usize>,
    pub sub_len: usize,
    pub rate_hz: f64,
    pub df_hz: f64,
    /// Unit-norm spectra; off gives the raw periodogram.
    pub normalize: bool,
}

impl TemporalSampling {
    /// Draws `k` uniform sub-window starts for a signal of `len` samples.
    pub fn draw<R: Rng + ?Sized>(
        len: usize,
        rate_hz: f64,
        k: usize,
        sub_len_s: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("K must be at least 1".into()));
        }
        let sub_len = samples_for(sub_len_s, rate_hz);
        if sub_len < 2 || sub_len > len {
            return Err(Error::Argument(format!(
                "signal of {len} samples is too short for {sub_len_s} s sub-windows ({sub_len} samples)"
            )));
        }
        let offsets = (0..k).map(|_| rng.random_range(0..=len - sub_len)).collect();
        Ok(Self {
            offsets,
            sub_len,
            rate_hz,
            df_hz: SAMPLE_DF_HZ,
            normalize: true,
        })
    }

    fn check(&self, x: &TimeSeries) -> Result<()> {
        if x.rate_hz != self.rate_hz
            || x.len() < self.sub_len + self.offsets.iter().max().copied().unwrap_or(0)
        {
            return Err(Error::Argument(format!(
                "signal ({} samples at {} Hz) does not match the sampling plan",
                x.len(),
                x.rate_hz
            )));
        }
        Ok(())
    }

    /// Spectra of every sub-window of `x`.
    pub fn apply(&self, x: &TimeSeries, source: SampleSource) -> Result<SampleSet> {
        Ok(self.apply_taped(x, source)?.0)
    }

    /// Spectra plus the tapes needed to backpropagate into `x`.
    pub fn apply_taped(&self, x: &TimeSeries, source: SampleSource) -> Result<(SampleSet, Vec<PsdTape>)> {
        self.check(x)?;
        let plan = cached_plan(
            self.sub_len,
            self.rate_hz,
            CARDIAC_LO_HZ,
            CARDIAC_HI_HZ,
            self.df_hz,
        )?;
        let (spectra, tapes) = self
            .offsets
            .iter()
            .map(|&o| plan.forward_taped_with(&x.samples[o..o + self.sub_len], self.normalize))
            .unzip();
        Ok((SampleSet { spectra, source }, tapes))
    }

    /// Accumulates the gradient w.r.t. the full signal from per-spectrum
    /// gradients.
    pub fn backward(
        &self,
        tapes: &[PsdTape],
        grad_spectra: &[Vec<f64>],
        signal_len: usize,
    ) -> Result<Vec<f64>> {
        let plan = cached_plan(
            self.sub_len,
            self.rate_hz,
            CARDIAC_LO_HZ,
            CARDIAC_HI_HZ,
            self.df_hz,
        )?;
        let mut grad = vec![0.0; signal_len];
        for ((&o, tape), g) in self.offsets.iter().zip(tapes).zip(grad_spectra) {
            let gx = plan.backward(tape, g);
            for (a, b) in grad[o..o + self.sub_len].iter_mut().zip(&gx) {
                *a += b;
            }
        }
        Ok(grad)
    }
}

/// `K` spectra of random `sub_len_s` sub-windows of `x` over the cardiac band.
pub fn random_temporal_sample<R: Rng + ?Sized>(
    x: &TimeSeries,
    k: usize,
    sub_len_s: f64,
    source: SampleSource,
    rng: &mut R,
) -> Result<SampleSet> {
    let plan = TemporalSampling::draw(x.len(), x.rate_hz, k, sub_len_s, rng)?;
    plan.apply(x, source)
}
