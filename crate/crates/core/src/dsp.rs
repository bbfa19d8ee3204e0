//! Deterministic signal primitives for phase-based heartbeat extraction.
//!
//! The traditional pipeline is `phase_at_bin -> unwrap -> bandpass`, and the
//! heart rate is read off as the argmax of a Hann periodogram restricted to
//! the cardiac band.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::rangeproc::RangeMatrix;

/// Lower edge of the cardiac band in Hz (48 bpm).
pub const CARDIAC_LO_HZ: f64 = 0.8;
/// Upper edge of the cardiac band in Hz (180 bpm).
pub const CARDIAC_HI_HZ: f64 = 3.0;
/// Grid spacing used for heart-rate readout (0.6 bpm).
pub const HR_DF_HZ: f64 = 0.01;
/// Window length for heart-rate readout and evaluation.
pub const HR_WINDOW_S: f64 = 10.0;

/// Real-valued, uniformly sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub rate_hz: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, rate_hz: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Argument(format!(
                "sample rate must be positive and finite, got {rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    /// Copy of `len` samples starting at `start`.
    pub fn segment(&self, start: usize, len: usize) -> TimeSeries {
        TimeSeries {
            samples: self.samples[start..start + len].to_vec(),
            rate_hz: self.rate_hz,
        }
    }

    /// Consecutive non-overlapping windows of `window_s` seconds; the
    /// remainder is dropped.
    pub fn windows(&self, window_s: f64) -> Vec<TimeSeries> {
        let len = samples_for(window_s, self.rate_hz);
        if len == 0 {
            return Vec::new();
        }
        (0..self.len() / len)
            .map(|w| self.segment(w * len, len))
            .collect()
    }
}

/// Number of samples covering `seconds` at `rate_hz`.
pub fn samples_for(seconds: f64, rate_hz: f64) -> usize {
    (seconds * rate_hz).round() as usize
}

/// Normalized power spectrum over a uniform grid `f_lo, f_lo + df, ..., f_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrum {
    pub power: Vec<f64>,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub df_hz: f64,
}

impl BandSpectrum {
    pub fn frequency(&self, i: usize) -> f64 {
        self.f_lo_hz + i as f64 * self.df_hz
    }

    /// Index of the largest bin; ties go to the lower frequency.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.power)
    }

    pub fn same_grid(&self, other: &BandSpectrum) -> bool {
        self.power.len() == other.power.len()
            && self.f_lo_hz == other.f_lo_hz
            && self.f_hi_hz == other.f_hi_hz
            && self.df_hz == other.df_hz
    }

    pub fn norm(&self) -> f64 {
        self.power.iter().map(|p| p * p).sum::<f64>().sqrt()
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    x - 2.0 * PI * ((x - PI) / (2.0 * PI)).ceil()
}

/// Phase angle of every chirp at one range bin, in (-pi, pi].
pub fn phase_at_bin(m: &RangeMatrix, bin: usize) -> Result<TimeSeries> {
    if bin >= m.n_bins() {
        return Err(Error::Argument(format!(
            "bin {bin} outside range matrix with {} bins",
            m.n_bins()
        )));
    }
    let samples = m
        .column(bin)
        .map(|z| {
            let a = z.im.atan2(z.re);
            if a <= -PI {
                PI
            } else {
                a
            }
        })
        .collect();
    TimeSeries::new(samples, m.chirp_rate_hz())
}

/// Standard phase unwrapping: consecutive differences are folded into
/// (-pi, pi] and accumulated. The first sample is kept as is.
pub fn unwrap(phase: &TimeSeries) -> TimeSeries {
    let x = &phase.samples;
    let mut out = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        out.push(first);
        let mut acc = first;
        for w in x.windows(2) {
            acc += wrap_phase(w[1] - w[0]);
            out.push(acc);
        }
    }
    TimeSeries {
        samples: out,
        rate_hz: phase.rate_hz,
    }
}

/// Hamming-windowed sinc band-pass taps. The tap count is `4 * rate / f_lo`
/// rounded to the nearest odd integer, and the response is symmetric so a
/// centered application has zero phase.
pub fn bandpass_taps(rate_hz: f64, f_lo: f64, f_hi: f64) -> Result<Vec<f64>> {
    let nyquist = rate_hz / 2.0;
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < nyquist) {
        return Err(Error::Argument(format!(
            "band [{f_lo}, {f_hi}] Hz must satisfy 0 < f_lo < f_hi < Nyquist ({nyquist} Hz)"
        )));
    }
    let mut len = (4.0 * rate_hz / f_lo).round() as usize;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let half = (len / 2) as f64;
    let lowpass = |fc: f64| -> Vec<f64> {
        let wc = 2.0 * fc / rate_hz;
        let mut h: Vec<f64> = (0..len)
            .map(|i| {
                let n = i as f64 - half;
                let sinc = if n == 0.0 {
                    wc
                } else {
                    (PI * wc * n).sin() / (PI * n)
                };
                let hamming = 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
                sinc * hamming
            })
            .collect();
        let dc: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= dc);
        h
    };
    let hi = lowpass(f_hi);
    let lo = lowpass(f_lo);
    Ok(hi.iter().zip(&lo).map(|(a, b)| a - b).collect())
}

/// Index into `0..n` under whole-sample symmetric reflection (`x[-1] = x[1]`).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Zero-phase FIR band-pass with reflection padding. Output has the same
/// length as the input.
pub fn bandpass(x: &TimeSeries, f_lo: f64, f_hi: f64) -> Result<TimeSeries> {
    let taps = bandpass_taps(x.rate_hz, f_lo, f_hi)?;
    let n = x.len();
    if n == 0 {
        return Ok(x.clone());
    }
    let half = taps.len() / 2;
    let padded: Vec<f64> = (0..n + 2 * half)
        .map(|i| x.samples[reflect_index(i as isize - half as isize, n)])
        .collect();
    let samples = (0..n)
        .map(|t| {
            taps.iter()
                .zip(&padded[t..t + taps.len()])
                .map(|(h, v)| h * v)
                .sum()
        })
        .collect();
    Ok(TimeSeries {
        samples,
        rate_hz: x.rate_hz,
    })
}

/// Band-pass over the cardiac band.
pub fn cardiac_bandpass(x: &TimeSeries) -> Result<TimeSeries> {
    bandpass(x, CARDIAC_LO_HZ, CARDIAC_HI_HZ)
}

/// Precomputed Hann periodogram evaluated on a band grid for a fixed input
/// length. The transform is mean removal, Hann window, DTFT on the grid,
/// squared magnitude, then unit-norm scaling.
#[derive(Debug)]
pub struct PsdPlan {
    len: usize,
    rate_hz: f64,
    f_lo_hz: f64,
    f_hi_hz: f64,
    df_hz: f64,
    window: Vec<f64>,
    // bins x len, row-major
    cos: Vec<f64>,
    sin: Vec<f64>,
}

/// Intermediate values of one PSD evaluation, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct PsdTape {
    normalized: bool,
    re: Vec<f64>,
    im: Vec<f64>,
    raw_norm: f64,
    spectrum: Vec<f64>,
}

impl PsdPlan {
    pub fn new(len: usize, rate_hz: f64, f_lo: f64, f_hi: f64, df: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::Argument(format!(
                "PSD needs at least 2 samples, got {len}"
            )));
        }
        if !(f_lo >= 0.0 && f_hi > f_lo && f_hi <= rate_hz / 2.0 && df > 0.0) {
            return Err(Error::Argument(format!(
                "degenerate PSD band [{f_lo}, {f_hi}] Hz with df {df} at rate {rate_hz} Hz"
            )));
        }
        let steps = ((f_hi - f_lo) / df - 1e-9).ceil().max(1.0) as usize;
        let df_hz = (f_hi - f_lo) / steps as f64;
        let bins = steps + 1;
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
            .collect();
        let mut cos = Vec::with_capacity(bins * len);
        let mut sin = Vec::with_capacity(bins * len);
        for b in 0..bins {
            let f = f_lo + b as f64 * df_hz;
            let w = 2.0 * PI * f / rate_hz;
            for n in 0..len {
                let (s, c) = (w * n as f64).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self {
            len,
            rate_hz,
            f_lo_hz: f_lo,
            f_hi_hz: f_hi,
            df_hz,
            window,
            cos,
            sin,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bins(&self) -> usize {
        self.cos.len() / self.len
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    fn spectrum(&self, power: Vec<f64>) -> BandSpectrum {
        BandSpectrum {
            power,
            f_lo_hz: self.f_lo_hz,
            f_hi_hz: self.f_hi_hz,
            df_hz: self.df_hz,
        }
    }

    /// Unit-norm spectrum of `x`. An all-zero periodogram stays all-zero.
    pub fn forward(&self, x: &[f64]) -> BandSpectrum {
        self.forward_taped(x).0
    }

    pub fn forward_taped(&self, x: &[f64]) -> (BandSpectrum, PsdTape) {
        self.forward_taped_with(x, true)
    }

    /// As [`forward_taped`](Self::forward_taped); with `normalize = false`
    /// the raw periodogram is returned.
    pub fn forward_taped_with(&self, x: &[f64], normalize: bool) -> (BandSpectrum, PsdTape) {
        assert_eq!(x.len(), self.len, "PSD plan length mismatch");
        let mean = x.iter().sum::<f64>() / self.len as f64;
        let xw: Vec<f64> = x.iter().zip(&self.window).map(|(v, w)| (v - mean) * w).collect();
        let bins = self.bins();
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        let mut raw = vec![0.0; bins];
        for b in 0..bins {
            let c = &self.cos[b * self.len..(b + 1) * self.len];
            let s = &self.sin[b * self.len..(b + 1) * self.len];
            let r: f64 = xw.iter().zip(c).map(|(v, c)| v * c).sum();
            let i: f64 = -xw.iter().zip(s).map(|(v, s)| v * s).sum::<f64>();
            re[b] = r;
            im[b] = i;
            raw[b] = r * r + i * i;
        }
        let raw_norm = if normalize {
            raw.iter().map(|p| p * p).sum::<f64>().sqrt()
        } else {
            1.0
        };
        let spectrum: Vec<f64> = if normalize && raw_norm > 0.0 {
            raw.iter().map(|p| p / raw_norm).collect()
        } else {
            raw
        };
        let tape = PsdTape {
            normalized: normalize,
            re,
            im,
            raw_norm,
            spectrum: spectrum.clone(),
        };
        (self.spectrum(spectrum), tape)
    }

    /// Vector-Jacobian product: gradient of a scalar w.r.t. the input
    /// samples given its gradient w.r.t. the unit-norm spectrum.
    pub fn backward(&self, tape: &PsdTape, grad_spectrum: &[f64]) -> Vec<f64> {
        let bins = self.bins();
        assert_eq!(grad_spectrum.len(), bins);
        if tape.raw_norm == 0.0 {
            return vec![0.0; self.len];
        }
        // through s = P / |P|
        let dot: f64 = grad_spectrum.iter().zip(&tape.spectrum).map(|(g, s)| g * s).sum();
        let grad_raw: Vec<f64> = if tape.normalized {
            grad_spectrum
                .iter()
                .zip(&tape.spectrum)
                .map(|(g, s)| (g - dot * s) / tape.raw_norm)
                .collect()
        } else {
            grad_spectrum.to_vec()
        };
        // through P = re^2 + im^2, re = sum xw cos, im = -sum xw sin
        let mut grad_xw = vec![0.0; self.len];
        for (b, g) in grad_raw.iter().enumerate().take(bins) {
            let gr = 2.0 * g * tape.re[b];
            let gi = -2.0 * g * tape.im[b];
            let c = &self.cos[b * self.len..(b + 1) * self.len];
            let s = &self.sin[b * self.len..(b + 1) * self.len];
            for ((g, c), s) in grad_xw.iter_mut().zip(c).zip(s) {
                *g += gr * c + gi * s;
            }
        }
        // through windowing and mean removal
        let mut grad: Vec<f64> = grad_xw.iter().zip(&self.window).map(|(g, w)| g * w).collect();
        let mean = grad.iter().sum::<f64>() / self.len as f64;
        grad.iter_mut().for_each(|g| *g -= mean);
        grad
    }
}

type PlanKey = (usize, u64, u64, u64, u64);

thread_local! {
    static PLANS: RefCell<HashMap<PlanKey, Rc<PsdPlan>>> = RefCell::new(HashMap::new());
}

/// Returns a cached plan for this thread, building it on first use.
pub fn cached_plan(len: usize, rate_hz: f64, f_lo: f64, f_hi: f64, df: f64) -> Result<Rc<PsdPlan>> {
    let key = (
        len,
        rate_hz.to_bits(),
        f_lo.to_bits(),
        f_hi.to_bits(),
        df.to_bits(),
    );
    if let Some(plan) = PLANS.with(|p| p.borrow().get(&key).cloned()) {
        return Ok(plan);
    }
    let plan = Rc::new(PsdPlan::new(len, rate_hz, f_lo, f_hi, df)?);
    PLANS.with(|p| {
        let mut plans = p.borrow_mut();
        // bounded: training touches a handful of shapes
        if plans.len() > 64 {
            plans.clear();
        }
        plans.insert(key, plan.clone());
    });
    Ok(plan)
}

/// Hann periodogram of `x` restricted to `[f_lo, f_hi]` on a grid no coarser
/// than `df`, scaled to unit Euclidean norm.
pub fn psd(x: &TimeSeries, f_lo: f64, f_hi: f64, df: f64) -> Result<BandSpectrum> {
    let plan = cached_plan(x.len(), x.rate_hz, f_lo, f_hi, df)?;
    Ok(plan.forward(&x.samples))
}

/// Heart rate in bpm from the cardiac-band periodogram peak. Requires at
/// least one 10 s window of data.
pub fn hr_from_signal(x: &TimeSeries) -> Result<f64> {
    let min_len = samples_for(HR_WINDOW_S, x.rate_hz);
    if x.len() < min_len {
        return Err(Error::Argument(format!(
            "heart-rate readout needs at least {HR_WINDOW_S} s ({min_len} samples), got {}",
            x.len()
        )));
    }
    let spec = psd(x, CARDIAC_LO_HZ, CARDIAC_HI_HZ, HR_DF_HZ)?;
    Ok(60.0 * spec.frequency(spec.argmax()))
}

/// Training-free heartbeat signal at one range bin:
/// band-pass of the unwrapped phase.
pub fn traditional_heartbeat(m: &RangeMatrix, bin: usize) -> Result<TimeSeries> {
    let phase = phase_at_bin(m, bin)?;
    cardiac_bandpass(&unwrap(&phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, amp: f64, rate: f64, secs: f64) -> TimeSeries {
        let n = samples_for(secs, rate);
        TimeSeries::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
                .collect(),
            rate,
        )
        .unwrap()
    }

    #[test]
    fn unwrap_examples() {
        let x = TimeSeries::new(vec![0.0, 0.1, 0.2], 1.0).unwrap();
        assert_eq!(unwrap(&x).samples, vec![0.0, 0.1, 0.2]);

        let x = TimeSeries::new(vec![3.1, -3.1], 1.0).unwrap();
        let u = unwrap(&x).samples;
        assert_eq!(u[0], 3.1);
        assert!((u[1] - (3.1 + (2.0 * PI - 6.2))).abs() < 1e-12);
        assert!((u[1] - 3.18318).abs() < 1e-5);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn taps_are_symmetric_odd_and_dc_free() {
        let h = bandpass_taps(120.0, 0.8, 3.0).unwrap();
        assert_eq!(h.len(), 601);
        for i in 0..h.len() / 2 {
            assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-15);
        }
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn bandpass_rejects_band_beyond_nyquist() {
        let x = tone(1.0, 1.0, 4.0, 30.0);
        assert!(matches!(bandpass(&x, 0.8, 3.0), Err(Error::Argument(_))));
    }

    #[test]
    fn bandpass_zero_in_zero_out() {
        let x = TimeSeries::new(vec![0.0; 1200], 120.0).unwrap();
        let y = cardiac_bandpass(&x).unwrap();
        assert!(y.samples.iter().all(|v| *v == 0.0));
    }

    // Filter response oracle: amplitude of the steady-state output measured
    // by projecting the interior onto the input tone.
    fn steady_gain(freq: f64) -> f64 {
        let x = tone(freq, 1.0, 120.0, 60.0);
        let y = cardiac_bandpass(&x).unwrap();
        let (a, b) = (1200, 6000);
        let mut s = 0.0;
        let mut c = 0.0;
        for i in a..b {
            let t = i as f64 / 120.0;
            s += y.samples[i] * (2.0 * PI * freq * t).sin();
            c += y.samples[i] * (2.0 * PI * freq * t).cos();
        }
        2.0 * (s * s + c * c).sqrt() / (b - a) as f64
    }

    #[test]
    fn bandpass_passband_and_stopband() {
        let g = steady_gain(1.2);
        assert!((g - 1.0).abs() < 0.02, "passband gain {g}");
        let g = steady_gain(0.2);
        assert!(20.0 * g.log10() <= -20.0, "stopband gain {g}");
    }

    #[test]
    fn psd_tone_peak_and_norm() {
        let x = tone(1.5, 0.3, 120.0, 10.0);
        let s = psd(&x, 0.8, 3.0, 0.05).unwrap();
        assert!((s.frequency(s.argmax()) - 1.5).abs() <= s.df_hz);
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!((s.frequency(s.power.len() - 1) - 3.0).abs() < 1e-9);
        assert!(s.df_hz <= 0.05);
    }

    #[test]
    fn psd_grid_refines_when_df_does_not_divide_band() {
        let x = tone(1.5, 1.0, 120.0, 10.0);
        let s = psd(&x, 0.8, 3.0, 0.3).unwrap();
        assert!(s.df_hz <= 0.3);
        assert!((s.frequency(s.power.len() - 1) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn psd_degenerate_band_is_error() {
        let x = tone(1.5, 1.0, 120.0, 10.0);
        assert!(psd(&x, 2.0, 2.0, 0.01).is_err());
        assert!(psd(&x, 0.8, 70.0, 0.01).is_err());
        let short = TimeSeries::new(vec![1.0], 120.0).unwrap();
        assert!(psd(&short, 0.8, 3.0, 0.01).is_err());
    }

    #[test]
    fn psd_backward_matches_finite_differences() {
        let plan = PsdPlan::new(200, 50.0, 0.8, 3.0, 0.1).unwrap();
        let x: Vec<f64> = (0..200)
            .map(|i| (i as f64 * 0.37).sin() + 0.3 * (i as f64 * 0.05).cos())
            .collect();
        let weights: Vec<f64> = (0..plan.bins()).map(|b| (b as f64 * 0.7).cos()).collect();
        let loss = |x: &[f64]| -> f64 {
            plan.forward(x)
                .power
                .iter()
                .zip(&weights)
                .map(|(p, w)| p * w)
                .sum()
        };
        let (_, tape) = plan.forward_taped(&x);
        let grad = plan.backward(&tape, &weights);
        for &i in &[0usize, 17, 99, 150, 199] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "i={i} fd={fd} analytic={}",
                grad[i]
            );
        }
    }

    #[test]
    fn hr_tone_readout() {
        let hr = hr_from_signal(&tone(1.2, 1.0, 120.0, 10.0)).unwrap();
        assert!((hr - 72.0).abs() <= 0.6, "{hr}");
        let hr = hr_from_signal(&tone(2.5, 1.0, 120.0, 10.0)).unwrap();
        assert!((hr - 150.0).abs() <= 0.6, "{hr}");
    }

    #[test]
    fn hr_dominant_peak_wins() {
        let a = tone(1.0, 1.0, 120.0, 10.0);
        let b = tone(2.0, 0.5, 120.0, 10.0);
        let x = TimeSeries::new(
            a.samples.iter().zip(&b.samples).map(|(u, v)| u + v).collect(),
            120.0,
        )
        .unwrap();
        let hr = hr_from_signal(&x).unwrap();
        assert!((hr - 60.0).abs() < 1e-6, "{hr}");
    }

    #[test]
    fn hr_rejects_short_input() {
        assert!(matches!(
            hr_from_signal(&tone(1.2, 1.0, 120.0, 9.0)),
            Err(Error::Argument(_))
        ));
    }

    fn white_psd(seed: u64) -> BandSpectrum {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
        psd(&TimeSeries::new(x, 120.0).unwrap(), 0.8, 3.0, 0.01).unwrap()
    }

    fn median(v: &[f64]) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s[s.len() / 2]
    }

    // Periodogram bins of white noise are exponential, so a bin passes
    // 5x the median with probability 2^-5.
    #[test]
    fn white_noise_psd_is_flat_in_distribution() {
        let mut over = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let p = white_psd(seed);
            let m = median(&p.power);
            over += p.power.iter().filter(|v| **v > 5.0 * m).count();
            total += p.power.len();
        }
        let frac = over as f64 / total as f64;
        assert!((0.01..0.06).contains(&frac), "exceedance fraction {frac}");
    }

    // A single periodogram over ~75 independent band bins exceeds 5x its
    // median in most trials; kept to show the gap.
    #[test]
    #[ignore]
    fn white_noise_psd_peak_below_five_medians() {
        let ok = (0..100)
            .filter(|&seed| {
                let p = white_psd(1000 + seed);
                let m = median(&p.power);
                p.power.iter().all(|v| *v <= 5.0 * m)
            })
            .count();
        assert!(ok >= 95, "{ok}/100 trials passed");
    }

    #[test]
    fn time_series_rejects_non_finite() {
        assert!(TimeSeries::new(vec![0.0, f64::NAN], 1.0).is_err());
        assert!(TimeSeries::new(vec![0.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn unwrap_differences_bounded(x in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let u = unwrap(&TimeSeries::new(x.clone(), 1.0).unwrap());
            prop_assert_eq!(u.samples[0], x[0]);
            for w in u.samples.windows(2) {
                let d = w[1] - w[0];
                prop_assert!(d > -PI - 1e-9 && d <= PI + 1e-9);
            }
            for (a, b) in u.samples.iter().zip(&x) {
                prop_assert!((wrap_phase(*a) - wrap_phase(*b)).abs() < 1e-9
                    || (wrap_phase(*a) - wrap_phase(*b)).abs() > 2.0 * PI - 1e-9);
            }
        }

        #[test]
        fn bandpass_is_linear(
            seed in 0u64..1000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let n = 400;
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 50.0 - 1.0).collect();
            let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01 * (seed as f64 + 1.0)).sin()).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let bx = cardiac_bandpass(&TimeSeries::new(x, 120.0).unwrap()).unwrap();
            let by = cardiac_bandpass(&TimeSeries::new(y, 120.0).unwrap()).unwrap();
            let bc = cardiac_bandpass(&TimeSeries::new(combo, 120.0).unwrap()).unwrap();
            for i in 0..n {
                let expect = a * bx.samples[i] + b * by.samples[i];
                prop_assert!((bc.samples[i] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn psd_scale_invariant(c in 0.01f64..100.0, f in 0.9f64..2.9) {
            let x = tone(f, 1.0, 60.0, 10.0);
            let noisy: Vec<f64> = x.samples.iter().enumerate().map(|(i, v)| v + 0.3 * (i as f64 * 1.7).sin()).collect();
            let x = TimeSeries::new(noisy, 60.0).unwrap();
            let y = TimeSeries::new(x.samples.iter().map(|v| c * v).collect(), 60.0).unwrap();
            let a = psd(&x, 0.8, 3.0, 0.05).unwrap();
            let b = psd(&y, 0.8, 3.0, 0.05).unwrap();
            for (p, q) in a.power.iter().zip(&b.power) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn hr_invariant_to_scale_and_sign(c in 0.01f64..100.0, f in 0.85f64..2.95) {
            let x = tone(f, 1.0, 60.0, 10.0);
            let scaled = TimeSeries::new(x.samples.iter().map(|v| -c * v).collect(), 60.0).unwrap();
            prop_assert_eq!(hr_from_signal(&x).unwrap(), hr_from_signal(&scaled).unwrap());
        }
    }
}
