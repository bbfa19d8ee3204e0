//! Temporal convolution extractor with hand-written reverse-mode gradients,
//! and the AdamW optimizer.
//!
//! An extractor maps a windowed range matrix (N chirps x W bins) to a
//! length-N time series. Each complex column is phase-aligned to its mean
//! and the whole window is scaled to unit RMS; the real and imaginary parts
//! of every column become two input channels. The stack is a series of
//! same-padded 1-D convolutions (tanh) followed by a 1x1 linear head.

use rand::Rng;

use crate::dsp::TimeSeries;
use crate::error::{Error, Result};
use crate::rangeproc::WindowedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_ch
    }
}

/// Layer layout of an extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_channels: usize,
    pub hidden: Vec<usize>,
    pub kernel: usize,
    pub activation: Activation,
}

impl Architecture {
    /// Three tanh layers of 16 channels, kernel 15, for a window of
    /// `2 * half_width + 1` bins.
    pub fn for_half_width(half_width: usize) -> Self {
        Self {
            input_channels: 2 * (2 * half_width + 1),
            hidden: vec![16, 16, 16],
            kernel: 15,
            activation: Activation::Tanh,
        }
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut layers = Vec::with_capacity(self.hidden.len() + 1);
        let mut in_ch = self.input_channels;
        for &h in &self.hidden {
            layers.push(LayerShape {
                in_ch,
                out_ch: h,
                kernel: self.kernel,
                activation: self.activation,
            });
            in_ch = h;
        }
        layers.push(LayerShape {
            in_ch,
            out_ch: 1,
            kernel: 1,
            activation: Activation::Identity,
        });
        layers
    }
}

/// Flat parameter vector plus its layer layout. Each layer stores its
/// weights (`out x in x kernel`, row-major) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

impl ExtractorParams {
    /// Total parameter count, or `None` when consecutive layers disagree on
    /// channel counts, a kernel is even, or the head is not single-channel.
    pub fn value_count(layers: &[LayerShape]) -> Option<usize> {
        let last = layers.last()?;
        if last.out_ch != 1 {
            return None;
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_ch == 0 || l.out_ch == 0 || l.kernel % 2 == 0 {
                return None;
            }
            if i > 0 && layers[i - 1].out_ch != l.in_ch {
                return None;
            }
        }
        layers
            .iter()
            .try_fold(0usize, |acc, l| acc.checked_add(l.param_count()))
    }

    pub fn from_parts(layers: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected =
            Self::value_count(&layers).ok_or_else(|| Error::Argument("inconsistent layer shapes".into()))?;
        if values.len() != expected {
            return Err(Error::Argument(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite parameter".into()));
        }
        Ok(Self { layers, values })
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch.layers();
        let n = Self::value_count(&layers).expect("architecture is consistent");
        Self {
            layers,
            values: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let mut offset = 0;
        for l in p.layers.clone() {
            let fan = ((l.in_ch + l.out_ch) * l.kernel) as f64;
            let limit = (6.0 / fan).sqrt();
            for v in &mut p.values[offset..offset + l.weight_count()] {
                *v = rng.random_range(-limit..limit);
            }
            offset += l.param_count();
        }
        p
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_ch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut o = 0;
        for l in &self.layers {
            offsets.push(o);
            o += l.param_count();
        }
        offsets
    }

    /// (weights, biases) of layer `i`.
    pub fn layer(&self, i: usize) -> (&[f64], &[f64]) {
        let o = self.offsets()[i];
        let l = &self.layers[i];
        let (w, rest) = self.values[o..o + l.param_count()].split_at(l.weight_count());
        (w, rest)
    }

    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let o = self.offsets()[i];
        let l = self.layers[i];
        self.values[o..o + l.param_count()].split_at_mut(l.weight_count())
    }
}

/// Channel-major real input tensor (`channels x len`).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub data: Vec<f64>,
    pub channels: usize,
    pub len: usize,
    pub rate_hz: f64,
}

/// Phase-aligns each column to its mean, scales the window to unit RMS and
/// splits it into real / imaginary channels (`2c`, `2c + 1`).
pub fn window_features(w: &WindowedMatrix) -> Features {
    let width = w.width();
    let n = w.n_chirps;
    let total: f64 = w.data.iter().map(|z| z.norm_sqr()).sum();
    let rms = (total / w.data.len().max(1) as f64).sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    let mut data = vec![0.0; 2 * width * n];
    for c in 0..width {
        let mean: num_complex::Complex64 = w.column(c).sum();
        let rot = if mean.norm() > 0.0 {
            mean.conj() / mean.norm() * scale
        } else {
            num_complex::Complex64::new(scale, 0.0)
        };
        let (re, im) = data[2 * c * n..2 * (c + 1) * n].split_at_mut(n);
        for (t, z) in w.column(c).enumerate() {
            let v = z * rot;
            re[t] = v.re;
            im[t] = v.im;
        }
    }
    Features {
        data,
        channels: 2 * width,
        len: n,
        rate_hz: w.chirp_rate_hz,
    }
}

/// Layer activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    len: usize,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an output")
    }
}

fn shifted_range(shift: isize, len: usize) -> (usize, usize) {
    if shift >= 0 {
        (0, len.saturating_sub(shift as usize))
    } else {
        (((-shift) as usize).min(len), len)
    }
}

fn conv_forward(l: &LayerShape, w: &[f64], b: &[f64], x: &[f64], len: usize) -> Vec<f64> {
    let pad = (l.kernel / 2) as isize;
    let mut out = vec![0.0; l.out_ch * len];
    for o in 0..l.out_ch {
        let row = &mut out[o * len..(o + 1) * len];
        row.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..l.in_ch {
            let xrow = &x[i * len..(i + 1) * len];
            for k in 0..l.kernel {
                let wv = w[(o * l.in_ch + i) * l.kernel + k];
                if wv == 0.0 {
                    continue;
                }
                let shift = k as isize - pad;
                let (t0, t1) = shifted_range(shift, len);
                let src = &xrow[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                for (r, s) in row[t0..t1].iter_mut().zip(src) {
                    *r += wv * s;
                }
            }
        }
    }
    if l.activation == Activation::Tanh {
        out.iter_mut().for_each(|v| *v = v.tanh());
    }
    out
}

/// Runs the stack on prepared features, keeping the activations.
pub fn forward_features(params: &ExtractorParams, x: &Features) -> Result<Tape> {
    if x.channels != params.input_channels() {
        return Err(Error::Argument(format!(
            "extractor expects {} input channels, window provides {}",
            params.input_channels(),
            x.channels
        )));
    }
    if x.data.len() != x.channels * x.len {
        return Err(Error::Argument("feature tensor has the wrong size".into()));
    }
    let mut acts = Vec::with_capacity(params.layers().len() + 1);
    acts.push(x.data.clone());
    for (i, l) in params.layers().iter().enumerate() {
        let (w, b) = params.layer(i);
        let y = conv_forward(l, w, b, acts.last().unwrap(), x.len);
        acts.push(y);
    }
    Ok(Tape { acts, len: x.len })
}

/// Predicted signal for a windowed matrix.
pub fn forward(params: &ExtractorParams, w: &WindowedMatrix) -> Result<TimeSeries> {
    let x = window_features(w);
    let tape = forward_features(params, &x)?;
    TimeSeries::new(tape.output().to_vec(), x.rate_hz)
}

/// Gradient of `<upstream, output>` with respect to every parameter, in
/// the same flat layout as [`ExtractorParams::values`].
pub fn backward_tape(params: &ExtractorParams, tape: &Tape, upstream: &[f64]) -> Result<Vec<f64>> {
    let len = tape.len;
    if upstream.len() != len {
        return Err(Error::Argument(format!(
            "upstream gradient has {} samples, output has {len}",
            upstream.len()
        )));
    }
    let mut grads = vec![0.0; params.len()];
    let offsets = params.offsets();
    let mut g_out = upstream.to_vec();
    for (li, l) in params.layers().iter().enumerate().rev() {
        let y = &tape.acts[li + 1];
        let x = &tape.acts[li];
        let g_pre: Vec<f64> = match l.activation {
            Activation::Identity => g_out,
            Activation::Tanh => g_out.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
        };
        let (w, _) = params.layer(li);
        let (gw, gb) = grads[offsets[li]..offsets[li] + l.param_count()].split_at_mut(l.weight_count());
        let need_input_grad = li > 0;
        let mut g_in = if need_input_grad {
            vec![0.0; l.in_ch * len]
        } else {
            Vec::new()
        };
        let pad = (l.kernel / 2) as isize;
        for o in 0..l.out_ch {
            let go = &g_pre[o * len..(o + 1) * len];
            gb[o] = go.iter().sum();
            for i in 0..l.in_ch {
                let xrow = &x[i * len..(i + 1) * len];
                let base = (o * l.in_ch + i) * l.kernel;
                tap_correlation(go, xrow, l.kernel, &mut gw[base..base + l.kernel]);
                if !need_input_grad {
                    continue;
                }
                for k in 0..l.kernel {
                    let shift = k as isize - pad;
                    let (t0, t1) = shifted_range(shift, len);
                    let s0 = (t0 as isize + shift) as usize;
                    let s1 = (t1 as isize + shift) as usize;
                    let wv = w[base + k];
                    for (gi, g) in g_in[i * len + s0..i * len + s1].iter_mut().zip(&go[t0..t1]) {
                        *gi += wv * g;
                    }
                }
            }
        }
        g_out = g_in;
    }
    Ok(grads)
}

/// `out[k] = sum_t go[t] * x[t + k - kernel/2]` over in-range `t`. All taps
/// advance together so each sum keeps ascending-`t` order without one long
/// dependency chain.
fn tap_correlation(go: &[f64], x: &[f64], kernel: usize, out: &mut [f64]) {
    let len = go.len();
    let pad = kernel / 2;
    out.iter_mut().for_each(|v| *v = -0.0);
    let edge = |t: usize, out: &mut [f64]| {
        for (k, acc) in out.iter_mut().enumerate() {
            if let Some(s) = (t + k).checked_sub(pad).filter(|&s| s < len) {
                *acc += go[t] * x[s];
            }
        }
    };
    let lo = pad.min(len);
    let hi = len.saturating_sub(kernel - 1 - pad).max(lo);
    for t in 0..lo {
        edge(t, out);
    }
    for t in lo..hi {
        let g = go[t];
        for (acc, v) in out.iter_mut().zip(&x[t - pad..t - pad + kernel]) {
            *acc += g * v;
        }
    }
    for t in hi..len {
        edge(t, out);
    }
}

/// Parameter gradient of `<upstream, forward(params, w)>`.
pub fn backward(params: &ExtractorParams, w: &WindowedMatrix, upstream: &[f64]) -> Result<Vec<f64>> {
    let tape = forward_features(params, &window_features(w))?;
    backward_tape(params, &tape, upstream)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW moments and step count for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize, config: AdamWConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One decoupled-weight-decay Adam update. Non-finite gradients reject
    /// the step and leave both parameters and state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Argument(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient at index {i}")));
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p -= c.learning_rate * c.weight_decay * *p;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_window(n: usize, half_width: usize, seed: u64) -> WindowedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = 2 * half_width + 1;
        WindowedMatrix {
            data: (0..n * width)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
            n_chirps: n,
            center_bin: 10,
            half_width,
            chirp_rate_hz: 120.0,
        }
    }

    #[test]
    fn default_architecture_size() {
        let p = ExtractorParams::zeros(&Architecture::for_half_width(2));
        assert_eq!(p.input_channels(), 10);
        assert_eq!(p.layers().len(), 4);
        assert!(p.len() < 50_000, "{}", p.len());
        assert_eq!(p.len(), 10 * 16 * 15 + 16 + 2 * (16 * 16 * 15 + 16) + 16 + 1);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = ExtractorParams::zeros(&Architecture::for_half_width(2));
        let y = forward(&p, &random_window(100, 2, 1)).unwrap();
        assert_eq!(y.len(), 100);
        assert!(y.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_is_sensitive_to_middle_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ExtractorParams::random(&Architecture::for_half_width(1), &mut rng);
        let w = random_window(80, 1, 2);
        let a = forward(&p, &w).unwrap();
        let mut q = p.clone();
        q.layer_mut(1).0.iter_mut().for_each(|v| *v *= 2.0);
        let b = forward(&q, &w).unwrap();
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ExtractorParams::random(&Architecture::for_half_width(2), &mut rng);
        let w = random_window(64, 2, 9);
        assert_eq!(forward(&p, &w).unwrap(), forward(&p, &w).unwrap());
    }

    #[test]
    fn forward_is_translation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ExtractorParams::random(&Architecture::for_half_width(1), &mut rng);
        let (len, shift, channels) = (200, 9, 6);
        let base: Vec<f64> = (0..channels * (len + shift))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let cut = |off: usize| Features {
            data: (0..channels)
                .flat_map(|c| base[c * (len + shift) + off..c * (len + shift) + off + len].to_vec())
                .collect(),
            channels,
            len,
            rate_hz: 120.0,
        };
        let a = forward_features(&p, &cut(shift)).unwrap();
        let b = forward_features(&p, &cut(0)).unwrap();
        // three kernel-15 layers see 21 samples to each side
        let margin = 21;
        for t in margin..len - shift - margin {
            assert!((a.output()[t] - b.output()[t + shift]).abs() < 1e-9);
        }
    }

    #[test]
    fn channel_mismatch_is_argument_error() {
        let p = ExtractorParams::zeros(&Architecture::for_half_width(2));
        assert!(matches!(
            forward(&p, &random_window(10, 1, 0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn features_are_phase_aligned_and_unit_rms() {
        let w = random_window(200, 1, 4);
        let f = window_features(&w);
        let rms = (f.data.iter().map(|v| v * v).sum::<f64>() / (200.0 * 3.0)).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
        for c in 0..3 {
            let im_mean: f64 = f.data[(2 * c + 1) * 200..(2 * c + 2) * 200].iter().sum();
            let re_mean: f64 = f.data[2 * c * 200..(2 * c + 1) * 200].iter().sum();
            assert!(im_mean.abs() < 1e-9);
            assert!(re_mean >= 0.0);
        }
    }

    #[test]
    fn tap_correlation_matches_per_tap_sums_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (len, kernel) in [(200, 15), (15, 15), (9, 15), (1, 15), (40, 1), (6, 3)] {
            let go: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; kernel];
            tap_correlation(&go, &x, kernel, &mut out);
            let pad = (kernel / 2) as isize;
            for (k, got) in out.iter().enumerate() {
                let shift = k as isize - pad;
                let (t0, t1) = shifted_range(shift, len);
                let want: f64 = (t0..t1).map(|t| go[t] * x[(t as isize + shift) as usize]).sum();
                assert_eq!(got.to_bits(), want.to_bits(), "len {len} kernel {kernel} tap {k}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ExtractorParams::random(&Architecture::for_half_width(1), &mut rng);
        let g = backward(&p, &random_window(40, 1, 6), &[0.0; 40]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_single_layer_matches_least_squares_gradient() {
        // y_t = sum_{i,k} w_{ik} x_i[t + k - 1] + b, loss = 1/2 sum (y - target)^2,
        // so dL/dw_{ik} = sum_t r_t x_i[t + k - 1] and dL/db = sum_t r_t.
        let layers = vec![LayerShape {
            in_ch: 2,
            out_ch: 1,
            kernel: 3,
            activation: Activation::Identity,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ExtractorParams::from_parts(layers, values.clone()).unwrap();
        let len = 30;
        let x = Features {
            data: (0..2 * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            channels: 2,
            len,
            rate_hz: 1.0,
        };
        let target: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xv = |i: usize, t: isize| -> f64 {
            if t < 0 || t >= len as isize {
                0.0
            } else {
                x.data[i * len + t as usize]
            }
        };
        let y: Vec<f64> = (0..len as isize)
            .map(|t| {
                values[6]
                    + (0..2)
                        .flat_map(|i| (0..3).map(move |k| (i, k)))
                        .map(|(i, k)| values[i * 3 + k] * xv(i, t + k as isize - 1))
                        .sum::<f64>()
            })
            .collect();
        let r: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut expected = vec![0.0; 7];
        for t in 0..len as isize {
            for i in 0..2 {
                for k in 0..3 {
                    expected[i * 3 + k] += r[t as usize] * xv(i, t + k as isize - 1);
                }
            }
            expected[6] += r[t as usize];
        }
        let tape = forward_features(&p, &x).unwrap();
        for (a, b) in tape.output().iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = backward_tape(&p, &tape, &r).unwrap();
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn adamw_zero_grad_no_decay_is_identity() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut st = OptimizerState::new(3, cfg);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adamw_descends_on_square() {
        let mut st = OptimizerState::new(1, AdamWConfig::default());
        let mut p = vec![1.0];
        let g = vec![2.0 * p[0]];
        st.step(&mut p, &g).unwrap();
        assert!(p[0].abs() < 1.0);
    }

    #[test]
    fn adamw_weight_decay_shrinks_geometrically() {
        let cfg = AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            ..Default::default()
        };
        let mut st = OptimizerState::new(2, cfg);
        let mut p = vec![2.0, -3.0];
        for k in 1..=5 {
            st.step(&mut p, &[0.0, 0.0]).unwrap();
            let f = (1.0 - 1e-3 * 0.01f64).powi(k);
            assert!((p[0] - 2.0 * f).abs() < 1e-15);
            assert!((p[1] + 3.0 * f).abs() < 1e-15);
        }
    }

    #[test]
    fn adamw_rejects_non_finite_gradient() {
        let mut st = OptimizerState::new(2, AdamWConfig::default());
        let mut p = vec![1.0, 1.0];
        let err = st.step(&mut p, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(st.step, 0);
    }
}
