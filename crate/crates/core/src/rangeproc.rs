//! Range FFT and heartbeat / noise window extraction.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sim::{IfCube, SceneConfig};

/// Complex range matrix, one range profile per chirp (chirp-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMatrix {
    data: Vec<Complex64>,
    n_chirps: usize,
    n_bins: usize,
    chirp_rate_hz: f64,
    range_res_m: f64,
}

impl RangeMatrix {
    pub fn new(
        data: Vec<Complex64>,
        n_chirps: usize,
        n_bins: usize,
        chirp_rate_hz: f64,
        range_res_m: f64,
    ) -> Result<Self> {
        if n_chirps < 1 || n_bins < 2 {
            return Err(Error::Argument(format!(
                "range matrix needs N >= 1 and D >= 2, got {n_chirps}x{n_bins}"
            )));
        }
        if data.len() != n_chirps * n_bins {
            return Err(Error::Argument(format!(
                "range matrix data has {} entries, expected {}",
                data.len(),
                n_chirps * n_bins
            )));
        }
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Data(format!(
                "non-finite range matrix entry at chirp {}, bin {}",
                i / n_bins,
                i % n_bins
            )));
        }
        if !(chirp_rate_hz.is_finite() && chirp_rate_hz > 0.0) {
            return Err(Error::Argument(format!(
                "chirp rate must be positive, got {chirp_rate_hz}"
            )));
        }
        Ok(Self {
            data,
            n_chirps,
            n_bins,
            chirp_rate_hz,
            range_res_m,
        })
    }

    pub fn n_chirps(&self) -> usize {
        self.n_chirps
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn chirp_rate_hz(&self) -> f64 {
        self.chirp_rate_hz
    }

    pub fn range_res_m(&self) -> f64 {
        self.range_res_m
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, chirp: usize) -> &[Complex64] {
        &self.data[chirp * self.n_bins..(chirp + 1) * self.n_bins]
    }

    pub fn get(&self, chirp: usize, bin: usize) -> Complex64 {
        self.data[chirp * self.n_bins + bin]
    }

    pub fn column(&self, bin: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.data.iter().skip(bin).step_by(self.n_bins).copied()
    }

    /// Total power per range bin, summed over chirps.
    pub fn bin_power(&self) -> Vec<f64> {
        let mut power = vec![0.0; self.n_bins];
        for row in self.data.chunks_exact(self.n_bins) {
            for (p, z) in power.iter_mut().zip(row) {
                *p += z.norm_sqr();
            }
        }
        power
    }

    /// First `n` chirps only.
    pub fn truncated(&self, n: usize) -> RangeMatrix {
        let n = n.min(self.n_chirps).max(1);
        RangeMatrix {
            data: self.data[..n * self.n_bins].to_vec(),
            n_chirps: n,
            ..self.clone()
        }
    }
}

/// Columns `center - half_width ..= center + half_width` of a range matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedMatrix {
    /// chirp-major, `width()` columns per chirp
    pub data: Vec<Complex64>,
    pub n_chirps: usize,
    pub center_bin: usize,
    pub half_width: usize,
    pub chirp_rate_hz: f64,
}

impl WindowedMatrix {
    pub fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn get(&self, chirp: usize, col: usize) -> Complex64 {
        self.data[chirp * self.width() + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.data.iter().skip(col).step_by(self.width()).copied()
    }
}

/// Range FFT over every chirp. Each chirp is zero-padded to `n_range_bins`
/// samples when that is larger than the chirp; otherwise only the first
/// `n_range_bins` bins of the full-length transform are kept.
pub fn build_range_matrix(cube: &IfCube, cfg: &SceneConfig) -> Result<RangeMatrix> {
    let s = cube.samples_per_chirp();
    if s < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 samples per chirp, got {s}"
        )));
    }
    if let Some(i) = cube
        .data()
        .iter()
        .position(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::Data(format!(
            "non-finite IF sample at chirp {}, sample {}",
            i / s,
            i % s
        )));
    }
    let d = cfg.n_range_bins.max(2);
    let fft_len = d.max(s);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut data = Vec::with_capacity(cube.n_chirps() * d);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for chirp in cube.data().chunks_exact(s) {
        buf[..s].copy_from_slice(chirp);
        buf[s..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..d]);
    }
    let bin_spacing = cfg.range_resolution_m() * s as f64 / fft_len as f64;
    RangeMatrix::new(data, cube.n_chirps(), d, cfg.chirp_rate_hz, bin_spacing)
}

/// Bin with the largest total power, optionally restricted to a half-open
/// interval. Ties resolve to the smaller index.
pub fn select_center_bin(m: &RangeMatrix, search: Option<std::ops::Range<usize>>) -> Result<usize> {
    let range = search.unwrap_or(0..m.n_bins());
    if range.start >= range.end || range.end > m.n_bins() {
        return Err(Error::Argument(format!(
            "search interval {range:?} is empty or outside 0..{}",
            m.n_bins()
        )));
    }
    let power = m.bin_power();
    let offset = range.start;
    Ok(offset + crate::dsp::argmax_first(&power[range]))
}

/// What to do when a window would run past the matrix edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    #[default]
    Error,
    /// Shift the window inward so it fits.
    Clamp,
}

fn copy_window(m: &RangeMatrix, center: usize, half_width: usize) -> WindowedMatrix {
    let width = 2 * half_width + 1;
    let lo = center - half_width;
    let mut data = Vec::with_capacity(m.n_chirps() * width);
    for n in 0..m.n_chirps() {
        data.extend_from_slice(&m.row(n)[lo..lo + width]);
    }
    WindowedMatrix {
        data,
        n_chirps: m.n_chirps(),
        center_bin: center,
        half_width,
        chirp_rate_hz: m.chirp_rate_hz(),
    }
}

/// Heartbeat window `M(., center +- half_width)`.
pub fn heartbeat_window(
    m: &RangeMatrix,
    center: usize,
    half_width: usize,
    policy: EdgePolicy,
) -> Result<WindowedMatrix> {
    let d = m.n_bins();
    if center >= d || 2 * half_width + 1 > d {
        return Err(Error::Argument(format!(
            "window {center} +- {half_width} does not fit in {d} bins"
        )));
    }
    let fits = center >= half_width && center + half_width < d;
    let center = match (fits, policy) {
        (true, _) => center,
        (false, EdgePolicy::Clamp) => center.clamp(half_width, d - 1 - half_width),
        (false, EdgePolicy::Error) => {
            let max_hw = center.min(d - 1 - center);
            return Err(Error::Argument(format!(
                "window {center} +- {half_width} exceeds 0..{d}; valid half-widths at this bin are 0..={max_hw}"
            )));
        }
    };
    Ok(copy_window(m, center, half_width))
}

/// Which bins a noise window must avoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseExclusion {
    /// No overlap with the heartbeat window at all.
    #[default]
    HeartbeatWindow,
    /// Only the center bin itself is excluded.
    CenterBin,
}

/// Centers `d'` whose noise window fits in the matrix and respects the
/// exclusion rule, in ascending order.
pub fn admissible_noise_bins(
    n_bins: usize,
    center: usize,
    half_width: usize,
    exclusion: NoiseExclusion,
) -> Vec<usize> {
    let gap = match exclusion {
        NoiseExclusion::HeartbeatWindow => 2 * half_width,
        NoiseExclusion::CenterBin => half_width,
    };
    (half_width..n_bins.saturating_sub(half_width))
        .filter(|&b| b.abs_diff(center) > gap)
        .collect()
}

/// Noise window at a uniformly drawn admissible bin `d'`.
pub fn random_noise_window<R: Rng + ?Sized>(
    m: &RangeMatrix,
    center: usize,
    half_width: usize,
    exclusion: NoiseExclusion,
    rng: &mut R,
) -> Result<WindowedMatrix> {
    let bins = admissible_noise_bins(m.n_bins(), center, half_width, exclusion);
    if m.n_bins() <= 2 * half_width + 1 || bins.is_empty() {
        return Err(Error::config(
            "delta_d",
            format!(
                "no admissible noise bin for center {center} +- {half_width} in {} bins",
                m.n_bins()
            ),
        ));
    }
    let pick = bins[rng.random_range(0..bins.len())];
    Ok(copy_window(m, pick, half_width))
}
