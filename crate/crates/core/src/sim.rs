//! FMCW intermediate-frequency signal simulator.
//!
//! A scene is one chest reflector at `target_distance_m` whose distance is
//! modulated by a cardiac and a respiratory sinusoid, plus optional static
//! clutter reflectors and complex white Gaussian noise. Each chirp yields
//!
//! ```text
//! m_n(t) = sum_targets a * exp(j (2 pi f t + phi)),  f = 2 k d_n / c,  phi = 4 pi d_n / lambda
//! ```
//!
//! sampled on a fast-time axis centered on the chirp midpoint, so the phase
//! of a range bin equals `phi` plus a constant that does not depend on `d_n`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::TimeSeries;
use crate::error::{Error, Result};
use crate::io::{self, ManifestEntry, Split};
use crate::rangeproc::build_range_matrix;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Parametric chest-motion scene plus radar waveform parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub target_distance_m: f64,
    pub target_reflectivity: f64,
    pub chest_amp_m: f64,
    pub heart_rate_bpm: f64,
    pub heart_phase_rad: f64,
    /// Second cardiac harmonic amplitude relative to the fundamental.
    pub heart_harmonic: f64,
    pub resp_amp_m: f64,
    pub resp_rate_bpm: f64,
    pub resp_phase_rad: f64,
    /// IF-stage SNR of the chest reflector; `+inf` disables noise.
    pub snr_db: f64,
    /// Static reflectors as (distance m, amplitude).
    pub clutter: Vec<(f64, f64)>,
    pub chirp_slope_hz_per_s: f64,
    pub start_wavelength_m: f64,
    pub adc_rate_hz: f64,
    pub chirp_rate_hz: f64,
    pub n_chirps: usize,
    pub n_range_bins: usize,
    pub samples_per_chirp: usize,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    /// 77 GHz start frequency, 4 cm range resolution with 64 samples per
    /// chirp at 2 MS/s, 120 chirps/s, 30 s.
    fn default() -> Self {
        let samples_per_chirp = 64;
        let adc_rate_hz = 2.0e6;
        let range_res = 0.04;
        let bandwidth = SPEED_OF_LIGHT / (2.0 * range_res);
        let chirp_time = samples_per_chirp as f64 / adc_rate_hz;
        Self {
            target_distance_m: 0.6,
            target_reflectivity: 1.0,
            chest_amp_m: 3e-4,
            heart_rate_bpm: 72.0,
            heart_phase_rad: 0.0,
            heart_harmonic: 0.0,
            resp_amp_m: 0.0,
            resp_rate_bpm: 15.0,
            resp_phase_rad: 0.0,
            snr_db: f64::INFINITY,
            clutter: Vec::new(),
            chirp_slope_hz_per_s: bandwidth / chirp_time,
            start_wavelength_m: SPEED_OF_LIGHT / 77.0e9,
            adc_rate_hz,
            chirp_rate_hz: 120.0,
            n_chirps: 3600,
            n_range_bins: samples_per_chirp,
            samples_per_chirp,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn bandwidth_hz(&self) -> f64 {
        self.chirp_slope_hz_per_s * self.samples_per_chirp as f64 / self.adc_rate_hz
    }

    /// `c / (2 B)`.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz())
    }

    /// Largest unambiguous distance of the complex IF sampling.
    pub fn max_range_m(&self) -> f64 {
        self.range_resolution_m() * self.samples_per_chirp as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.n_chirps as f64 / self.chirp_rate_hz
    }

    /// Chest displacement relative to the rest distance at time `t`.
    pub fn chest_displacement(&self, t: f64) -> f64 {
        let wh = 2.0 * PI * self.heart_rate_bpm / 60.0;
        let wr = 2.0 * PI * self.resp_rate_bpm / 60.0;
        let heart = (wh * t + self.heart_phase_rad).sin()
            + self.heart_harmonic * (2.0 * (wh * t + self.heart_phase_rad)).sin();
        self.chest_amp_m * heart + self.resp_amp_m * (wr * t + self.resp_phase_rad).sin()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    name,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    name,
                    format!("must be non-negative and finite, got {v}"),
                ))
            }
        };
        positive("chirp_slope_hz_per_s", self.chirp_slope_hz_per_s)?;
        positive("start_wavelength_m", self.start_wavelength_m)?;
        positive("adc_rate_hz", self.adc_rate_hz)?;
        positive("chirp_rate_hz", self.chirp_rate_hz)?;
        non_negative("target_reflectivity", self.target_reflectivity)?;
        non_negative("chest_amp_m", self.chest_amp_m)?;
        non_negative("resp_amp_m", self.resp_amp_m)?;
        non_negative("resp_rate_bpm", self.resp_rate_bpm)?;
        non_negative("heart_harmonic", self.heart_harmonic)?;
        for (name, v) in [
            ("heart_phase_rad", self.heart_phase_rad),
            ("resp_phase_rad", self.resp_phase_rad),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        for (name, n) in [("n_chirps", self.n_chirps), ("n_range_bins", self.n_range_bins)] {
            if n < 1 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.samples_per_chirp < 2 {
            return Err(Error::config("samples_per_chirp", "must be at least 2"));
        }
        if !(48.0..=180.0).contains(&self.heart_rate_bpm) {
            return Err(Error::config(
                "heart_rate_bpm",
                format!("{} outside the 48-180 bpm cardiac band", self.heart_rate_bpm),
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("snr_db", format!("invalid value {}", self.snr_db)));
        }
        let res = self.range_resolution_m();
        let excursion = self.chest_amp_m * (1.0 + self.heart_harmonic);
        if excursion >= res {
            return Err(Error::config(
                "chest_amp_m",
                format!("{excursion} m is not below the range resolution {res} m"),
            ));
        }
        let max_range = self.max_range_m();
        let reach = self.chest_amp_m * (1.0 + self.heart_harmonic) + self.resp_amp_m;
        if !(self.target_distance_m - reach > 0.0 && self.target_distance_m + reach < max_range) {
            return Err(Error::config(
                "target_distance_m",
                format!(
                    "{} m must lie inside (0, {max_range}) m including chest motion",
                    self.target_distance_m
                ),
            ));
        }
        for (i, &(d, a)) in self.clutter.iter().enumerate() {
            if !(d.is_finite() && d > 0.0 && d < max_range) || !(a.is_finite() && a >= 0.0) {
                return Err(Error::config(
                    format!("clutter[{i}]"),
                    format!("({d} m, {a}) outside (0, {max_range}) m or negative amplitude"),
                ));
            }
        }
        Ok(())
    }
}

/// Raw per-chirp IF samples, chirp-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IfCube {
    data: Vec<Complex64>,
    n_chirps: usize,
    samples_per_chirp: usize,
}

impl IfCube {
    pub fn new(data: Vec<Complex64>, n_chirps: usize, samples_per_chirp: usize) -> Result<Self> {
        if data.len() != n_chirps * samples_per_chirp {
            return Err(Error::Argument(format!(
                "IF cube has {} samples, expected {n_chirps}x{samples_per_chirp}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n_chirps,
            samples_per_chirp,
        })
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn n_chirps(&self) -> usize {
        self.n_chirps
    }

    pub fn samples_per_chirp(&self) -> usize {
        self.samples_per_chirp
    }

    pub fn chirp(&self, n: usize) -> &[Complex64] {
        &self.data[n * self.samples_per_chirp..(n + 1) * self.samples_per_chirp]
    }
}

/// Simulator ground truth for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub displacement_m: TimeSeries,
    pub hr_bpm_trace: TimeSeries,
    pub mean_hr_bpm: f64,
}

impl GroundTruth {
    /// Mean reference heart rate over consecutive windows of `window_s`.
    pub fn window_hr(&self, window_s: f64) -> Vec<f64> {
        self.hr_bpm_trace
            .windows(window_s)
            .iter()
            .map(|w| w.samples.iter().sum::<f64>() / w.len() as f64)
            .collect()
    }
}

fn add_tone(chirp: &mut [Complex64], amp: f64, distance: f64, cfg: &SceneConfig) {
    let s = chirp.len();
    let beat = 2.0 * cfg.chirp_slope_hz_per_s * distance / SPEED_OF_LIGHT;
    let phase = 4.0 * PI * distance / cfg.start_wavelength_m;
    let center = (s as f64 - 1.0) / 2.0;
    for (i, z) in chirp.iter_mut().enumerate() {
        let t = (i as f64 - center) / cfg.adc_rate_hz;
        *z += Complex64::from_polar(amp, 2.0 * PI * beat * t + phase);
    }
}

/// Synthesizes the IF cube and ground truth. Deterministic in `rng_seed`.
pub fn simulate_if_signals(cfg: &SceneConfig) -> Result<(IfCube, GroundTruth)> {
    cfg.validate()?;
    let s = cfg.samples_per_chirp;
    let n = cfg.n_chirps;
    let mut data = vec![Complex64::new(0.0, 0.0); n * s];

    // static clutter is the same tone in every chirp
    let mut clutter_chirp = vec![Complex64::new(0.0, 0.0); s];
    for &(d, a) in &cfg.clutter {
        add_tone(&mut clutter_chirp, a, d, cfg);
    }

    let mut displacement = Vec::with_capacity(n);
    for (k, chirp) in data.chunks_exact_mut(s).enumerate() {
        let t = k as f64 / cfg.chirp_rate_hz;
        let x = cfg.chest_displacement(t);
        displacement.push(x);
        chirp.copy_from_slice(&clutter_chirp);
        add_tone(chirp, cfg.target_reflectivity, cfg.target_distance_m + x, cfg);
    }

    if cfg.snr_db.is_finite() {
        let signal_power = cfg.target_reflectivity * cfg.target_reflectivity;
        let noise_power = signal_power / 10f64.powf(cfg.snr_db / 10.0);
        let normal = Normal::new(0.0, (noise_power / 2.0).sqrt())
            .map_err(|e| Error::config("snr_db", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        for z in data.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *z += Complex64::new(re, im);
        }
    }

    let truth = GroundTruth {
        displacement_m: TimeSeries::new(displacement, cfg.chirp_rate_hz)?,
        hr_bpm_trace: TimeSeries::new(vec![cfg.heart_rate_bpm; n], cfg.chirp_rate_hz)?,
        mean_hr_bpm: cfg.heart_rate_bpm,
    };
    Ok((IfCube::new(data, n, s)?, truth))
}

/// Ranges from which randomized corpus scenes are drawn. Fixed radar
/// parameters come from `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlan {
    pub base: SceneConfig,
    pub hr_bpm: (f64, f64),
    pub snr_db: (f64, f64),
    pub distance_m: (f64, f64),
    pub chest_amp_m: (f64, f64),
    pub resp_amp_m: (f64, f64),
    pub resp_rate_bpm: (f64, f64),
    /// Number of static clutter reflectors per scene.
    pub clutter_count: usize,
    pub clutter_amp: (f64, f64),
    /// Fractions of scenes assigned to validation and test; the rest train.
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ScenePlan {
    fn default() -> Self {
        Self {
            base: SceneConfig::default(),
            hr_bpm: (55.0, 150.0),
            snr_db: (5.0, 15.0),
            distance_m: (0.4, 1.6),
            chest_amp_m: (1e-4, 3e-4),
            resp_amp_m: (0.0, 3e-4),
            resp_rate_bpm: (10.0, 20.0),
            clutter_count: 2,
            clutter_amp: (0.2, 1.0),
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl ScenePlan {
    /// Draws one scene; its `rng_seed` is taken from the same stream.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> SceneConfig {
        let mut cfg = self.base.clone();
        cfg.heart_rate_bpm = uniform(rng, self.hr_bpm);
        cfg.snr_db = uniform(rng, self.snr_db);
        cfg.target_distance_m = uniform(rng, self.distance_m);
        cfg.chest_amp_m = uniform(rng, self.chest_amp_m);
        cfg.resp_amp_m = uniform(rng, self.resp_amp_m);
        cfg.resp_rate_bpm = uniform(rng, self.resp_rate_bpm);
        cfg.heart_phase_rad = rng.random_range(0.0..2.0 * PI);
        cfg.resp_phase_rad = rng.random_range(0.0..2.0 * PI);
        // clutter keeps at least 8 resolution cells from the subject
        let res = cfg.range_resolution_m();
        let max_range = cfg.max_range_m();
        cfg.clutter = (0..self.clutter_count)
            .filter_map(|_| {
                let d = rng.random_range(res..max_range - res);
                let a = uniform(rng, self.clutter_amp);
                ((d - cfg.target_distance_m).abs() > 8.0 * res).then_some((d, a))
            })
            .collect();
        cfg.rng_seed = rng.random();
        cfg
    }

    /// `count` scenes with splits assigned round-robin so every split gets
    /// its share regardless of order.
    pub fn scenes(&self, count: usize) -> Vec<(SceneConfig, Split)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_val = (count as f64 * self.val_fraction).round() as usize;
        let n_test = (count as f64 * self.test_fraction).round() as usize;
        let splits = interleave_splits(count, n_val, n_test);
        splits
            .into_iter()
            .map(|split| (self.draw(&mut rng), split))
            .collect()
    }
}

/// Spreads `n_val` validation and `n_test` test labels evenly over `count`
/// slots; the remaining slots are training.
pub fn interleave_splits(count: usize, n_val: usize, n_test: usize) -> Vec<Split> {
    let mut splits = vec![Split::Train; count];
    let mut place = |n: usize, label: Split, phase: f64| {
        for k in 0..n {
            let mut i = (((k as f64 + phase) * count as f64 / n as f64) as usize).min(count - 1);
            while splits[i] != Split::Train {
                i = (i + 1) % count;
            }
            splits[i] = label;
        }
    };
    if n_test > 0 && count > 0 {
        place(n_test.min(count), Split::Test, 0.5);
    }
    if n_val > 0 && count > 0 {
        place(n_val.min(count.saturating_sub(n_test)), Split::Val, 0.25);
    }
    splits
}

/// Simulates every scene and writes `rec_XXXX.rapm` / `rec_XXXX.ragt` pairs
/// plus `manifest.txt` into `out_dir`. Returns the manifest entries.
pub fn make_corpus(scenes: &[(SceneConfig, Split)], out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, (cfg, split)) in scenes.iter().enumerate() {
        let (cube, truth) = simulate_if_signals(cfg)?;
        let matrix = build_range_matrix(&cube, cfg)?;
        let name = format!("rec_{i:04}");
        let rapm = PathBuf::from(format!("{name}.rapm"));
        io::write_rapm(&out_dir.join(&rapm), &matrix)?;
        io::write_ragt(&out_dir.join(format!("{name}.ragt")), &truth)?;
        entries.push(ManifestEntry {
            path: rapm,
            seed: cfg.rng_seed,
            mean_hr_bpm: truth.mean_hr_bpm,
            snr_db: cfg.snr_db,
            split: *split,
        });
    }
    io::write_manifest(&out_dir.join(io::MANIFEST_NAME), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{phase_at_bin, unwrap};
    use crate::rangeproc::select_center_bin;
    use rustfft::FftPlanner;

    fn short(cfg: SceneConfig, n: usize) -> SceneConfig {
        SceneConfig { n_chirps: n, ..cfg }
    }

    #[test]
    fn default_geometry() {
        let cfg = SceneConfig::default();
        assert!((cfg.range_resolution_m() - 0.04).abs() < 1e-12);
        assert!((cfg.start_wavelength_m - 3.893e-3).abs() < 1e-6);
        cfg.validate().unwrap();
    }

    #[test]
    fn static_target_is_identical_pure_tone() {
        let cfg = short(
            SceneConfig {
                chest_amp_m: 0.0,
                resp_amp_m: 0.0,
                ..Default::default()
            },
            20,
        );
        let (cube, _) = simulate_if_signals(&cfg).unwrap();
        let first = cube.chirp(0).to_vec();
        for n in 1..cube.n_chirps() {
            assert_eq!(cube.chirp(n), &first[..]);
        }
        // consecutive-sample phase advance equals 2 pi f / fs
        let f = 2.0 * cfg.chirp_slope_hz_per_s * cfg.target_distance_m / SPEED_OF_LIGHT;
        let step = 2.0 * PI * f / cfg.adc_rate_hz;
        for w in first.windows(2) {
            let d = (w[1] * w[0].conj()).arg();
            assert!((d - crate::dsp::wrap_phase(step)).abs() < 1e-9);
            assert!((w[1].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_if_frequency_maps_to_distance() {
        for d in [0.33, 0.6, 1.27, 2.01] {
            let cfg = short(
                SceneConfig {
                    target_distance_m: d,
                    chest_amp_m: 0.0,
                    ..Default::default()
                },
                1,
            );
            let (cube, _) = simulate_if_signals(&cfg).unwrap();
            let mut buf = cube.chirp(0).to_vec();
            FftPlanner::<f64>::new()
                .plan_fft_forward(buf.len())
                .process(&mut buf);
            let peak = (0..buf.len())
                .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
                .unwrap();
            let est = peak as f64 * cfg.range_resolution_m();
            assert!(
                (est - d).abs() <= cfg.range_resolution_m() / 2.0 + 1e-12,
                "d={d} est={est}"
            );
        }
    }

    #[test]
    fn phase_peak_to_peak_follows_displacement() {
        let cfg = short(
            SceneConfig {
                chest_amp_m: 3e-4,
                heart_rate_bpm: 72.0,
                ..Default::default()
            },
            1200,
        );
        let (cube, _) = simulate_if_signals(&cfg).unwrap();
        let m = build_range_matrix(&cube, &cfg).unwrap();
        let bin = select_center_bin(&m, None).unwrap();
        let phase = unwrap(&phase_at_bin(&m, bin).unwrap());
        let max = phase.samples.iter().cloned().fold(f64::MIN, f64::max);
        let min = phase.samples.iter().cloned().fold(f64::MAX, f64::min);
        let expected = 2.0 * 4.0 * PI * 3e-4 / cfg.start_wavelength_m;
        assert!(((max - min) - expected).abs() / expected < 0.01);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = short(
            SceneConfig {
                snr_db: -3.0,
                rng_seed: 99,
                clutter: vec![(1.5, 0.5)],
                ..Default::default()
            },
            50,
        );
        let a = simulate_if_signals(&cfg).unwrap();
        let b = simulate_if_signals(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_if_signals(&SceneConfig { rng_seed: 100, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn noise_power_matches_snr() {
        let base = short(
            SceneConfig {
                chest_amp_m: 0.0,
                ..Default::default()
            },
            400,
        );
        let (clean, _) = simulate_if_signals(&base).unwrap();
        let (noisy, _) = simulate_if_signals(&SceneConfig {
            snr_db: -6.0,
            rng_seed: 4,
            ..base
        })
        .unwrap();
        let noise: f64 = clean
            .data()
            .iter()
            .zip(noisy.data())
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            / clean.data().len() as f64;
        let snr = 10.0 * (1.0 / noise).log10();
        assert!((snr + 6.0).abs() < 0.1, "{snr}");
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let cases: Vec<(SceneConfig, &str)> = vec![
            (
                SceneConfig {
                    heart_rate_bpm: 30.0,
                    ..Default::default()
                },
                "heart_rate_bpm",
            ),
            (
                SceneConfig {
                    chest_amp_m: 0.05,
                    ..Default::default()
                },
                "chest_amp_m",
            ),
            (
                SceneConfig {
                    n_chirps: 0,
                    ..Default::default()
                },
                "n_chirps",
            ),
            (
                SceneConfig {
                    snr_db: f64::NAN,
                    ..Default::default()
                },
                "snr_db",
            ),
            (
                SceneConfig {
                    target_distance_m: 9.0,
                    ..Default::default()
                },
                "target_distance_m",
            ),
            (
                SceneConfig {
                    samples_per_chirp: 1,
                    ..Default::default()
                },
                "samples_per_chirp",
            ),
            (
                SceneConfig {
                    clutter: vec![(-1.0, 1.0)],
                    ..Default::default()
                },
                "clutter[0]",
            ),
        ];
        for (cfg, field) in cases {
            match simulate_if_signals(&cfg) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn splits_are_spread() {
        let s = interleave_splits(10, 2, 2);
        assert_eq!(s.iter().filter(|x| **x == Split::Test).count(), 2);
        assert_eq!(s.iter().filter(|x| **x == Split::Val).count(), 2);
        assert_eq!(s.iter().filter(|x| **x == Split::Train).count(), 6);
        assert_eq!(interleave_splits(0, 0, 0), vec![]);
    }

    #[test]
    fn plan_is_deterministic_and_valid() {
        let plan = ScenePlan::default();
        let a = plan.scenes(12);
        assert_eq!(a, plan.scenes(12));
        for (cfg, _) in &a {
            cfg.validate().unwrap();
        }
    }
}
