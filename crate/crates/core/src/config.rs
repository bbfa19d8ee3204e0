//! Line-oriented `key = value` configuration files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nct::{LossTerms, Stage, Stage2Init, TrainConfig};
use crate::sim::{ScenePlan, SPEED_OF_LIGHT};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits text into entries. `#` starts a comment; blank lines are ignored.
pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected `key = value`, found {line:?}"),
            });
        };
        let key = key.trim().to_string();
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("duplicate key {key:?} (first set on line {})", prev.line),
            });
        }
        out.push(Entry {
            key,
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))
}

struct Ctx<'a> {
    path: &'a Path,
    entry: &'a Entry,
}

impl Ctx<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.entry.line,
            reason: format!("{}: {}", self.entry.key, reason.into()),
        }
    }

    fn f64(&self) -> Result<f64> {
        let v = self.entry.value.as_str();
        match v {
            "inf" | "+inf" => Ok(f64::INFINITY),
            _ => v.parse().map_err(|_| self.fail(format!("not a number: {v:?}"))),
        }
    }

    fn positive(&self) -> Result<f64> {
        let v = self.f64()?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(format!("must be positive, got {v}")))
        }
    }

    fn usize(&self) -> Result<usize> {
        let v = self.entry.value.as_str();
        v.parse()
            .map_err(|_| self.fail(format!("not a non-negative integer: {v:?}")))
    }

    fn u64(&self) -> Result<u64> {
        let v = self.entry.value.as_str();
        v.parse()
            .map_err(|_| self.fail(format!("not a non-negative integer: {v:?}")))
    }

    fn bool(&self) -> Result<bool> {
        match self.entry.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            v => Err(self.fail(format!("not a boolean: {v:?}"))),
        }
    }

    /// `lo, hi` or a single value.
    fn range(&self) -> Result<(f64, f64)> {
        let parts: Vec<&str> = self.entry.value.split(',').map(str::trim).collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| self.fail(format!("not a number: {s:?}")))
        };
        let (lo, hi) = match parts.as_slice() {
            [a] => (parse(a)?, parse(a)?),
            [a, b] => (parse(a)?, parse(b)?),
            _ => return Err(self.fail("expected `value` or `lo, hi`")),
        };
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(self.fail(format!("invalid range {lo}, {hi}")));
        }
        Ok((lo, hi))
    }
}

/// Training configuration; unspecified keys keep their defaults.
pub fn parse_train_config(text: &str, path: &Path) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for entry in parse_entries(text, path)? {
        let c = Ctx { path, entry: &entry };
        match entry.key.as_str() {
            "epochs" => cfg.epochs = c.usize()?,
            "learning_rate" => cfg.learning_rate = c.f64()?,
            "weight_decay" => cfg.weight_decay = c.f64()?,
            "k" | "K" => cfg.k = c.usize()?,
            "delta_d" => cfg.delta_d = c.usize()?,
            "sub_len_s" => cfg.sub_len_s = c.positive()?,
            "seed" => cfg.seed = c.u64()?,
            "deterministic" => cfg.deterministic = c.bool()?,
            "stage" => {
                cfg.stage =
                    Stage::from_number(c.usize()? as u32).ok_or_else(|| c.fail("stage must be 1 or 2"))?
            }
            "loss" => {
                cfg.terms = match entry.value.as_str() {
                    "full" => LossTerms::default(),
                    "pseudo_only" => LossTerms {
                        positive: true,
                        negative: false,
                    },
                    "noise_only" => LossTerms {
                        positive: false,
                        negative: true,
                    },
                    v => return Err(c.fail(format!("expected full, pseudo_only or noise_only, got {v:?}"))),
                }
            }
            "strict_noise_exclusion" => cfg.strict_noise_exclusion = c.bool()?,
            "strict_psd" => cfg.strict_psd = c.bool()?,
            "stage2_init" => {
                cfg.stage2_init = match entry.value.as_str() {
                    "random" => Stage2Init::Random,
                    "stage1" => Stage2Init::FromStage1,
                    v => return Err(c.fail(format!("expected random or stage1, got {v:?}"))),
                }
            }
            "max_consecutive_skips" => cfg.max_consecutive_skips = c.usize()?,
            other => return Err(c.fail(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Corpus plan for `simulate`; radar keys set the shared scene parameters,
/// range keys (`lo, hi`) the per-scene draws. `range_resolution_m`, when
/// given, overrides the chirp slope.
pub fn parse_scene_plan(text: &str, path: &Path) -> Result<ScenePlan> {
    let mut plan = ScenePlan::default();
    let mut range_res = None;
    for entry in parse_entries(text, path)? {
        let c = Ctx { path, entry: &entry };
        let b = &mut plan.base;
        match entry.key.as_str() {
            "heart_rate_bpm" => plan.hr_bpm = c.range()?,
            "snr_db" => plan.snr_db = c.range()?,
            "target_distance_m" => plan.distance_m = c.range()?,
            "chest_amp_m" => plan.chest_amp_m = c.range()?,
            "resp_amp_m" => plan.resp_amp_m = c.range()?,
            "resp_rate_bpm" => plan.resp_rate_bpm = c.range()?,
            "clutter_count" => plan.clutter_count = c.usize()?,
            "clutter_reflectivity" => plan.clutter_amp = c.range()?,
            "val_fraction" => plan.val_fraction = c.f64()?,
            "test_fraction" => plan.test_fraction = c.f64()?,
            "seed" => plan.seed = c.u64()?,
            "target_reflectivity" => b.target_reflectivity = c.positive()?,
            "heart_harmonic" => b.heart_harmonic = c.f64()?,
            "chirp_slope_hz_per_s" => b.chirp_slope_hz_per_s = c.positive()?,
            "start_wavelength_m" => b.start_wavelength_m = c.positive()?,
            "adc_rate_hz" => b.adc_rate_hz = c.positive()?,
            "chirp_rate_hz" => b.chirp_rate_hz = c.positive()?,
            "n_chirps" => b.n_chirps = c.usize()?,
            "n_range_bins" => b.n_range_bins = c.usize()?,
            "samples_per_chirp" => b.samples_per_chirp = c.usize()?,
            "range_resolution_m" => range_res = Some(c.positive()?),
            other => return Err(c.fail(format!("unknown key {other:?}"))),
        }
    }
    if let Some(res) = range_res {
        let b = &mut plan.base;
        b.chirp_slope_hz_per_s =
            SPEED_OF_LIGHT / (2.0 * res) * b.adc_rate_hz / b.samples_per_chirp.max(1) as f64;
    }
    for (field, v) in [
        ("val_fraction", plan.val_fraction),
        ("test_fraction", plan.test_fraction),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config(field, format!("must lie in [0, 1], got {v}")));
        }
    }
    if plan.val_fraction + plan.test_fraction > 1.0 {
        return Err(Error::config(
            "test_fraction",
            "val_fraction + test_fraction exceeds 1",
        ));
    }
    let mut probe = plan.base.clone();
    probe.heart_rate_bpm = plan.hr_bpm.0;
    probe.chest_amp_m = plan.chest_amp_m.1;
    probe.target_distance_m = plan.distance_m.1;
    probe.snr_db = plan.snr_db.0;
    probe.validate()?;
    probe.heart_rate_bpm = plan.hr_bpm.1;
    probe.target_distance_m = plan.distance_m.0;
    probe.snr_db = plan.snr_db.1;
    probe.validate()?;
    Ok(plan)
}
