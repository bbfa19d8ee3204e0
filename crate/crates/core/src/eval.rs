//! Windowed heart-rate evaluation, reports and plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dsp::{cardiac_bandpass, hr_from_signal, traditional_heartbeat, TimeSeries, HR_WINDOW_S};
use crate::error::{Error, Result};
use crate::io::Recording;
use crate::model::{forward, ExtractorParams};
use crate::nct::{load_pretrained, prepare_recordings};
use crate::rangeproc::{heartbeat_window, select_center_bin, EdgePolicy};

pub const REFERENCE_NOTE: &str = "reference: simulator ground-truth mean heart rate per 10 s window";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub window_s: f64,
    pub pred_bpm: Vec<f64>,
    pub ref_bpm: Vec<f64>,
    pub mae_bpm: f64,
    pub rmse_bpm: f64,
    /// NaN when fewer than two windows or a constant series.
    pub pearson_r: f64,
    pub pearson_defined: bool,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

impl EvalReport {
    /// Metrics over paired per-window heart rates.
    pub fn from_bpm(pred_bpm: Vec<f64>, ref_bpm: Vec<f64>, window_s: f64) -> Result<Self> {
        if pred_bpm.len() != ref_bpm.len() || pred_bpm.is_empty() {
            return Err(Error::Argument(format!(
                "need equal non-empty window lists, got {} predictions and {} references",
                pred_bpm.len(),
                ref_bpm.len()
            )));
        }
        let n = pred_bpm.len() as f64;
        let mae = pred_bpm
            .iter()
            .zip(&ref_bpm)
            .map(|(p, r)| (p - r).abs())
            .sum::<f64>()
            / n;
        let mse = pred_bpm
            .iter()
            .zip(&ref_bpm)
            .map(|(p, r)| (p - r).powi(2))
            .sum::<f64>()
            / n;
        let r = pearson(&pred_bpm, &ref_bpm);
        Ok(Self {
            window_s,
            mae_bpm: mae,
            rmse_bpm: mse.sqrt().max(mae),
            pearson_r: r.unwrap_or(f64::NAN),
            pearson_defined: r.is_some(),
            pred_bpm,
            ref_bpm,
        })
    }

    /// Pools the windows of several reports.
    pub fn pooled(reports: &[&EvalReport]) -> Result<Self> {
        let window_s = reports.first().map_or(HR_WINDOW_S, |r| r.window_s);
        let pred = reports.iter().flat_map(|r| r.pred_bpm.iter().copied()).collect();
        let reference = reports.iter().flat_map(|r| r.ref_bpm.iter().copied()).collect();
        Self::from_bpm(pred, reference, window_s)
    }
}

/// Heart rate of each full `window_s` window of `pred` against the
/// reference windows. Extra windows on either side are ignored.
pub fn evaluate(pred: &TimeSeries, ref_bpm: &[f64], window_s: f64) -> Result<EvalReport> {
    let windows = pred.windows(window_s);
    if windows.is_empty() {
        return Err(Error::Argument(format!(
            "prediction of {:.2} s is shorter than one {window_s} s window",
            pred.duration_s()
        )));
    }
    let n = windows.len().min(ref_bpm.len());
    let pred_bpm = windows[..n]
        .iter()
        .map(hr_from_signal)
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_bpm(pred_bpm, ref_bpm[..n].to_vec(), window_s)
}

/// Traditional signal at the strongest bin.
pub fn predict_traditional(rec: &Recording) -> Result<TimeSeries> {
    let center = select_center_bin(&rec.matrix, None)?;
    traditional_heartbeat(&rec.matrix, center)
}

/// Heartbeat extractor output on the window around `center`.
pub fn predict_extractor(
    gh: &ExtractorParams,
    rec: &Recording,
    center: usize,
    delta_d: usize,
) -> Result<TimeSeries> {
    let window = heartbeat_window(&rec.matrix, center, delta_d, EdgePolicy::Error)?;
    forward(gh, &window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingEval {
    pub name: String,
    pub snr_db: f64,
    pub report: EvalReport,
}

fn eval_one(rec: &Recording, pred: &TimeSeries) -> Result<RecordingEval> {
    Ok(RecordingEval {
        name: rec.name.clone(),
        snr_db: rec.entry.snr_db,
        report: evaluate(pred, &rec.truth.window_hr(HR_WINDOW_S), HR_WINDOW_S)?,
    })
}

pub fn evaluate_traditional(recs: &[Recording]) -> Result<Vec<RecordingEval>> {
    recs.iter()
        .map(|r| eval_one(r, &predict_traditional(r)?))
        .collect()
}

pub fn evaluate_extractor(gh: &ExtractorParams, recs: &[Recording]) -> Result<Vec<RecordingEval>> {
    let delta_d = delta_d_of(gh)?;
    let prepared = prepare_recordings(recs, delta_d)?;
    prepared
        .iter()
        .map(|p| {
            eval_one(
                p.recording,
                &predict_extractor(gh, p.recording, p.center, delta_d)?,
            )
        })
        .collect()
}

/// Window half-width implied by an extractor's input channel count.
pub fn delta_d_of(gh: &ExtractorParams) -> Result<usize> {
    let c = gh.input_channels();
    if c < 2 || c % 4 != 2 {
        return Err(Error::Argument(format!(
            "extractor with {c} input channels does not match any window width"
        )));
    }
    Ok((c / 2 - 1) / 2)
}

pub fn aggregate(evals: &[RecordingEval]) -> Result<EvalReport> {
    EvalReport::pooled(&evals.iter().map(|e| &e.report).collect::<Vec<_>>())
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}

/// Report CSV: per-window rows, per-recording rows and one aggregate row.
pub fn format_report_csv(evals: &[RecordingEval]) -> Result<String> {
    let mut out = format!(
        "# {REFERENCE_NOTE}\nkind,recording,snr_db,window,pred_bpm,ref_bpm,mae_bpm,rmse_bpm,pearson_r\n"
    );
    for e in evals {
        for (i, (p, r)) in e.report.pred_bpm.iter().zip(&e.report.ref_bpm).enumerate() {
            let _ = writeln!(
                out,
                "window,{},{},{i},{},{},,,",
                e.name,
                num(e.snr_db),
                num(*p),
                num(*r)
            );
        }
    }
    for e in evals {
        let r = &e.report;
        let _ = writeln!(
            out,
            "recording,{},{},,,,{},{},{}",
            e.name,
            num(e.snr_db),
            num(r.mae_bpm),
            num(r.rmse_bpm),
            num(r.pearson_r)
        );
    }
    let all = aggregate(evals)?;
    let _ = writeln!(
        out,
        "aggregate,ALL,,,,,{},{},{}",
        num(all.mae_bpm),
        num(all.rmse_bpm),
        num(all.pearson_r)
    );
    Ok(out)
}

pub fn write_report_csv(path: &Path, evals: &[RecordingEval]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, format_report_csv(evals)?).map_err(|e| Error::io(path, e))
}

/// One per-window row read back from a report.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub recording: String,
    pub window: usize,
    pub pred_bpm: f64,
    pub ref_bpm: f64,
}

pub fn parse_report_csv(text: &str, path: &Path) -> Result<Vec<WindowRow>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with("kind,") {
                continue;
            }
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if cols.len() != 9 {
            return Err(bad(format!("expected 9 columns, found {}", cols.len())));
        }
        if cols[0] != "window" {
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
        rows.push(WindowRow {
            recording: cols[1].to_string(),
            window: cols[3]
                .parse()
                .map_err(|_| bad(format!("bad window index {:?}", cols[3])))?,
            pred_bpm: parse(cols[4])?,
            ref_bpm: parse(cols[5])?,
        });
    }
    if !header_seen {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: "empty report".into(),
        });
    }
    Ok(rows)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<WindowRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report_csv(&text, path)
}

/// Side file holding waveform excerpts next to a report.
pub fn waveform_path(report: &Path) -> PathBuf {
    report.with_extension("waveforms.csv")
}

/// First-window waveforms of one recording, each scaled to unit RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveforms {
    pub recording: String,
    pub rate_hz: f64,
    pub predicted: Vec<f64>,
    pub traditional: Vec<f64>,
    pub truth: Vec<f64>,
}

fn unit_rms(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let rms = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt();
    let s = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    x.iter().map(|v| (v - mean) * s).collect()
}

impl Waveforms {
    pub fn excerpt(rec: &Recording, predicted: &TimeSeries) -> Result<Self> {
        let rate = predicted.rate_hz;
        let n = crate::dsp::samples_for(HR_WINDOW_S, rate).min(predicted.len());
        let traditional = predict_traditional(rec)?;
        let truth = cardiac_bandpass(&rec.truth.displacement_m)?;
        Ok(Self {
            recording: rec.name.clone(),
            rate_hz: rate,
            predicted: unit_rms(&cardiac_bandpass(predicted)?.samples[..n]),
            traditional: unit_rms(&traditional.samples[..n]),
            truth: unit_rms(&truth.samples[..n]),
        })
    }
}

pub fn write_waveforms_csv(path: &Path, waves: &[Waveforms]) -> Result<()> {
    let mut out = String::from("recording,t_s,predicted,traditional,truth\n");
    for w in waves {
        for i in 0..w.predicted.len() {
            let _ = writeln!(
                out,
                "{},{:.5},{:.5},{:.5},{:.5}",
                w.recording,
                i as f64 / w.rate_hz,
                w.predicted[i],
                w.traditional[i],
                w.truth[i]
            );
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_waveforms_csv(path: &Path) -> Result<Vec<Waveforms>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Waveforms> = Vec::new();
    let mut last_t = 0.0;
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: "expected recording,t_s,predicted,traditional,truth".into(),
        };
        if cols.len() != 5 {
            return Err(bad());
        }
        let v: Vec<f64> = cols[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if out.last().is_none_or(|w| w.recording != cols[0]) {
            out.push(Waveforms {
                recording: cols[0].to_string(),
                rate_hz: 0.0,
                predicted: Vec::new(),
                traditional: Vec::new(),
                truth: Vec::new(),
            });
        }
        let w = out.last_mut().unwrap();
        if w.predicted.len() == 1 && v[0] > last_t {
            w.rate_hz = 1.0 / (v[0] - last_t);
        }
        last_t = v[0];
        w.predicted.push(v[1]);
        w.traditional.push(v[2]);
        w.truth.push(v[3]);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[allow(clippy::too_many_arguments)]
fn polyline(out: &mut String, ys: &[f64], x0: f64, y0: f64, w: f64, h: f64, lim: f64, color: &str) {
    if ys.len() < 2 {
        return;
    }
    let pts: Vec<String> = ys
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let px = x0 + w * i as f64 / (ys.len() - 1) as f64;
            let py = y0 + h / 2.0 - (y.clamp(-lim, lim) / lim) * h / 2.0;
            format!("{px:.1},{py:.1}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
        pts.join(" ")
    );
}

/// HR scatter (predicted vs reference) plus waveform overlays for up to
/// three recordings.
pub fn render_svg(rows: &[WindowRow], waves: &[Waveforms]) -> String {
    let panels = waves.len().min(3);
    let width = 720.0;
    let height = 380.0 + 170.0 * panels as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let (x0, y0, side) = (70.0, 30.0, 300.0);
    let (lo, hi) = rows
        .iter()
        .flat_map(|r| [r.pred_bpm, r.ref_bpm])
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = if lo.is_finite() && hi > lo {
        ((lo - 5.0).floor(), (hi + 5.0).ceil())
    } else {
        (40.0, 190.0)
    };
    let map = |v: f64| (v - lo) / (hi - lo) * side;
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="20">Predicted vs reference heart rate (bpm)</text>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{side}" height="{side}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{x0}" y1="{}" x2="{}" y2="{y0}" stroke="#999" stroke-dasharray="4 3"/>"##,
        y0 + side,
        x0 + side
    );
    for t in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{t:.0}</text>"#,
            x0 + map(t),
            y0 + side + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{t:.0}</text>"#,
            x0 - 5.0,
            y0 + side - map(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">reference</text>"#,
        x0 + side / 2.0,
        y0 + side + 32.0
    );
    for r in rows
        .iter()
        .filter(|r| r.pred_bpm.is_finite() && r.ref_bpm.is_finite())
    {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#1f77b4" fill-opacity="0.7"/>"##,
            x0 + map(r.ref_bpm),
            y0 + side - map(r.pred_bpm)
        );
    }

    let legend = [
        ("#1f77b4", "predicted"),
        ("#ff7f0e", "traditional"),
        ("#2ca02c", "ground truth"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = y0 + 20.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="420" y1="{y}" x2="450" y2="{y}" stroke="{color}" stroke-width="2"/>"#
        );
        let _ = writeln!(s, r#"<text x="458" y="{}">{label}</text>"#, y + 4.0);
    }

    for (i, w) in waves.iter().take(panels).enumerate() {
        let top = 380.0 + 170.0 * i as f64;
        let (px, pw, ph) = (70.0, 620.0, 130.0);
        let _ = writeln!(
            s,
            r#"<text x="{px}" y="{}">{} (first 10 s, unit RMS)</text>"#,
            top + 12.0,
            escape(&w.recording)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{px}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##,
            top + 20.0
        );
        polyline(&mut s, &w.truth, px, top + 20.0, pw, ph, 3.0, "#2ca02c");
        polyline(&mut s, &w.traditional, px, top + 20.0, pw, ph, 3.0, "#ff7f0e");
        polyline(&mut s, &w.predicted, px, top + 20.0, pw, ph, 3.0, "#1f77b4");
    }
    s.push_str("</svg>\n");
    s
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

/// Evaluates each named checkpoint directory on `recs`. Directories that
/// cannot be loaded are skipped with a warning.
pub fn ablation_suite(recs: &[Recording], configs: &[(String, PathBuf)]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, dir) in configs {
        let ckpt = match load_pretrained(dir) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("ablation row {name} skipped: {e}");
                continue;
            }
        };
        let evals = evaluate_extractor(&ckpt.gh, recs)?;
        rows.push(AblationRow {
            name: name.clone(),
            report: aggregate(&evals)?,
        });
    }
    Ok(rows)
}

pub fn format_ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("# {REFERENCE_NOTE}\nconfiguration,mae_bpm,rmse_bpm,pearson_r\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.name,
            num(r.report.mae_bpm),
            num(r.report.rmse_bpm),
            num(r.report.pearson_r)
        );
    }
    out
}
