//! Little-endian binary containers and the corpus manifest.
//!
//! ```text
//! RAPM  "RAPM" u32 version=1, u64 n_chirps, u64 n_bins, f64 chirp_rate_hz,
//!       f64 range_res_m, then n_chirps*n_bins (f32 re, f32 im), chirp-major
//! RAGT  "RAGT" u32 version=1, u64 n, f32[n] displacement_m, f32[n] hr_bpm,
//!       f64 mean_hr_bpm
//! RAPW  "RAPW" u32 version=1, u32 layer_count, per layer
//!       (u32 in, u32 out, u32 kernel, u32 activation), then every layer's
//!       f64 weights (out*in*kernel) followed by its f64 biases (out)
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::dsp::TimeSeries;
use crate::error::{Error, Result};
use crate::model::{Activation, ExtractorParams, LayerShape};
use crate::rangeproc::RangeMatrix;
use crate::sim::GroundTruth;

pub const RAPM_MAGIC: &[u8; 4] = b"RAPM";
pub const RAGT_MAGIC: &[u8; 4] = b"RAGT";
pub const RAPW_MAGIC: &[u8; 4] = b"RAPW";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.txt";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(
                self.buf.len(),
                format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        if self.buf.len() < 4 {
            return Err(self.err(0, "missing magic"));
        }
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(self.err(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        let at = self.pos;
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(self.err(at, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| self.err(self.pos, format!("{what} length overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.err(self.pos, format!("{what} length overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(self.pos, format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_rapm(m: &RangeMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * m.data().len());
    out.extend_from_slice(RAPM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n_chirps() as u64).to_le_bytes());
    out.extend_from_slice(&(m.n_bins() as u64).to_le_bytes());
    out.extend_from_slice(&m.chirp_rate_hz().to_le_bytes());
    out.extend_from_slice(&m.range_res_m().to_le_bytes());
    for z in m.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_rapm(bytes: &[u8], path: &Path) -> Result<RangeMatrix> {
    let mut r = Reader::new(bytes, path);
    r.magic(RAPM_MAGIC)?;
    let n = r.u64("n_chirps")? as usize;
    let d = r.u64("n_bins")? as usize;
    let rate = r.f64("chirp_rate_hz")?;
    let res = r.f64("range_res_m")?;
    let count = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(2))
        .ok_or_else(|| r.err(12, "matrix dimensions overflow"))?;
    let header_end = r.pos;
    let payload = r.f32s(count, "payload")?;
    r.finish()?;
    let data = payload
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
        .collect();
    RangeMatrix::new(data, n, d, rate, res).map_err(|e| r.err(header_end, e.to_string()))
}

pub fn write_rapm(path: &Path, m: &RangeMatrix) -> Result<()> {
    write_file(path, &encode_rapm(m))
}

pub fn read_rapm(path: &Path) -> Result<RangeMatrix> {
    decode_rapm(&read_file(path)?, path)
}

/// Ground truth as stored on disk (single precision arrays).
#[derive(Debug, Clone, PartialEq)]
pub struct RagtRecord {
    pub displacement_m: Vec<f32>,
    pub hr_bpm: Vec<f32>,
    pub mean_hr_bpm: f64,
}

impl RagtRecord {
    pub fn into_ground_truth(self, rate_hz: f64) -> Result<GroundTruth> {
        Ok(GroundTruth {
            displacement_m: TimeSeries::new(
                self.displacement_m.iter().map(|&v| v as f64).collect(),
                rate_hz,
            )?,
            hr_bpm_trace: TimeSeries::new(self.hr_bpm.iter().map(|&v| v as f64).collect(), rate_hz)?,
            mean_hr_bpm: self.mean_hr_bpm,
        })
    }
}

pub fn encode_ragt(gt: &GroundTruth) -> Vec<u8> {
    let n = gt.displacement_m.len();
    let mut out = Vec::with_capacity(24 + 8 * n);
    out.extend_from_slice(RAGT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in &gt.displacement_m.samples {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for v in gt.hr_bpm_trace.samples.iter().take(n) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&gt.mean_hr_bpm.to_le_bytes());
    out
}

pub fn decode_ragt(bytes: &[u8], path: &Path) -> Result<RagtRecord> {
    let mut r = Reader::new(bytes, path);
    r.magic(RAGT_MAGIC)?;
    let n = r.u64("n")? as usize;
    let displacement_m = r.f32s(n, "displacement")?;
    let hr_bpm = r.f32s(n, "hr_bpm")?;
    let mean_hr_bpm = r.f64("mean_hr")?;
    r.finish()?;
    Ok(RagtRecord {
        displacement_m,
        hr_bpm,
        mean_hr_bpm,
    })
}

pub fn write_ragt(path: &Path, gt: &GroundTruth) -> Result<()> {
    if gt.hr_bpm_trace.len() != gt.displacement_m.len() {
        return Err(Error::Argument(format!(
            "ground truth arrays differ in length: {} vs {}",
            gt.displacement_m.len(),
            gt.hr_bpm_trace.len()
        )));
    }
    write_file(path, &encode_ragt(gt))
}

pub fn read_ragt(path: &Path) -> Result<RagtRecord> {
    decode_ragt(&read_file(path)?, path)
}

pub fn encode_rapw(params: &ExtractorParams) -> Vec<u8> {
    let layers = params.layers();
    let mut out = Vec::with_capacity(12 + 16 * layers.len() + 8 * params.values().len());
    out.extend_from_slice(RAPW_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        for v in [l.in_ch, l.out_ch, l.kernel] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&l.activation.code().to_le_bytes());
    }
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_rapw(bytes: &[u8], path: &Path) -> Result<ExtractorParams> {
    let mut r = Reader::new(bytes, path);
    r.magic(RAPW_MAGIC)?;
    let count = r.u32("layer count")? as usize;
    if count == 0 || count > 1024 {
        return Err(r.err(8, format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let at = r.pos;
        let in_ch = r.u32("layer shape")? as usize;
        let out_ch = r.u32("layer shape")? as usize;
        let kernel = r.u32("layer shape")? as usize;
        let code = r.u32("layer shape")?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| r.err(at + 12, format!("layer {i}: unknown activation code {code}")))?;
        layers.push(LayerShape {
            in_ch,
            out_ch,
            kernel,
            activation,
        });
    }
    let shapes_end = r.pos;
    let total = ExtractorParams::value_count(&layers)
        .ok_or_else(|| r.err(shapes_end, "layer shapes are inconsistent"))?;
    let values = r.f64s(total, "weights")?;
    r.finish()?;
    ExtractorParams::from_parts(layers, values).map_err(|e| r.err(shapes_end, e.to_string()))
}

pub fn write_rapw(path: &Path, params: &ExtractorParams) -> Result<()> {
    write_file(path, &encode_rapw(params))
}

pub fn read_rapw(path: &Path) -> Result<ExtractorParams> {
    decode_rapw(&read_file(path)?, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train|val|test)")),
        }
    }
}

/// One manifest row. `path` points at the RAPM file; the RAGT file sits
/// next to it with the `.ragt` extension.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub seed: u64,
    pub mean_hr_bpm: f64,
    pub snr_db: f64,
    pub split: Split,
}

impl ManifestEntry {
    pub fn ragt_path(&self) -> PathBuf {
        self.path.with_extension("ragt")
    }
}

const MANIFEST_HEADER: &str = "# path\tseed\tmean_hr_bpm\tsnr_db\tsplit";

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.path.display(),
            e.seed,
            e.mean_hr_bpm,
            e.snr_db,
            e.split
        ));
    }
    s
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let cols: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let seed = cols[1]
            .parse()
            .map_err(|_| err(format!("bad seed '{}'", cols[1])))?;
        let mean_hr_bpm: f64 = cols[2]
            .parse()
            .map_err(|_| err(format!("bad mean_hr_bpm '{}'", cols[2])))?;
        let snr_db: f64 = cols[3]
            .parse()
            .map_err(|_| err(format!("bad snr_db '{}'", cols[3])))?;
        let split = cols[4].parse().map_err(err)?;
        entries.push(ManifestEntry {
            path: PathBuf::from(cols[0]),
            seed,
            mean_hr_bpm,
            snr_db,
            split,
        });
    }
    Ok(entries)
}

/// Non-fatal problems in a manifest, one message per issue.
pub fn validate_manifest(entries: &[ManifestEntry]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    entries
        .iter()
        .filter(|e| !seen.insert(e.path.clone()))
        .map(|e| format!("duplicate manifest path {}", e.path.display()))
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_file(path, format_manifest(entries).as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_manifest(&text, path)?;
    for w in validate_manifest(&entries) {
        log::warn!("{}: {w}", path.display());
    }
    Ok(entries)
}

/// A loaded recording: range matrix, ground truth and its manifest row.
#[derive(Debug, Clone)]
pub struct Recording {
    pub name: String,
    pub matrix: RangeMatrix,
    pub truth: GroundTruth,
    pub entry: ManifestEntry,
}

impl Recording {
    pub fn load(entry: &ManifestEntry, base_dir: &Path) -> Result<Self> {
        let rapm = base_dir.join(&entry.path);
        let matrix = read_rapm(&rapm)?;
        let truth =
            read_ragt(&base_dir.join(entry.ragt_path()))?.into_ground_truth(matrix.chirp_rate_hz())?;
        if truth.displacement_m.len() != matrix.n_chirps() {
            return Err(Error::Data(format!(
                "{}: ground truth has {} samples, matrix has {} chirps",
                rapm.display(),
                truth.displacement_m.len(),
                matrix.n_chirps()
            )));
        }
        let name = entry
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            name,
            matrix,
            truth,
            entry: entry.clone(),
        })
    }
}

/// Directory that relative manifest paths are resolved against.
pub fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Recordings that failed to load, with the reason.
pub type Skipped = Vec<(PathBuf, Error)>;

/// Loads every recording of `split` (all splits when `None`). Unreadable
/// recordings are skipped with a warning and reported in the second value.
pub fn load_split(manifest: &Path, split: Option<Split>) -> Result<(Vec<Recording>, Skipped)> {
    let entries = read_manifest(manifest)?;
    let base = manifest_dir(manifest);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for e in entries.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        match Recording::load(e, &base) {
            Ok(r) => out.push(r),
            Err(err) => {
                log::warn!("skipping {}: {err}", e.path.display());
                skipped.push((e.path.clone(), err));
            }
        }
    }
    Ok((out, skipped))
}
