//! Touch and accelerometer traces, screen normalization, corpus ingestion
//! and fixed-length resampling.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// A fixed-length multichannel sequence, `rows[t][channel]`.
pub type Sequence = Vec<Vec<f64>>;

/// Nominal accelerometer sampling rate in Hz.
pub const ACCEL_RATE_HZ: f64 = 200.0;

/// Screen used when serializing synthetic samples back to pixel units.
pub const SYNTHETIC_SCREEN: [u32; 2] = [1080, 1920];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// A normalized swipe: coordinates are screen fractions, time in seconds
/// starting at zero and strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchTrace {
    points: Vec<TouchPoint>,
}

impl TouchTrace {
    /// Builds a trace from normalized points, re-basing time so that the first
    /// timestamp is zero.
    pub fn new(mut points: Vec<TouchPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateTrace(format!(
                "touch trace needs at least 2 points, got {}",
                points.len()
            )));
        }
        let t0 = points[0].t;
        for p in points.iter_mut() {
            p.t -= t0;
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()) {
                return Err(Error::DegenerateTrace(format!("non-finite point at {i}")));
            }
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(Error::DegenerateTrace(format!(
                    "point {i} outside the unit square: ({}, {})",
                    p.x, p.y
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::DegenerateTrace(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    /// Rebuilds a trace from a `T x 2` coordinate sequence with timestamps
    /// spread uniformly over `duration` seconds. Coordinates are clamped to
    /// the unit square.
    pub fn from_uniform(coords: &Sequence, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::NonPositiveDuration(duration));
        }
        let n = coords.len();
        if n < 2 {
            return Err(Error::DegenerateTrace("need at least 2 rows".into()));
        }
        let points = coords
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != 2 {
                    return Err(Error::ShapeMismatch(format!(
                        "touch row has {} channels, expected 2",
                        row.len()
                    )));
                }
                Ok(TouchPoint {
                    x: row[0].clamp(0.0, 1.0),
                    y: row[1].clamp(0.0, 1.0),
                    t: duration * i as f64 / (n - 1) as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[TouchPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.points[self.points.len() - 1].t - self.points[0].t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub t: f64,
}

impl AccelSample {
    pub fn axis(&self, i: usize) -> f64 {
        match i {
            0 => self.ax,
            1 => self.ay,
            2 => self.az,
            _ => panic!("accelerometer axis index {i} out of range"),
        }
    }
}

/// Accelerometer samples in m/s², time in seconds relative to the start of
/// the paired swipe (may be negative when a crop pad is used).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelTrace {
    samples: Vec<AccelSample>,
}

impl AccelTrace {
    pub fn new(samples: Vec<AccelSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if samples
            .iter()
            .any(|s| !(s.ax.is_finite() && s.ay.is_finite() && s.az.is_finite() && s.t.is_finite()))
        {
            return Err(Error::DegenerateTrace("non-finite accelerometer sample".into()));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::DegenerateTrace(format!(
                "accelerometer timestamps decrease at index {}",
                i + 1
            )));
        }
        Ok(Self { samples })
    }

    /// Builds a trace from a `T x 3` sequence spread uniformly over
    /// `[0, duration]`.
    pub fn from_uniform(rows: &Sequence, duration: f64) -> Result<Self> {
        let n = rows.len();
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.len() != 3 {
                    return Err(Error::ShapeMismatch(format!(
                        "accelerometer row has {} channels, expected 3",
                        r.len()
                    )));
                }
                let t = if n > 1 {
                    duration * i as f64 / (n - 1) as f64
                } else {
                    0.0
                };
                Ok(AccelSample {
                    ax: r[0],
                    ay: r[1],
                    az: r[2],
                    t,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn samples(&self) -> &[AccelSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Where a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Human,
    HandcraftedBot,
    GanBot,
}

impl Label {
    pub fn is_bot(self) -> bool {
        self != Label::Human
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::HandcraftedBot => "handcrafted_bot",
            Label::GanBot => "gan_bot",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub device_id: String,
    pub session_id: String,
    pub screen_w_px: u32,
    pub screen_h_px: u32,
}

impl SampleMeta {
    pub fn synthetic(session_id: String) -> Self {
        Self {
            device_id: "synthetic".into(),
            session_id,
            screen_w_px: SYNTHETIC_SCREEN[0],
            screen_h_px: SYNTHETIC_SCREEN[1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwipeSample {
    pub touch: TouchTrace,
    pub accel: AccelTrace,
    pub label: Label,
    pub meta: SampleMeta,
}

impl SwipeSample {
    /// Converts back to the on-disk record, expressing coordinates in the
    /// sample's screen pixels and time in milliseconds.
    pub fn to_record(&self) -> CanonicalRecord {
        let w = f64::from(self.meta.screen_w_px);
        let h = f64::from(self.meta.screen_h_px);
        CanonicalRecord {
            label: self.label,
            session: self.meta.session_id.clone(),
            device: self.meta.device_id.clone(),
            screen: [self.meta.screen_w_px, self.meta.screen_h_px],
            touch: self
                .touch
                .points()
                .iter()
                .map(|p| [p.x * w, p.y * h, p.t * 1000.0])
                .collect(),
            accel: self
                .accel
                .samples()
                .iter()
                .map(|s| [s.ax, s.ay, s.az, s.t * 1000.0])
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub samples: Vec<SwipeSample>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(samples: Vec<SwipeSample>, provenance: impl Into<String>) -> Self {
        Self {
            samples,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyCorpus(self.provenance.clone()))
        } else {
            Ok(())
        }
    }

    /// Writes the corpus as canonical JSON lines.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for s in &self.samples {
            serde_json::to_writer(&mut w, &s.to_record())?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One line of the canonical corpus format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub label: Label,
    pub session: String,
    pub device: String,
    pub screen: [u32; 2],
    pub touch: Vec<[f64; 3]>,
    pub accel: Vec<[f64; 4]>,
}

impl CanonicalRecord {
    pub fn into_sample(self, accel_pad_s: f64) -> Result<SwipeSample> {
        let [w, h] = self.screen;
        let touch = normalize_touch(&self.touch, w, h)?;
        let t0_ms = self.touch[0][2];
        let t_end_ms = self.touch[self.touch.len() - 1][2];
        let accel = crop_accel(&self.accel, t0_ms, t_end_ms, accel_pad_s)?;
        Ok(SwipeSample {
            touch,
            accel,
            label: self.label,
            meta: SampleMeta {
                device_id: self.device,
                session_id: self.session,
                screen_w_px: w,
                screen_h_px: h,
            },
        })
    }
}

/// Normalizes raw `(x_px, y_px, t_ms)` points by the screen size, clamping
/// to the unit square and converting time to seconds from the first point.
pub fn normalize_touch(raw: &[[f64; 3]], screen_w_px: u32, screen_h_px: u32) -> Result<TouchTrace> {
    if screen_w_px == 0 || screen_h_px == 0 {
        return Err(Error::ZeroScreen);
    }
    if raw.len() < 2 {
        return Err(Error::DegenerateTrace(format!(
            "touch trace needs at least 2 points, got {}",
            raw.len()
        )));
    }
    let (w, h) = (f64::from(screen_w_px), f64::from(screen_h_px));
    let t0 = raw[0][2];
    let points = raw
        .iter()
        .map(|&[x, y, t]| TouchPoint {
            x: (x / w).clamp(0.0, 1.0),
            y: (y / h).clamp(0.0, 1.0),
            t: (t - t0) / 1000.0,
        })
        .collect();
    TouchTrace::new(points)
}

/// Keeps accelerometer samples inside `[t0 - pad, t_end + pad]` and re-bases
/// their time to seconds from the swipe start.
pub fn crop_accel(raw: &[[f64; 4]], t0_ms: f64, t_end_ms: f64, pad_s: f64) -> Result<AccelTrace> {
    let pad_ms = pad_s * 1000.0;
    let lo = t0_ms - pad_ms;
    let hi = t_end_ms + pad_ms;
    let samples: Vec<AccelSample> = raw
        .iter()
        .filter(|s| s[3] >= lo && s[3] <= hi)
        .map(|&[ax, ay, az, t]| AccelSample {
            ax,
            ay,
            az,
            t: (t - t0_ms) / 1000.0,
        })
        .collect();
    if samples.is_empty() {
        return Err(if raw.is_empty() {
            Error::EmptyTrace
        } else {
            Error::DegenerateTrace("no accelerometer samples inside the swipe window".into())
        });
    }
    AccelTrace::new(samples)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    #[default]
    Canonical,
    HumidbAdapter,
}

#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    /// Extra seconds of accelerometer data kept around the swipe window.
    pub accel_pad_s: f64,
    pub exec: Exec,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            accel_pad_s: 0.0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestWarning {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.message)
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub warnings: Vec<IngestWarning>,
}

/// Reads every parseable sample under `root` (a file or a directory).
/// Unparseable records become warnings; only an empty result is fatal.
pub fn ingest_corpus(root: &Path, format: IngestFormat, opts: IngestOptions) -> Result<Ingested> {
    if !root.exists() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let units = match format {
        IngestFormat::Canonical => collect_files(root, |p| {
            p.extension().is_some_and(|e| e == "jsonl" || e == "json")
        }),
        IngestFormat::HumidbAdapter => humidb::session_dirs(root),
    };
    let per_unit = opts.exec.map(&units, |unit| match format {
        IngestFormat::Canonical => read_canonical_file(unit, opts.accel_pad_s),
        IngestFormat::HumidbAdapter => humidb::read_session(unit, opts.accel_pad_s),
    });

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (s, w) in per_unit {
        samples.extend(s);
        warnings.extend(w);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let corpus = Corpus::new(samples, root.display().to_string());
    corpus.ensure_non_empty()?;
    Ok(Ingested { corpus, warnings })
}

fn collect_files(root: &Path, keep: impl Fn(&Path) -> bool) -> Vec<PathBuf> {
    if root.is_file() {
        return vec![root.to_path_buf()];
    }
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && keep(e.path()))
        .map(|e| e.into_path())
        .collect()
}

fn read_canonical_file(path: &Path, pad: f64) -> (Vec<SwipeSample>, Vec<IngestWarning>) {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let warn = |line: usize, message: String| IngestWarning {
        file: path.to_path_buf(),
        line,
        message,
    };
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            warnings.push(warn(0, e.to_string()));
            return (samples, warnings);
        }
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                warnings.push(warn(lineno, e.to_string()));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CanonicalRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.into_sample(pad).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) => samples.push(s),
            Err(message) => warnings.push(warn(
                lineno,
                Error::SchemaViolation {
                    file: path.display().to_string(),
                    line: lineno,
                    message,
                }
                .to_string(),
            )),
        }
    }
    (samples, warnings)
}

/// Adapter for HuMIdb-style session exports.
///
/// A session is any directory that holds a touch file (name containing
/// `touch`, `swipe` or `drag`; `.csv` or `.txt`) and an accelerometer file
/// (name containing `acc`, excluding linear acceleration). Both are
/// delimited tables with a header row; columns are looked up by name
/// (`timestamp`/`time`/`t`, `x`, `y`, `z`). Screen size comes from a
/// `device.json` (`{"device": "...", "screen": [w, h]}`) in the session
/// directory or one of its parents.
pub mod humidb {
    use super::*;

    const TIME_NAMES: [&str; 5] = ["timestamp", "time", "t", "ts", "millis"];

    pub(super) fn session_dirs(root: &Path) -> Vec<PathBuf> {
        let mut dirs: Vec<PathBuf> = walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_dir())
            .filter(|e| find_file(e.path(), is_touch_name).is_some())
            .map(|e| e.into_path())
            .collect();
        dirs.dedup();
        dirs
    }

    fn is_touch_name(name: &str) -> bool {
        ["touch", "swipe", "drag"].iter().any(|k| name.contains(k))
    }

    fn is_accel_name(name: &str) -> bool {
        name.contains("acc") && !name.contains("linear") && !name.contains("lacc")
    }

    fn find_file(dir: &Path, pred: fn(&str) -> bool) -> Option<PathBuf> {
        let mut hits: Vec<PathBuf> = fs::read_dir(dir)
            .ok()?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .filter(|p| {
                let name = p
                    .file_name()
                    .map(|n| n.to_string_lossy().to_lowercase())
                    .unwrap_or_default();
                (name.ends_with(".csv") || name.ends_with(".txt")) && pred(&name)
            })
            .collect();
        hits.sort();
        hits.into_iter().next()
    }

    #[derive(Deserialize)]
    struct DeviceInfo {
        #[serde(default)]
        device: Option<String>,
        screen: [u32; 2],
    }

    fn device_info(dir: &Path) -> Option<DeviceInfo> {
        dir.ancestors()
            .take(3)
            .map(|d| d.join("device.json"))
            .find(|p| p.is_file())
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|s| serde_json::from_str(&s).ok())
    }

    fn sniff_delimiter(path: &Path) -> u8 {
        let header = fs::File::open(path)
            .ok()
            .and_then(|f| BufReader::new(f).lines().next())
            .and_then(|l| l.ok())
            .unwrap_or_default();
        [b',', b';', b'\t']
            .into_iter()
            .max_by_key(|d| header.bytes().filter(|b| b == d).count())
            .unwrap_or(b',')
    }

    /// Reads selected columns as floats. Returns `(rows, first bad line)`.
    fn read_columns(path: &Path, wanted: &[&[&str]]) -> std::result::Result<Vec<Vec<f64>>, (usize, String)> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(sniff_delimiter(path))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| (0, e.to_string()))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| (1, e.to_string()))?
            .iter()
            .map(|h| h.to_lowercase())
            .collect();
        let idx: Vec<usize> = wanted
            .iter()
            .map(|aliases| {
                headers
                    .iter()
                    .position(|h| aliases.contains(&h.as_str()))
                    .ok_or_else(|| (1, format!("missing column {:?}", aliases[0])))
            })
            .collect::<std::result::Result<_, _>>()?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| (line, e.to_string()))?;
            let row = idx
                .iter()
                .map(|&c| {
                    rec.get(c)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| (line, format!("column {c} is not numeric")))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Maps one session directory to a canonical record.
    pub fn session_record(dir: &Path) -> std::result::Result<CanonicalRecord, IngestWarning> {
        let warn = |file: &Path, line: usize, message: String| IngestWarning {
            file: file.to_path_buf(),
            line,
            message,
        };
        let touch_path = find_file(dir, is_touch_name)
            .ok_or_else(|| warn(dir, 0, "no touch file".into()))?;
        let accel_path = find_file(dir, is_accel_name)
            .ok_or_else(|| warn(dir, 0, "no accelerometer file".into()))?;
        let info = device_info(dir)
            .ok_or_else(|| warn(dir, 0, "no device.json with screen size".into()))?;
        let touch = read_columns(&touch_path, &[&TIME_NAMES, &["x"], &["y"]])
            .map_err(|(l, m)| warn(&touch_path, l, m))?;
        let accel = read_columns(&accel_path, &[&TIME_NAMES, &["x"], &["y"], &["z"]])
            .map_err(|(l, m)| warn(&accel_path, l, m))?;
        let name = |p: Option<&Path>| {
            p.and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        Ok(CanonicalRecord {
            label: Label::Human,
            session: name(Some(dir)),
            device: info.device.unwrap_or_else(|| name(dir.parent())),
            screen: info.screen,
            touch: touch.iter().map(|r| [r[1], r[2], r[0]]).collect(),
            accel: accel.iter().map(|r| [r[1], r[2], r[3], r[0]]).collect(),
        })
    }

    pub(super) fn read_session(dir: &Path, pad: f64) -> (Vec<SwipeSample>, Vec<IngestWarning>) {
        match session_record(dir) {
            Ok(rec) => match rec.into_sample(pad) {
                Ok(s) => (vec![s], vec![]),
                Err(e) => (
                    vec![],
                    vec![IngestWarning {
                        file: dir.to_path_buf(),
                        line: 0,
                        message: e.to_string(),
                    }],
                ),
            },
            Err(w) => (vec![], vec![w]),
        }
    }
}

/// Traces that can be linearly resampled onto a uniform time grid.
pub trait Resample {
    fn times(&self) -> Vec<f64>;
    fn rows(&self) -> Sequence;

    fn resample_to_length(&self, len: usize) -> Result<Sequence> {
        resample_rows(&self.times(), &self.rows(), len)
    }
}

impl Resample for TouchTrace {
    fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    fn rows(&self) -> Sequence {
        self.points.iter().map(|p| vec![p.x, p.y]).collect()
    }
}

impl Resample for AccelTrace {
    fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    fn rows(&self) -> Sequence {
        self.samples.iter().map(|s| vec![s.ax, s.ay, s.az]).collect()
    }
}

pub fn resample_to_length<R: Resample + ?Sized>(trace: &R, len: usize) -> Result<Sequence> {
    trace.resample_to_length(len)
}

/// Linear interpolation of every channel at `len` uniformly spaced times over
/// `[times[0], times[last]]`. Endpoints are copied exactly.
pub fn resample_rows(times: &[f64], rows: &[Vec<f64>], len: usize) -> Result<Sequence> {
    if len < 2 {
        return Err(Error::DegenerateTrace(format!(
            "resample length must be at least 2, got {len}"
        )));
    }
    if rows.is_empty() || times.len() != rows.len() {
        return Err(Error::DegenerateTrace("empty or inconsistent trace".into()));
    }
    let n = rows.len();
    let (t_first, t_last) = (times[0], times[n - 1]);
    let mut out = Vec::with_capacity(len);
    out.push(rows[0].clone());
    let mut seg = 0;
    for j in 1..len - 1 {
        let t = t_first + (t_last - t_first) * j as f64 / (len - 1) as f64;
        while seg + 1 < n - 1 && times[seg + 1] <= t {
            seg += 1;
        }
        let (a, b) = (&rows[seg], &rows[(seg + 1).min(n - 1)]);
        let span = times[(seg + 1).min(n - 1)] - times[seg];
        let w = if span > 0.0 {
            ((t - times[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(a.iter().zip(b).map(|(&va, &vb)| va + w * (vb - va)).collect());
    }
    out.push(rows[n - 1].clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn touch(points: &[(f64, f64, f64)]) -> TouchTrace {
        TouchTrace::new(points.iter().map(|&(x, y, t)| TouchPoint { x, y, t }).collect()).unwrap()
    }

    #[test]
    fn normalize_half_screen() {
        let tr = normalize_touch(&[[0.0, 0.0, 0.0], [540.0, 960.0, 500.0]], 1080, 1920).unwrap();
        assert_eq!(
            tr.points(),
            &[
                TouchPoint { x: 0.0, y: 0.0, t: 0.0 },
                TouchPoint { x: 0.5, y: 0.5, t: 0.5 }
            ]
        );
    }

    #[test]
    fn normalize_corner_zero_length() {
        let tr = normalize_touch(&[[1080.0, 1920.0, 0.0], [1080.0, 1920.0, 100.0]], 1080, 1920).unwrap();
        assert_eq!(tr.points()[0], TouchPoint { x: 1.0, y: 1.0, t: 0.0 });
        assert_eq!(tr.points()[1], TouchPoint { x: 1.0, y: 1.0, t: 0.1 });
    }

    #[test]
    fn normalize_clamps_overshoot() {
        let tr = normalize_touch(&[[1100.0, -5.0, 0.0], [10.0, 10.0, 10.0]], 1080, 1920).unwrap();
        assert_eq!(tr.points()[0].x, 1.0);
        assert_eq!(tr.points()[0].y, 0.0);
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(
            normalize_touch(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 0, 10),
            Err(Error::ZeroScreen)
        ));
        assert!(matches!(
            normalize_touch(&[[0.0, 0.0, 0.0]], 10, 10),
            Err(Error::DegenerateTrace(_))
        ));
        assert!(matches!(
            normalize_touch(&[[0.0, 0.0, 5.0], [1.0, 1.0, 5.0]], 10, 10),
            Err(Error::DegenerateTrace(_))
        ));
    }

    #[test]
    fn normalize_is_idempotent_on_unit_screen() {
        let tr = touch(&[(0.1, 0.2, 0.0), (0.4, 0.3, 0.25), (0.9, 0.35, 0.5)]);
        let raw: Vec<[f64; 3]> = tr.points().iter().map(|p| [p.x, p.y, p.t * 1000.0]).collect();
        let again = normalize_touch(&raw, 1, 1).unwrap();
        for (a, b) in tr.points().iter().zip(again.points()) {
            assert_eq!((a.x, a.y), (b.x, b.y));
            assert!((a.t - b.t).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_two_point_line() {
        let tr = touch(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]);
        let seq = tr.resample_to_length(5).unwrap();
        let xs: Vec<f64> = seq.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = seq.iter().map(|r| r[1]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(ys, xs);
    }

    #[test]
    fn resample_rejects_short_target() {
        let tr = touch(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]);
        assert!(matches!(tr.resample_to_length(1), Err(Error::DegenerateTrace(_))));
    }

    #[test]
    fn resample_single_accel_sample_repeats() {
        let acc = AccelTrace::new(vec![AccelSample { ax: 1.0, ay: 2.0, az: 3.0, t: 0.0 }]).unwrap();
        let seq = acc.resample_to_length(4).unwrap();
        assert!(seq.iter().all(|r| r == &vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn crop_keeps_window() {
        let raw = [
            [0.0, 0.0, 9.8, 900.0],
            [1.0, 0.0, 9.8, 1000.0],
            [2.0, 0.0, 9.8, 1500.0],
            [3.0, 0.0, 9.8, 2100.0],
        ];
        let acc = crop_accel(&raw, 1000.0, 2000.0, 0.0).unwrap();
        assert_eq!(acc.len(), 2);
        assert_eq!(acc.samples()[0].t, 0.0);
        let padded = crop_accel(&raw, 1000.0, 2000.0, 0.1).unwrap();
        assert_eq!(padded.len(), 4);
        assert!((padded.samples()[0].t + 0.1).abs() < 1e-12);
        assert!(crop_accel(&raw, 5000.0, 6000.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn resample_preserves_endpoints(
            steps in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1e-3f64..0.5), 1..40),
            len in 2usize..80,
        ) {
            let mut t = 0.0;
            let mut pts = vec![TouchPoint { x: 0.5, y: 0.5, t: 0.0 }];
            for (x, y, dt) in steps {
                t += dt;
                pts.push(TouchPoint { x, y, t });
            }
            let tr = TouchTrace::new(pts.clone()).unwrap();
            let seq = tr.resample_to_length(len).unwrap();
            prop_assert_eq!(seq.len(), len);
            prop_assert_eq!(&seq[0], &vec![pts[0].x, pts[0].y]);
            let last = pts.last().unwrap();
            prop_assert_eq!(&seq[len - 1], &vec![last.x, last.y]);
        }

        #[test]
        fn resample_identity_on_uniform_timing(
            rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..50),
            dt in 1e-3f64..0.1,
        ) {
            let pts: Vec<TouchPoint> = rows
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| TouchPoint { x, y, t: i as f64 * dt })
                .collect();
            let tr = TouchTrace::new(pts).unwrap();
            let seq = tr.resample_to_length(tr.len()).unwrap();
            for (r, p) in seq.iter().zip(tr.points()) {
                prop_assert!((r[0] - p.x).abs() < 1e-12 && (r[1] - p.y).abs() < 1e-12);
            }
        }
    }
}
