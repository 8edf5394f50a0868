//! File formats: 16-bit grid images, long-form CSV tables and the run
//! manifest.
//!
//! Every CSV starts with a header row; `#` lines are comments. Response files
//! carry `# observer_kind: ...` and `# output_type: ...` in their leading
//! comment block. Writers append a provenance footer when one is supplied.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    DepthMap, EvaluationPoint, LabelMap, ModelMeta, ObserverKind, OutputType, PointEstimates,
    ResponseRecord, ResponseTable, KITTI_ENCODING_SCALE,
};
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "depthsim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the run that produced an output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub manifest_digest: String,
}

impl Provenance {
    pub fn new(seed: u64, manifest_digest: impl Into<String>) -> Self {
        Self {
            seed,
            manifest_digest: manifest_digest.into(),
        }
    }

    pub fn footer(&self) -> String {
        format!(
            "# tool={TOOL_NAME}/{TOOL_VERSION} seed={} manifest={}\n",
            self.seed, self.manifest_digest
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn finish(mut body: String, provenance: Option<&Provenance>) -> String {
    if let Some(p) = provenance {
        body.push_str(&p.footer());
    }
    body
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_err(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn check_header(path: &Path, reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(parse_err(
            path,
            record_line(&headers).max(1),
            format!("expected columns {expected:?}, found {got:?}"),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, record_line(rec), format!("missing {name}")))?;
    raw.parse::<T>()
        .map_err(|_| parse_err(path, record_line(rec), format!("invalid {name} {raw:?}")))
}

fn finite_field(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let v: f64 = field(path, rec, idx, name)?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            record_line(rec),
            format!("non-finite {name} {:?}", rec.get(idx).unwrap_or("")),
        ));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// 16-bit grids

fn decode_gray16(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let malformed = |reason: String| Error::MalformedImage {
        path: path.to_path_buf(),
        reason,
    };
    let decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = decoder.read_info().map_err(|e| malformed(e.to_string()))?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale
    {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            found: format!("{:?} {:?}", info.color_type, info.bit_depth),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage {
            path: path.to_path_buf(),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed("image too large".into()))?;
    let mut buf = vec![0u8; size];
    reader
        .next_frame(&mut buf)
        .map_err(|e| malformed(e.to_string()))?;
    let counts = buf[..width * height * 2]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, counts))
}

pub fn encode_gray16(width: usize, height: usize, counts: &[u16]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let data: Vec<u8> = counts.iter().flat_map(|c| c.to_be_bytes()).collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gray16(path, &bytes)
}

pub fn load_depth_map(path: &Path, encoding_scale: f64) -> Result<DepthMap> {
    let (w, h, counts) = read_gray16(path)?;
    DepthMap::from_counts(w, h, &counts, encoding_scale)
}

pub fn write_depth_map(path: &Path, map: &DepthMap) -> Result<()> {
    let bytes = encode_gray16(map.width(), map.height(), &map.to_counts())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    let (w, h, counts) = read_gray16(path)?;
    LabelMap::new(w, h, counts.into_iter().map(u32::from).collect())
}

pub fn write_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    let counts = map
        .labels()
        .iter()
        .map(|&l| {
            u16::try_from(l).map_err(|_| Error::Invalid(format!("label {l} exceeds 16 bits")))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = encode_gray16(map.width(), map.height(), &counts)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// points.csv

pub const POINT_COLUMNS: [&str; 8] = [
    "scene_id", "point_id", "group_id", "px_raw", "py_raw", "px_norm", "py_norm", "gt_depth_m",
];

pub fn points_to_csv(points: &[EvaluationPoint], provenance: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(POINT_COLUMNS).unwrap();
    for p in points {
        w.write_record([
            p.scene_id.clone(),
            p.point_id.to_string(),
            p.group_id.to_string(),
            p.px_raw.to_string(),
            p.py_raw.to_string(),
            p.px_norm.to_string(),
            p.py_norm.to_string(),
            p.gt_depth.to_string(),
        ])
        .unwrap();
    }
    finish(into_string(w), provenance)
}

pub fn write_points(
    path: &Path,
    points: &[EvaluationPoint],
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_text(path, &points_to_csv(points, provenance))
}

pub fn parse_points(path: &Path, text: &str) -> Result<Vec<EvaluationPoint>> {
    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &POINT_COLUMNS)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let p = EvaluationPoint {
            scene_id: field(path, &rec, 0, "scene_id")?,
            point_id: field(path, &rec, 1, "point_id")?,
            group_id: field(path, &rec, 2, "group_id")?,
            px_raw: field(path, &rec, 3, "px_raw")?,
            py_raw: field(path, &rec, 4, "py_raw")?,
            px_norm: finite_field(path, &rec, 5, "px_norm")?,
            py_norm: finite_field(path, &rec, 6, "py_norm")?,
            gt_depth: finite_field(path, &rec, 7, "gt_depth_m")?,
        };
        if p.px_norm.abs() > 1.0 || p.py_norm.abs() > 1.0 {
            return Err(parse_err(
                path,
                record_line(&rec),
                "normalized coordinate outside [-1, 1]",
            ));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_points(path: &Path) -> Result<Vec<EvaluationPoint>> {
    parse_points(path, &read_text(path)?)
}

// ---------------------------------------------------------------------------
// responses.csv

pub const RESPONSE_COLUMNS: [&str; 4] = ["observer_id", "scene_id", "point_id", "estimate"];

pub fn responses_to_csv(table: &ResponseTable, provenance: Option<&Provenance>) -> String {
    let mut head = format!(
        "# observer_kind: {}\n# output_type: {}\n",
        table.observer_kind(),
        table.output_type()
    );
    let mut w = csv_writer();
    w.write_record(RESPONSE_COLUMNS).unwrap();
    for r in table.records() {
        w.write_record([
            r.observer_id.clone(),
            r.scene_id.clone(),
            r.point_id.to_string(),
            r.estimate.to_string(),
        ])
        .unwrap();
    }
    head.push_str(&into_string(w));
    finish(head, provenance)
}

pub fn write_responses(
    path: &Path,
    table: &ResponseTable,
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_text(path, &responses_to_csv(table, provenance))
}

/// `key: value` pairs from the comment block preceding the header row.
fn header_metadata(text: &str) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    for line in text.lines() {
        let Some(rest) = line.trim_start().strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once(':') {
            meta.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    meta
}

pub fn parse_responses(path: &Path, text: &str) -> Result<ResponseTable> {
    let meta = header_metadata(text);
    let meta_field = |key: &str| {
        meta.get(key)
            .ok_or_else(|| parse_err(path, 1, format!("missing `# {key}:` header comment")))
    };
    let observer_kind: ObserverKind = meta_field("observer_kind")?
        .parse()
        .map_err(|e: Error| parse_err(path, 1, e.to_string()))?;
    let output_type: OutputType = meta_field("output_type")?
        .parse()
        .map_err(|e: Error| parse_err(path, 1, e.to_string()))?;

    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &RESPONSE_COLUMNS)?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        records.push(ResponseRecord {
            observer_id: field(path, &rec, 0, "observer_id")?,
            scene_id: field(path, &rec, 1, "scene_id")?,
            point_id: field(path, &rec, 2, "point_id")?,
            estimate: finite_field(path, &rec, 3, "estimate")?,
        });
    }
    ResponseTable::new(observer_kind, output_type, records)
}

pub fn load_responses(path: &Path) -> Result<ResponseTable> {
    parse_responses(path, &read_text(path)?)
}

/// Writes a point-estimate vector as a single-observer response table.
pub fn estimates_to_table(
    observer_id: &str,
    kind: ObserverKind,
    output_type: OutputType,
    estimates: &PointEstimates,
) -> Result<ResponseTable> {
    let records = estimates
        .iter()
        .map(|(k, v)| ResponseRecord {
            observer_id: observer_id.to_string(),
            scene_id: k.scene_id.clone(),
            point_id: k.point_id,
            estimate: *v,
        })
        .collect();
    ResponseTable::new(kind, output_type, records)
}

// ---------------------------------------------------------------------------
// models.csv

pub const MODEL_COLUMNS: [&str; 8] = [
    "model_id",
    "strategy",
    "backbone",
    "dataset_tags",
    "param_count",
    "output_type",
    "depth_min_m",
    "depth_max_m",
];

pub fn models_to_csv(models: &[ModelMeta], provenance: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(MODEL_COLUMNS).unwrap();
    for m in models {
        w.write_record([
            m.model_id.clone(),
            m.strategy.to_string(),
            m.backbone.to_string(),
            m.dataset_tags.join(";"),
            m.param_count.to_string(),
            m.output_type.to_string(),
            m.depth_range.0.to_string(),
            m.depth_range.1.to_string(),
        ])
        .unwrap();
    }
    finish(into_string(w), provenance)
}

pub fn parse_models(path: &Path, text: &str) -> Result<Vec<ModelMeta>> {
    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &MODEL_COLUMNS)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        let wrap = |e: Error| parse_err(path, line, e.to_string());
        let meta = ModelMeta {
            model_id: field(path, &rec, 0, "model_id")?,
            strategy: rec[1].parse().map_err(wrap)?,
            backbone: rec[2].parse().map_err(wrap)?,
            dataset_tags: rec[3]
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect(),
            param_count: field(path, &rec, 4, "param_count")?,
            output_type: rec[5].parse().map_err(wrap)?,
            depth_range: (
                finite_field(path, &rec, 6, "depth_min_m")?,
                field(path, &rec, 7, "depth_max_m")?,
            ),
        };
        meta.validate().map_err(wrap)?;
        out.push(meta);
    }
    Ok(out)
}

pub fn load_models(path: &Path) -> Result<Vec<ModelMeta>> {
    parse_models(path, &read_text(path)?)
}

// ---------------------------------------------------------------------------
// run manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub depth: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

/// JSON run manifest. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub scenes: Vec<SceneEntry>,
    pub points: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub models: Option<PathBuf>,
    /// Directory holding one `<model_id>.csv` response file per model.
    pub predictions_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub encoding_scale: f64,
    pub seed: u64,
    pub bootstrap_iterations: usize,
    pub track: String,
    pub sampler: Option<crate::sampler::SamplerConfig>,
    pub screening_reference: crate::screening::Reference,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            scenes: Vec::new(),
            points: None,
            responses: None,
            models: None,
            predictions_dir: None,
            out_dir: None,
            encoding_scale: KITTI_ENCODING_SCALE,
            seed: 0,
            bootstrap_iterations: 1000,
            track: "both".into(),
            sampler: None,
            screening_reference: crate::screening::Reference::Mean,
        }
    }
}

/// A manifest together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
    /// `sha256:<hex>` of the manifest bytes.
    pub digest: String,
}

impl LoadedManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedManifest {
        manifest,
        base_dir,
        digest: format!("sha256:{}", sha256_hex(&bytes)),
    })
}

pub fn manifest_to_json(manifest: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}
