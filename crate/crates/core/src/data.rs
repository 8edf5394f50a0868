//! Shared data model: scenes, depth and label grids, evaluation points,
//! observer responses and model metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// KITTI stores depth as `count / 256` meters.
pub const KITTI_ENCODING_SCALE: f64 = 1.0 / 256.0;

/// Dense depth grid with a validity mask. Count 0 in 16-bit storage marks an
/// invalid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    encoding_scale: f64,
}

impl DepthMap {
    pub fn from_counts(
        width: usize,
        height: usize,
        counts: &[u16],
        encoding_scale: f64,
    ) -> Result<Self> {
        if counts.len() != width * height {
            return Err(Error::Invalid(format!(
                "depth grid has {} samples, expected {}x{}",
                counts.len(),
                width,
                height
            )));
        }
        if !(encoding_scale > 0.0 && encoding_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "encoding scale must be positive, got {encoding_scale}"
            )));
        }
        let valid: Vec<bool> = counts.iter().map(|&c| c != 0).collect();
        let values = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { c as f64 * encoding_scale })
            .collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
            encoding_scale,
        })
    }

    /// Builds a map from metric depths; `None` or non-positive cells are
    /// invalid. Depths are quantized to the storage grid.
    pub fn from_depths(
        width: usize,
        height: usize,
        depths: &[Option<f64>],
        encoding_scale: f64,
    ) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::Invalid(format!(
                "depth grid has {} samples, expected {}x{}",
                depths.len(),
                width,
                height
            )));
        }
        let mut counts = Vec::with_capacity(depths.len());
        for d in depths {
            let c = match d {
                Some(v) if *v > 0.0 => {
                    let c = (v / encoding_scale).round();
                    if !(1.0..=u16::MAX as f64).contains(&c) {
                        return Err(Error::Invalid(format!(
                            "depth {v} does not fit 16-bit storage at scale {encoding_scale}"
                        )));
                    }
                    c as u16
                }
                _ => 0,
            };
            counts.push(c);
        }
        Self::from_counts(width, height, &counts, encoding_scale)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn encoding_scale(&self) -> f64 {
        self.encoding_scale
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Storage counts, `round(depth / scale)` and 0 for invalid cells.
    pub fn to_counts(&self) -> Vec<u16> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(v, ok)| {
                if *ok {
                    (v / self.encoding_scale).round() as u16
                } else {
                    0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Invalid(format!(
                "label grid has {} samples, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub scene_id: String,
    pub ground_truth: DepthMap,
    pub segmentation: Option<LabelMap>,
}

impl Scene {
    pub fn new(
        scene_id: impl Into<String>,
        ground_truth: DepthMap,
        segmentation: Option<LabelMap>,
    ) -> Result<Self> {
        let scene_id = scene_id.into();
        if ground_truth.width() == 0 || ground_truth.height() == 0 {
            return Err(Error::Invalid(format!("scene {scene_id} has zero size")));
        }
        if let Some(seg) = &segmentation {
            if seg.width() != ground_truth.width() || seg.height() != ground_truth.height() {
                return Err(Error::Invalid(format!(
                    "scene {scene_id}: segmentation is {}x{}, depth is {}x{}",
                    seg.width(),
                    seg.height(),
                    ground_truth.width(),
                    ground_truth.height()
                )));
            }
        }
        Ok(Self {
            scene_id,
            ground_truth,
            segmentation,
        })
    }

    pub fn width(&self) -> usize {
        self.ground_truth.width()
    }

    pub fn height(&self) -> usize {
        self.ground_truth.height()
    }
}

/// Maps a pixel index to `[-1, 1]` so that index 0 and `extent - 1` land
/// exactly on the ends.
pub fn normalize_coord(raw: usize, extent: usize) -> f64 {
    if extent <= 1 {
        0.0
    } else {
        2.0 * raw as f64 / (extent - 1) as f64 - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPoint {
    pub scene_id: String,
    pub point_id: u32,
    pub group_id: u32,
    pub px_raw: u32,
    pub py_raw: u32,
    pub px_norm: f64,
    pub py_norm: f64,
    #[serde(rename = "gt_depth_m")]
    pub gt_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointKey {
    pub scene_id: String,
    pub point_id: u32,
}

impl PointKey {
    pub fn new(scene_id: impl Into<String>, point_id: u32) -> Self {
        Self {
            scene_id: scene_id.into(),
            point_id,
        }
    }
}

/// Evaluation points ordered by `(scene_id, point_id)`, with each scene's
/// points contiguous.
#[derive(Debug, Clone, Default)]
pub struct PointSet {
    points: Vec<EvaluationPoint>,
    scenes: Vec<(String, std::ops::Range<usize>)>,
    index: HashMap<PointKey, usize>,
}

impl PointSet {
    pub fn new(mut points: Vec<EvaluationPoint>) -> Result<Self> {
        points.sort_by(|a, b| {
            a.scene_id
                .cmp(&b.scene_id)
                .then(a.point_id.cmp(&b.point_id))
        });
        let mut index = HashMap::with_capacity(points.len());
        let mut scenes: Vec<(String, std::ops::Range<usize>)> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            if !(p.gt_depth.is_finite() && p.gt_depth >= 0.0) {
                return Err(Error::Invalid(format!(
                    "scene {} point {}: ground truth {} is not a valid depth",
                    p.scene_id, p.point_id, p.gt_depth
                )));
            }
            if index
                .insert(PointKey::new(p.scene_id.clone(), p.point_id), i)
                .is_some()
            {
                return Err(Error::Invalid(format!(
                    "duplicate point {} in scene {}",
                    p.point_id, p.scene_id
                )));
            }
            match scenes.last_mut() {
                Some((id, range)) if *id == p.scene_id => range.end = i + 1,
                _ => scenes.push((p.scene_id.clone(), i..i + 1)),
            }
        }
        Ok(Self {
            points,
            scenes,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[EvaluationPoint] {
        &self.points
    }

    /// `(scene_id, index range into points())` in scene order.
    pub fn scenes(&self) -> &[(String, std::ops::Range<usize>)] {
        &self.scenes
    }

    pub fn scene_count(&self) -> usize {
        self.scenes.len()
    }

    pub fn position(&self, scene_id: &str, point_id: u32) -> Option<usize> {
        self.index
            .get(&PointKey::new(scene_id, point_id))
            .copied()
    }

    pub fn gt(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gt_depth).collect()
    }

    /// Restricts to the given scenes, keeping order.
    pub fn subset(&self, scene_ids: &BTreeSet<String>) -> PointSet {
        let points = self
            .points
            .iter()
            .filter(|p| scene_ids.contains(&p.scene_id))
            .cloned()
            .collect();
        PointSet::new(points).expect("subset of a valid point set is valid")
    }

    /// Lays `estimates` out in point order.
    pub fn align(&self, estimates: &PointEstimates) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                estimates
                    .get(&p.scene_id, p.point_id)
                    .ok_or_else(|| Error::MissingCoverage {
                        scene_id: p.scene_id.clone(),
                        point_id: p.point_id,
                    })
            })
            .collect()
    }

    /// Inverse of [`PointSet::align`].
    pub fn to_estimates(&self, values: &[f64]) -> PointEstimates {
        let mut out = PointEstimates::default();
        for (p, v) in self.points.iter().zip(values) {
            out.insert(PointKey::new(p.scene_id.clone(), p.point_id), *v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverKind {
    Human,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputType {
    Absolute,
    Relative,
    Disparity,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Invalid(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

text_enum!(ObserverKind {
    ObserverKind::Human => "human",
    ObserverKind::Model => "model",
});

text_enum!(OutputType {
    OutputType::Absolute => "absolute",
    OutputType::Relative => "relative",
    OutputType::Disparity => "disparity",
});

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub observer_id: String,
    pub scene_id: String,
    pub point_id: u32,
    pub estimate: f64,
}

/// Long-form per-observer estimates. At most one record per
/// `(observer, scene, point)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    observer_kind: ObserverKind,
    output_type: OutputType,
    records: Vec<ResponseRecord>,
}

impl ResponseTable {
    pub fn new(
        observer_kind: ObserverKind,
        output_type: OutputType,
        records: Vec<ResponseRecord>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !r.estimate.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite estimate for observer {} scene {} point {}",
                    r.observer_id, r.scene_id, r.point_id
                )));
            }
            if observer_kind == ObserverKind::Human
                && output_type == OutputType::Absolute
                && r.estimate < 0.0
            {
                return Err(Error::Invalid(format!(
                    "negative human depth {} for observer {}",
                    r.estimate, r.observer_id
                )));
            }
            if !seen.insert((r.observer_id.as_str(), r.scene_id.as_str(), r.point_id)) {
                return Err(Error::DuplicateResponse {
                    observer_id: r.observer_id.clone(),
                    scene_id: r.scene_id.clone(),
                    point_id: r.point_id,
                });
            }
        }
        Ok(Self {
            observer_kind,
            output_type,
            records,
        })
    }

    pub fn observer_kind(&self) -> ObserverKind {
        self.observer_kind
    }

    pub fn output_type(&self) -> OutputType {
        self.output_type
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observers(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.observer_id.clone()).collect()
    }

    /// Keeps only records from `observers`.
    pub fn filter_observers(&self, observers: &BTreeSet<String>) -> ResponseTable {
        ResponseTable {
            observer_kind: self.observer_kind,
            output_type: self.output_type,
            records: self
                .records
                .iter()
                .filter(|r| observers.contains(&r.observer_id))
                .cloned()
                .collect(),
        }
    }

    /// Per-observer estimates keyed by point.
    pub fn by_observer(&self) -> BTreeMap<&str, BTreeMap<(&str, u32), f64>> {
        let mut out: BTreeMap<&str, BTreeMap<(&str, u32), f64>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.observer_id.as_str())
                .or_default()
                .insert((r.scene_id.as_str(), r.point_id), r.estimate);
        }
        out
    }

    /// Single-observer table as a point-estimate vector.
    pub fn estimates_of(&self, observer_id: &str) -> PointEstimates {
        let mut out = PointEstimates::default();
        for r in self.records.iter().filter(|r| r.observer_id == observer_id) {
            out.insert(PointKey::new(r.scene_id.clone(), r.point_id), r.estimate);
        }
        out
    }
}

/// One value per `(scene, point)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointEstimates(BTreeMap<PointKey, f64>);

impl PointEstimates {
    pub fn insert(&mut self, key: PointKey, value: f64) {
        self.0.insert(key, value);
    }

    pub fn get(&self, scene_id: &str, point_id: u32) -> Option<f64> {
        // BTreeMap lookup needs an owned key; scene ids are short.
        self.0.get(&PointKey::new(scene_id, point_id)).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PointKey, &f64)> {
        self.0.iter()
    }
}

impl FromIterator<(PointKey, f64)> for PointEstimates {
    fn from_iter<I: IntoIterator<Item = (PointKey, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Arithmetic mean per `(scene, point)` over `observers` (all observers when
/// `None`). Every point present in the table must be covered by the subset.
pub fn mean_by_point(
    table: &ResponseTable,
    observers: Option<&BTreeSet<String>>,
) -> Result<PointEstimates> {
    let mut sums: BTreeMap<(&str, u32), (f64, usize)> = BTreeMap::new();
    for r in table.records() {
        let slot = sums.entry((r.scene_id.as_str(), r.point_id)).or_insert((0.0, 0));
        if observers.is_none_or(|set| set.contains(&r.observer_id)) {
            slot.0 += r.estimate;
            slot.1 += 1;
        }
    }
    sums.into_iter()
        .map(|((scene, point), (sum, n))| {
            if n == 0 {
                Err(Error::MissingCoverage {
                    scene_id: scene.to_string(),
                    point_id: point,
                })
            } else {
                Ok((PointKey::new(scene, point), sum / n as f64))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Supervised,
    SelfSupervised,
    HybridDisparity,
    HybridSemantic,
    Generative,
}

text_enum!(Strategy {
    Strategy::Supervised => "supervised",
    Strategy::SelfSupervised => "self-supervised",
    Strategy::HybridDisparity => "hybrid-disparity",
    Strategy::HybridSemantic => "hybrid-semantic",
    Strategy::Generative => "generative",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Cnn,
    Transformer,
    Hybrid,
    Diffusion,
}

text_enum!(Backbone {
    Backbone::Cnn => "cnn",
    Backbone::Transformer => "transformer",
    Backbone::Hybrid => "hybrid",
    Backbone::Diffusion => "diffusion",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub strategy: Strategy,
    pub backbone: Backbone,
    pub dataset_tags: Vec<String>,
    pub param_count: u64,
    pub output_type: OutputType,
    /// Training depth range in meters, `(min, max)`.
    pub depth_range: (f64, f64),
}

impl ModelMeta {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range;
        if !(lo < hi) {
            return Err(Error::Invalid(format!(
                "model {}: depth range [{lo}, {hi}] is empty",
                self.model_id
            )));
        }
        Ok(())
    }
}

/// Plot colour category derived from training-data tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetCategory {
    KittiOnly,
    KittiMulti,
    NyuOnly,
    NyuMulti,
    OtherSingle,
    OtherMulti,
}

text_enum!(DatasetCategory {
    DatasetCategory::KittiOnly => "kitti-only",
    DatasetCategory::KittiMulti => "kitti+multi",
    DatasetCategory::NyuOnly => "nyu-only",
    DatasetCategory::NyuMulti => "nyu+multi",
    DatasetCategory::OtherSingle => "other-single",
    DatasetCategory::OtherMulti => "other-multi",
});

impl DatasetCategory {
    /// A tag set is "multi" when it names more than one dataset or a
    /// composite mixture (`mix*`, `multi*`).
    pub fn from_tags(tags: &[String]) -> Self {
        let lower: Vec<String> = tags.iter().map(|t| t.trim().to_ascii_lowercase()).collect();
        let composite = lower
            .iter()
            .any(|t| t.starts_with("mix") || t.starts_with("multi"));
        let multi = lower.len() > 1 || composite;
        let has = |name: &str| lower.iter().any(|t| t == name);
        match (has("kitti"), has("nyu"), multi) {
            (true, _, false) => DatasetCategory::KittiOnly,
            (true, _, true) => DatasetCategory::KittiMulti,
            (false, true, false) => DatasetCategory::NyuOnly,
            (false, true, true) => DatasetCategory::NyuMulti,
            (false, false, false) => DatasetCategory::OtherSingle,
            (false, false, true) => DatasetCategory::OtherMulti,
        }
    }
}
