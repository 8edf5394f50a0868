//! Half-split partial-correlation similarity.
//!
//! Each bootstrap iteration splits the observers of every scene into two
//! halves, averages each half per point, and correlates the half means with
//! each other (human–human) and one half with each subject (human–subject),
//! controlling for ground-truth depth. Scores are averaged over iterations.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::data::{OutputType, PointSet, ResponseTable};
use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::numeric::pairwise_sum;
use crate::par;
use crate::rng;
use crate::scale::{align_scene, recover_scale, TargetSpace};
use crate::stats::{residual_correlation, ControlResidualizer};

pub const DEFAULT_ITERATIONS: usize = 1000;
/// Largest fraction of skipped iterations tolerated per score.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;
pub const HUMAN_ID: &str = "human";

const SPLIT_DOMAIN: &str = "half-split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Track {
    Absolute,
    ScaleRecovered,
}

impl Track {
    pub const ALL: [Track; 2] = [Track::Absolute, Track::ScaleRecovered];

    pub fn as_str(&self) -> &'static str {
        match self {
            Track::Absolute => "absolute",
            Track::ScaleRecovered => "scale_recovered",
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Track {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Track::Absolute),
            "scale_recovered" | "scale-recovered" => Ok(Track::ScaleRecovered),
            other => Err(Error::Invalid(format!("unknown track `{other}`"))),
        }
    }
}

/// Which half is called A. `Swapped` exchanges the labels of every split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitLabels {
    #[default]
    Normal,
    Swapped,
}

#[derive(Debug, Clone)]
pub struct SimilarityConfig {
    pub iterations: usize,
    pub seed: u64,
    pub track: Track,
    pub labels: SplitLabels,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            track: Track::Absolute,
            labels: SplitLabels::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityScore {
    pub subject_id: String,
    pub track: Track,
    pub r_mean: f64,
    pub r_sd: f64,
    /// Configured iteration count.
    pub iterations: usize,
    /// Iterations that produced a correlation.
    pub b_effective: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSplit {
    pub scene_id: String,
    pub half_a: Vec<String>,
    pub half_b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub iteration: usize,
    pub scenes: Vec<SceneSplit>,
}

/// A model (or any other estimate vector) scored against the human halves.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    /// One value per point, in point order.
    pub values: Vec<f64>,
    pub output_type: OutputType,
    /// Cap for depths recovered from disparity.
    pub depth_cap: f64,
}

impl Subject {
    pub fn new(id: impl Into<String>, values: Vec<f64>, output_type: OutputType) -> Self {
        Self {
            id: id.into(),
            values,
            output_type,
            depth_cap: f64::INFINITY,
        }
    }
}

#[derive(Debug)]
struct ScenePanel {
    range: Range<usize>,
    observers: Vec<String>,
    /// Per point: (observer index within the scene, estimate).
    responses: Vec<Vec<(usize, f64)>>,
}

/// Kept human responses arranged per scene for repeated splitting.
#[derive(Debug)]
pub struct HumanPanel {
    scenes: Vec<(String, ScenePanel)>,
    n_points: usize,
}

impl HumanPanel {
    /// `table` should already be restricted to the kept observers.
    pub fn new(table: &ResponseTable, points: &PointSet) -> Result<Self> {
        let mut per_scene: BTreeMap<&str, BTreeMap<&str, Vec<(usize, f64)>>> = BTreeMap::new();
        for r in table.records() {
            let pos = points.position(&r.scene_id, r.point_id).ok_or_else(|| {
                Error::Invalid(format!(
                    "response for unknown point {}/{}",
                    r.scene_id, r.point_id
                ))
            })?;
            per_scene
                .entry(r.scene_id.as_str())
                .or_default()
                .entry(r.observer_id.as_str())
                .or_default()
                .push((pos, r.estimate));
        }
        let mut scenes = Vec::with_capacity(points.scene_count());
        for (scene_id, range) in points.scenes() {
            let by_obs = per_scene.remove(scene_id.as_str()).unwrap_or_default();
            let mut responses = vec![Vec::new(); range.len()];
            let mut observers = Vec::with_capacity(by_obs.len());
            for (k, (obs, rows)) in by_obs.into_iter().enumerate() {
                observers.push(obs.to_string());
                for (pos, v) in rows {
                    responses[pos - range.start].push((k, v));
                }
            }
            for (i, rs) in responses.iter().enumerate() {
                if rs.len() < 2 {
                    let p = &points.points()[range.start + i];
                    return Err(Error::Invalid(format!(
                        "point {}/{} has {} kept observers, need at least 2",
                        p.scene_id,
                        p.point_id,
                        rs.len()
                    )));
                }
            }
            scenes.push((
                scene_id.clone(),
                ScenePanel {
                    range: range.clone(),
                    observers,
                    responses,
                },
            ));
        }
        Ok(Self {
            scenes,
            n_points: points.len(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Membership of each scene's observers in half A for iteration `b`.
    fn membership(&self, seed: u64, b: usize, labels: SplitLabels) -> Vec<Vec<bool>> {
        let mut rng = rng::indexed_stream(seed, SPLIT_DOMAIN, b as u64);
        self.scenes
            .iter()
            .map(|(_, sp)| {
                let n = sp.observers.len();
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let n_a = if n % 2 == 1 && b % 2 == 0 { n / 2 + 1 } else { n / 2 };
                let mut in_a = vec![false; n];
                for &k in &perm[..n_a] {
                    in_a[k] = true;
                }
                if labels == SplitLabels::Swapped {
                    in_a.iter_mut().for_each(|m| *m = !*m);
                }
                in_a
            })
            .collect()
    }

    pub fn split_plan(&self, seed: u64, iteration: usize, labels: SplitLabels) -> SplitPlan {
        let members = self.membership(seed, iteration, labels);
        let scenes = self
            .scenes
            .iter()
            .zip(members)
            .map(|((id, sp), in_a)| {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (obs, m) in sp.observers.iter().zip(in_a) {
                    if m {
                        a.push(obs.clone());
                    } else {
                        b.push(obs.clone());
                    }
                }
                SceneSplit {
                    scene_id: id.clone(),
                    half_a: a,
                    half_b: b,
                }
            })
            .collect();
        SplitPlan { iteration, scenes }
    }

    /// Half means in point order, or `None` if some point has no response
    /// in one of the halves.
    fn half_means(&self, members: &[Vec<bool>]) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut a = vec![0.0; self.n_points];
        let mut b = vec![0.0; self.n_points];
        for ((_, sp), in_a) in self.scenes.iter().zip(members) {
            for (i, rs) in sp.responses.iter().enumerate() {
                let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
                for &(k, v) in rs {
                    if in_a[k] {
                        sa += v;
                        na += 1;
                    } else {
                        sb += v;
                        nb += 1;
                    }
                }
                if na == 0 || nb == 0 {
                    return None;
                }
                a[sp.range.start + i] = sa / na as f64;
                b[sp.range.start + i] = sb / nb as f64;
            }
        }
        Some((a, b))
    }

    /// Mean over all kept observers per point.
    pub fn full_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_points];
        for (_, sp) in &self.scenes {
            for (i, rs) in sp.responses.iter().enumerate() {
                out[sp.range.start + i] =
                    rs.iter().map(|(_, v)| v).sum::<f64>() / rs.len() as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityRun {
    pub human: SimilarityScore,
    pub subjects: Vec<SimilarityScore>,
}

/// Scale-recovers a half mean scene by scene in depth space.
fn align_half(values: &[f64], gt: &[f64], points: &PointSet) -> Option<Vec<f64>> {
    let mut out = vec![0.0; values.len()];
    for (_, range) in points.scenes() {
        let (_, _, aligned) = align_scene(
            &values[range.clone()],
            &gt[range.clone()],
            TargetSpace::Depth,
            f64::INFINITY,
        )
        .ok()?;
        out[range.clone()].copy_from_slice(&aligned);
    }
    Some(out)
}

/// Per-iteration correlations: index 0 is human–human, then one per
/// subject. `None` marks a skipped iteration.
pub fn iteration_correlations(
    panel: &HumanPanel,
    points: &PointSet,
    subjects: &[Subject],
    cfg: &SimilarityConfig,
) -> Result<Vec<Vec<Option<f64>>>> {
    if panel.n_points() != points.len() {
        return Err(Error::Invalid("panel and point set differ".into()));
    }
    let gt = points.gt();
    let ctrl = ControlResidualizer::new(&gt)?;
    let mut subject_resid = Vec::with_capacity(subjects.len());
    for s in subjects {
        if s.values.len() != points.len() {
            return Err(Error::Invalid(format!(
                "subject {} has {} values for {} points",
                s.id,
                s.values.len(),
                points.len()
            )));
        }
        let values = match cfg.track {
            Track::Absolute => s.values.clone(),
            Track::ScaleRecovered => {
                let rec = recover_scale(&s.values, points, s.output_type, s.depth_cap)?;
                if let Some(scene) = rec.dropped.first() {
                    return Err(Error::Invalid(format!(
                        "subject {} has constant output in scene {scene}",
                        s.id
                    )));
                }
                points.align(&rec.aligned)?
            }
        };
        let resid = ctrl.residualize(&values).map_err(|_| Error::SimilarityUnstable {
            subject: s.id.clone(),
            degenerate: cfg.iterations,
            iterations: cfg.iterations,
        })?;
        subject_resid.push(resid);
    }

    let per_iter = par::map_range(cfg.iterations, |b| {
        let mut row = vec![None; subjects.len() + 1];
        let members = panel.membership(cfg.seed, b, cfg.labels);
        let Some((mut ha, mut hb)) = panel.half_means(&members) else {
            return row;
        };
        if cfg.track == Track::ScaleRecovered {
            match (
                align_half(&ha, &gt, points),
                align_half(&hb, &gt, points),
            ) {
                (Some(a), Some(bb)) => {
                    ha = a;
                    hb = bb;
                }
                _ => return row,
            }
        }
        let (Ok(ra), Ok(rb)) = (ctrl.residualize(&ha), ctrl.residualize(&hb)) else {
            return row;
        };
        row[0] = residual_correlation(&ra, &rb).ok();
        let pick = if b % 2 == 0 { &ra } else { &rb };
        for (slot, rs) in row[1..].iter_mut().zip(&subject_resid) {
            *slot = residual_correlation(pick, rs).ok();
        }
        row
    });
    Ok(per_iter)
}

fn summarize(
    subject_id: &str,
    column: impl Iterator<Item = Option<f64>>,
    cfg: &SimilarityConfig,
) -> Result<SimilarityScore> {
    let values: Vec<f64> = column.flatten().collect();
    let degenerate = cfg.iterations - values.len();
    if values.is_empty() || degenerate as f64 > MAX_DEGENERATE_FRACTION * cfg.iterations as f64 {
        return Err(Error::SimilarityUnstable {
            subject: subject_id.to_string(),
            degenerate,
            iterations: cfg.iterations,
        });
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let sd = if values.len() > 1 {
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&sq) / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SimilarityScore {
        subject_id: subject_id.to_string(),
        track: cfg.track,
        r_mean: mean,
        r_sd: sd,
        iterations: cfg.iterations,
        b_effective: values.len(),
    })
}

/// Human–human and human–subject scores over `cfg.iterations` splits.
pub fn half_split_similarity(
    panel: &HumanPanel,
    points: &PointSet,
    subjects: &[Subject],
    cfg: &SimilarityConfig,
) -> Result<SimilarityRun> {
    if cfg.iterations == 0 {
        return Err(Error::Invalid("iterations must be positive".into()));
    }
    let rows = iteration_correlations(panel, points, subjects, cfg)?;
    let human = summarize(HUMAN_ID, rows.iter().map(|r| r[0]), cfg)?;
    let subjects = subjects
        .iter()
        .enumerate()
        .map(|(k, s)| summarize(&s.id, rows.iter().map(|r| r[k + 1]), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityRun { human, subjects })
}

pub const SIMILARITY_COLUMNS: [&str; 5] = ["subject_id", "track", "r_mean", "r_sd", "B_effective"];

pub fn similarity_to_csv(scores: &[SimilarityScore], provenance: Option<&Provenance>) -> String {
    let mut s = SIMILARITY_COLUMNS.join(",");
    s.push('\n');
    for sc in scores {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            sc.subject_id, sc.track, sc.r_mean, sc.r_sd, sc.b_effective
        );
    }
    if let Some(p) = provenance {
        s.push_str(&p.footer());
    }
    s
}

/// Parses `similarity.csv`. The configured iteration count is not stored,
/// so `iterations` is set to `B_effective`.
pub fn parse_similarity(path: &Path, text: &str) -> Result<Vec<SimilarityScore>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("bad {what}"),
        };
        if rec.len() != SIMILARITY_COLUMNS.len() {
            return Err(bad("column count"));
        }
        let b: usize = rec[4].parse().map_err(|_| bad("B_effective"))?;
        out.push(SimilarityScore {
            subject_id: rec[0].to_string(),
            track: rec[1].parse().map_err(|_| bad("track"))?,
            r_mean: rec[2].parse().map_err(|_| bad("r_mean"))?,
            r_sd: rec[3].parse().map_err(|_| bad("r_sd"))?,
            iterations: b,
            b_effective: b,
        });
    }
    Ok(out)
}
