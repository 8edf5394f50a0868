//! Synthetic scenes, observers and model predictions with planted biases.
//!
//! Human estimates follow a per-scene affine distortion of ground truth
//! plus a shared per-point residual field, observer noise, and optional
//! uniform-random outlier observers. Models mix the human distortion with
//! their own noise and are emitted in their declared output space.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    normalize_coord, Backbone, EvaluationPoint, ModelMeta, ObserverKind, OutputType, PointSet,
    ResponseRecord, ResponseTable, Strategy,
};
use crate::error::{Error, Result};
use crate::io::{self, Manifest, Provenance};
use crate::rng;
use crate::stats::ControlResidualizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthDistribution {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtDepth {
    pub min: f64,
    pub max: f64,
    pub distribution: DepthDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub a_z: f64,
    pub b: f64,
    pub a_x: f64,
    pub a_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub model_id: String,
    /// Fraction of the human distortion the model reproduces.
    pub human_weight: f64,
    pub noise_sd: f64,
    pub output_type: OutputType,
    pub strategy: Strategy,
    pub backbone: Backbone,
    pub dataset_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub scenes: usize,
    pub points_per_scene: usize,
    pub gt_depth: GtDepth,
    pub shared_bias_mean: AffineParams,
    /// Per-parameter standard deviations (diagonal covariance).
    pub shared_bias_sd: AffineParams,
    /// Per-point bias shared by all observers.
    pub shared_residual_sd: f64,
    pub observer_noise_sd: f64,
    pub observers_per_scene: usize,
    pub scenes_per_cohort: usize,
    pub outlier_fraction: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub seed: u64,
    pub models: Vec<SynthModel>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scenes: 48,
            points_per_scene: 16,
            gt_depth: GtDepth {
                min: 2.0,
                max: 80.0,
                distribution: DepthDistribution::LogUniform,
            },
            shared_bias_mean: AffineParams {
                a_z: 0.8,
                b: 3.0,
                a_x: 0.0,
                a_y: 0.0,
            },
            shared_bias_sd: AffineParams {
                a_z: 0.1,
                b: 1.0,
                a_x: 1.0,
                a_y: 1.0,
            },
            shared_residual_sd: 2.0,
            observer_noise_sd: 4.0,
            observers_per_scene: 20,
            scenes_per_cohort: 8,
            outlier_fraction: 0.0,
            image_width: 1242,
            image_height: 375,
            seed: 0,
            models: default_models(),
        }
    }
}

/// Twelve models spanning human likeness, noise and output types.
pub fn default_models() -> Vec<SynthModel> {
    let strategies = [
        Strategy::Supervised,
        Strategy::SelfSupervised,
        Strategy::HybridDisparity,
        Strategy::HybridSemantic,
        Strategy::Generative,
    ];
    let backbones = [Backbone::Cnn, Backbone::Transformer, Backbone::Hybrid, Backbone::Diffusion];
    let tags: [&[&str]; 6] = [
        &["kitti"],
        &["kitti", "cityscapes"],
        &["nyu"],
        &["nyu", "mix6"],
        &["ddad"],
        &["mix12"],
    ];
    (0..12)
        .map(|i| SynthModel {
            model_id: format!("model{i:02}"),
            human_weight: (i % 4) as f64 / 3.0,
            noise_sd: 0.5 * 1.3f64.powi(i),
            output_type: match i % 3 {
                0 => OutputType::Absolute,
                1 => OutputType::Relative,
                _ => OutputType::Disparity,
            },
            strategy: strategies[i as usize % strategies.len()],
            backbone: backbones[i as usize % backbones.len()],
            dataset_tags: tags[i as usize % tags.len()].iter().map(|t| t.to_string()).collect(),
        })
        .collect()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("synth spec: {m}")));
        if self.scenes == 0 || self.points_per_scene == 0 {
            return bad("needs at least one scene and one point per scene");
        }
        if self.observers_per_scene < 2 {
            return bad("observers_per_scene must be at least 2");
        }
        if self.scenes_per_cohort == 0 {
            return bad("scenes_per_cohort must be positive");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)");
        }
        if !(self.observer_noise_sd >= 0.0) || !(self.shared_residual_sd >= 0.0) {
            return bad("standard deviations must be non-negative");
        }
        let sd = &self.shared_bias_sd;
        if [sd.a_z, sd.b, sd.a_x, sd.a_y].iter().any(|v| !(*v >= 0.0)) {
            return bad("shared_bias_sd entries must be non-negative");
        }
        if !(self.gt_depth.min > 0.0 && self.gt_depth.min < self.gt_depth.max) {
            return bad("gt depth range must satisfy 0 < min < max");
        }
        if self.image_width < 3 || self.image_height < 3 {
            return bad("image must be at least 3x3");
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            if !ids.insert(m.model_id.as_str()) {
                return bad("duplicate model id");
            }
            if !(m.noise_sd >= 0.0) {
                return bad("model noise must be non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub scene_id: String,
    pub params: AffineParams,
    pub cohort_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTruth {
    pub model_id: String,
    pub human_weight: f64,
    pub noise_sd: f64,
    pub output_type: OutputType,
    /// Per-scene `(alpha, beta)` applied to produce relative or disparity
    /// outputs; empty for absolute outputs.
    pub output_transform: Vec<(f64, f64)>,
}

/// Every planted value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SynthSpec,
    pub scenes: Vec<SceneTruth>,
    /// Shared residual per point, in point order.
    pub shared_residual: Vec<f64>,
    pub outlier_observers: Vec<String>,
    pub genuine_observers: Vec<String>,
    pub models: Vec<ModelTruth>,
    /// Expected human–human similarity from the planted shared variance
    /// and the noise of a half of the genuine observers.
    pub expected_human_similarity: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub points: PointSet,
    pub responses: ResponseTable,
    pub models: Vec<ModelMeta>,
    pub predictions: Vec<(String, ResponseTable)>,
    pub truth: Truth,
}

fn draw_depth<R: Rng>(rng: &mut R, g: &GtDepth) -> f64 {
    match g.distribution {
        DepthDistribution::Uniform => rng.random_range(g.min..=g.max),
        DepthDistribution::LogUniform => rng.random_range(g.min.ln()..=g.max.ln()).exp(),
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

fn draw_params<R: Rng>(rng: &mut R, mean: &AffineParams, sd: &AffineParams) -> AffineParams {
    let mut a_z = mean.a_z + normal(sd.a_z).sample(rng);
    let mut tries = 0;
    while a_z <= 0.0 && tries < 1000 {
        a_z = mean.a_z + normal(sd.a_z).sample(rng);
        tries += 1;
    }
    AffineParams {
        a_z: a_z.max(crate::affine::A_Z_FLOOR),
        b: mean.b + normal(sd.b).sample(rng),
        a_x: mean.a_x + normal(sd.a_x).sample(rng),
        a_y: mean.a_y + normal(sd.a_y).sample(rng),
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let seed = spec.seed;

    let mut rng = rng::stream(seed, "synth-points", b"");
    let mut pts = Vec::with_capacity(spec.scenes * spec.points_per_scene);
    let margin_x = (spec.image_width / 60).max(1);
    let margin_y = (spec.image_height / 20).max(1);
    for s in 0..spec.scenes {
        for p in 0..spec.points_per_scene {
            let x = rng.random_range(margin_x..spec.image_width - margin_x);
            let y = rng.random_range(margin_y..spec.image_height - margin_y);
            pts.push(EvaluationPoint {
                scene_id: format!("scene{s:04}"),
                point_id: p as u32,
                group_id: (p / 4) as u32,
                px_raw: x as u32,
                py_raw: y as u32,
                px_norm: normalize_coord(x, spec.image_width),
                py_norm: normalize_coord(y, spec.image_height),
                gt_depth: draw_depth(&mut rng, &spec.gt_depth),
            });
        }
    }
    let points = PointSet::new(pts)?;

    let mut rng = rng::stream(seed, "synth-bias", b"");
    let mut scenes = Vec::with_capacity(points.scene_count());
    for (k, (scene_id, _)) in points.scenes().iter().enumerate() {
        scenes.push(SceneTruth {
            scene_id: scene_id.clone(),
            params: draw_params(&mut rng, &spec.shared_bias_mean, &spec.shared_bias_sd),
            cohort_id: format!("c{:03}", k / spec.scenes_per_cohort),
        });
    }
    let shared_residual: Vec<f64> = (0..points.len())
        .map(|_| normal(spec.shared_residual_sd).sample(&mut rng))
        .collect();

    // Noise-free human estimate per point.
    let mut clean = vec![0.0; points.len()];
    for ((_, range), st) in points.scenes().iter().zip(&scenes) {
        let a = &st.params;
        for i in range.clone() {
            let p = &points.points()[i];
            clean[i] = a.a_z * p.gt_depth + a.a_x * p.px_norm + a.a_y * p.py_norm + a.b
                + shared_residual[i];
        }
    }

    let mut rng = rng::stream(seed, "synth-observers", b"");
    let noise = normal(spec.observer_noise_sd);
    let mut records = Vec::new();
    let mut outliers = Vec::new();
    let mut genuine = Vec::new();
    let n_out = (spec.outlier_fraction * spec.observers_per_scene as f64).round() as usize;
    let cohorts: Vec<(String, Vec<usize>)> = {
        let mut v: Vec<(String, Vec<usize>)> = Vec::new();
        for (k, st) in scenes.iter().enumerate() {
            match v.last_mut() {
                Some((c, ks)) if *c == st.cohort_id => ks.push(k),
                _ => v.push((st.cohort_id.clone(), vec![k])),
            }
        }
        v
    };
    for (cohort, scene_idx) in &cohorts {
        let ids: Vec<String> = (0..spec.observers_per_scene)
            .map(|o| format!("{cohort}-o{o:03}"))
            .collect();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.shuffle(&mut rng);
        let is_outlier: BTreeSet<usize> = order[..n_out].iter().copied().collect();
        for (o, id) in ids.iter().enumerate() {
            let out = is_outlier.contains(&o);
            if out {
                outliers.push(id.clone());
            } else {
                genuine.push(id.clone());
            }
            for &k in scene_idx {
                for i in points.scenes()[k].1.clone() {
                    let p = &points.points()[i];
                    let estimate = if out {
                        rng.random_range(spec.gt_depth.min..=spec.gt_depth.max)
                    } else if spec.observer_noise_sd > 0.0 {
                        (clean[i] + noise.sample(&mut rng)).max(0.0)
                    } else {
                        clean[i].max(0.0)
                    };
                    records.push(ResponseRecord {
                        observer_id: id.clone(),
                        scene_id: p.scene_id.clone(),
                        point_id: p.point_id,
                        estimate,
                    });
                }
            }
        }
    }
    let responses = ResponseTable::new(ObserverKind::Human, OutputType::Absolute, records)?;

    let mut metas = Vec::with_capacity(spec.models.len());
    let mut predictions = Vec::with_capacity(spec.models.len());
    let mut model_truth = Vec::with_capacity(spec.models.len());
    for m in &spec.models {
        let mut rng = rng::stream(seed, "synth-model", m.model_id.as_bytes());
        let m_noise = normal(m.noise_sd);
        let mut transform = Vec::new();
        let mut records = Vec::with_capacity(points.len());
        for (_, range) in points.scenes() {
            let (alpha, beta) = match m.output_type {
                OutputType::Absolute => (1.0, 0.0),
                OutputType::Relative => (rng.random_range(0.2..5.0), rng.random_range(-5.0..5.0)),
                OutputType::Disparity => (rng.random_range(0.5..2.0), 0.0),
            };
            if m.output_type != OutputType::Absolute {
                transform.push((alpha, beta));
            }
            for i in range.clone() {
                let p = &points.points()[i];
                let depth = p.gt_depth
                    + m.human_weight * (clean[i] - p.gt_depth)
                    + if m.noise_sd > 0.0 { m_noise.sample(&mut rng) } else { 0.0 };
                let depth = depth.max(0.5);
                let value = match m.output_type {
                    OutputType::Absolute => depth,
                    OutputType::Relative => alpha * depth + beta,
                    OutputType::Disparity => alpha / depth,
                };
                records.push(ResponseRecord {
                    observer_id: m.model_id.clone(),
                    scene_id: p.scene_id.clone(),
                    point_id: p.point_id,
                    estimate: value,
                });
            }
        }
        predictions.push((
            m.model_id.clone(),
            ResponseTable::new(ObserverKind::Model, m.output_type, records)?,
        ));
        metas.push(ModelMeta {
            model_id: m.model_id.clone(),
            strategy: m.strategy,
            backbone: m.backbone,
            dataset_tags: m.dataset_tags.clone(),
            param_count: 1_000_000 * (1 + m.model_id.len() as u64),
            output_type: m.output_type,
            depth_range: (0.0, spec.gt_depth.max),
        });
        model_truth.push(ModelTruth {
            model_id: m.model_id.clone(),
            human_weight: m.human_weight,
            noise_sd: m.noise_sd,
            output_type: m.output_type,
            output_transform: transform,
        });
    }

    let expected_human_similarity =
        expected_similarity(&clean, &points, spec.observer_noise_sd, spec.observers_per_scene - n_out);

    Ok(SynthData {
        points,
        responses,
        models: metas,
        predictions,
        truth: Truth {
            spec: spec.clone(),
            scenes,
            shared_residual,
            outlier_observers: outliers,
            genuine_observers: genuine,
            models: model_truth,
            expected_human_similarity,
        },
    })
}

/// `S / (S + (n - 2) σ² / m)`, with `S` the squared norm of the noise-free
/// human field after removing its `[1, z_gt]` fit and `m` observers per half.
fn expected_similarity(clean: &[f64], points: &PointSet, noise_sd: f64, observers: usize) -> f64 {
    let Ok(ctrl) = ControlResidualizer::new(&points.gt()) else {
        return f64::NAN;
    };
    let Ok(resid) = ctrl.residualize(clean) else {
        return f64::NAN;
    };
    let s: f64 = resid.iter().map(|v| v * v).sum();
    let m = observers as f64 / 2.0;
    let noise = (points.len() as f64 - 2.0) * noise_sd * noise_sd / m;
    s / (s + noise)
}

/// Paths written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub manifest: PathBuf,
    pub truth: PathBuf,
}

/// Writes points, responses, models, per-model predictions, `truth.json`
/// and a run manifest pointing at them into `dir`.
pub fn write_synth(data: &SynthData, dir: &Path, provenance: &Provenance) -> Result<SynthFiles> {
    let prov = Some(provenance);
    io::write_points(&dir.join("points.csv"), data.points.points(), prov)?;
    io::write_responses(&dir.join("responses.csv"), &data.responses, prov)?;
    io::write_text(&dir.join("models.csv"), &io::models_to_csv(&data.models, prov))?;
    for (id, table) in &data.predictions {
        io::write_responses(&dir.join("predictions").join(format!("{id}.csv")), table, prov)?;
    }
    let truth = dir.join("truth.json");
    let mut text = serde_json::to_string_pretty(&data.truth)?;
    text.push('\n');
    io::write_text(&truth, &text)?;
    let manifest = Manifest {
        points: Some("points.csv".into()),
        responses: Some("responses.csv".into()),
        models: Some("models.csv".into()),
        predictions_dir: Some("predictions".into()),
        out_dir: Some("out".into()),
        seed: data.truth.spec.seed,
        ..Manifest::default()
    };
    let manifest_path = dir.join("manifest.json");
    io::write_text(&manifest_path, &io::manifest_to_json(&manifest))?;
    Ok(SynthFiles {
        manifest: manifest_path,
        truth,
    })
}

pub fn load_truth(path: &Path) -> Result<Truth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
