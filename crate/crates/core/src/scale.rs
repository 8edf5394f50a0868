//! Per-scene scale and shift alignment of model outputs to metric depth.
//!
//! Each scene's outputs are regressed against ground truth (`z_gt ≈ s z + t`)
//! over its evaluation points. Disparity outputs are regressed against
//! `1 / z_gt` instead, negative aligned disparities are clipped to zero, and
//! the result is inverted, with anything beyond `depth_cap` mapped to the
//! cap.

use std::fmt::Write as _;

use crate::data::{OutputType, PointEstimates, PointSet};
use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::numeric::{compensated_sum, rmse};
use crate::par;
use crate::stats::simple_linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpace {
    Depth,
    Disparity,
}

impl TargetSpace {
    pub fn for_output(output_type: OutputType) -> Self {
        match output_type {
            OutputType::Disparity => TargetSpace::Disparity,
            OutputType::Absolute | OutputType::Relative => TargetSpace::Depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFit {
    pub scene_id: String,
    pub s_star: f64,
    pub t_star: f64,
    pub target_space: TargetSpace,
}

#[derive(Debug, Clone, Default)]
pub struct ScaleRecovery {
    /// Pseudo-absolute depth for every point of every retained scene.
    pub aligned: PointEstimates,
    pub fits: Vec<ScaleFit>,
    /// Scenes whose outputs were constant.
    pub dropped: Vec<String>,
    /// Retained scenes with a negative fitted scale.
    pub negative_scale: Vec<String>,
}

/// Aligns one scene. Returns `(s*, t*, aligned depths)`.
pub fn align_scene(
    outputs: &[f64],
    gt: &[f64],
    space: TargetSpace,
    depth_cap: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    match space {
        TargetSpace::Depth => {
            let (s, t) = simple_linear_fit(outputs, gt)?;
            Ok((s, t, outputs.iter().map(|z| s * z + t).collect()))
        }
        TargetSpace::Disparity => {
            let target: Vec<f64> = gt.iter().map(|z| 1.0 / z).collect();
            let (s, t) = simple_linear_fit(outputs, &target)?;
            let floor = 1.0 / depth_cap;
            let depth = outputs
                .iter()
                .map(|d| {
                    let disp = (s * d + t).max(0.0);
                    if disp < floor {
                        depth_cap
                    } else {
                        1.0 / disp
                    }
                })
                .collect();
            Ok((s, t, depth))
        }
    }
}

/// Aligns every scene of `points`. `estimates` is laid out in point order.
pub fn recover_scale(
    estimates: &[f64],
    points: &PointSet,
    output_type: OutputType,
    depth_cap: f64,
) -> Result<ScaleRecovery> {
    if estimates.len() != points.len() {
        return Err(Error::Invalid(format!(
            "{} estimates for {} points",
            estimates.len(),
            points.len()
        )));
    }
    if points.points().iter().any(|p| p.gt_depth <= 0.0) {
        return Err(Error::Invalid(
            "scale recovery needs positive ground truth".into(),
        ));
    }
    let space = TargetSpace::for_output(output_type);
    let per_scene = par::map_slice(points.scenes(), |(scene_id, range)| {
        let gt: Vec<f64> = points.points()[range.clone()]
            .iter()
            .map(|p| p.gt_depth)
            .collect();
        (
            scene_id.clone(),
            range.clone(),
            align_scene(&estimates[range.clone()], &gt, space, depth_cap),
        )
    });

    let mut out = ScaleRecovery::default();
    for (scene_id, range, result) in per_scene {
        match result {
            Ok((s, t, aligned)) => {
                for (p, v) in points.points()[range].iter().zip(aligned) {
                    out.aligned
                        .insert(crate::data::PointKey::new(p.scene_id.clone(), p.point_id), v);
                }
                if s < 0.0 {
                    out.negative_scale.push(scene_id.clone());
                }
                out.fits.push(ScaleFit {
                    scene_id,
                    s_star: s,
                    t_star: t,
                    target_space: space,
                });
            }
            Err(Error::RankDeficient { .. }) => out.dropped.push(scene_id),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// RMSE of scale-recovered estimates against ground truth over all points.
pub fn ssi_rmse(
    estimates: &[f64],
    points: &PointSet,
    output_type: OutputType,
    depth_cap: f64,
) -> Result<f64> {
    let rec = recover_scale(estimates, points, output_type, depth_cap)?;
    if !rec.dropped.is_empty() {
        return Err(Error::RankDeficient { columns: vec![0] });
    }
    let aligned = points.align(&rec.aligned)?;
    Ok(rmse(&aligned, &points.gt()))
}

pub fn raw_rmse(estimates: &[f64], points: &PointSet, output_type: OutputType) -> Result<f64> {
    if output_type != OutputType::Absolute {
        return Err(Error::WrongOutputType(output_type.to_string()));
    }
    if estimates.len() != points.len() || points.is_empty() {
        return Err(Error::Invalid(format!(
            "{} estimates for {} points",
            estimates.len(),
            points.len()
        )));
    }
    Ok(rmse(estimates, &points.gt()))
}

/// Per-scene RMSE, in scene order.
pub fn scene_rmse(values: &[f64], points: &PointSet) -> Vec<(String, f64)> {
    points
        .scenes()
        .iter()
        .map(|(id, range)| {
            let gt: Vec<f64> = points.points()[range.clone()]
                .iter()
                .map(|p| p.gt_depth)
                .collect();
            let ss = compensated_sum(
                values[range.clone()]
                    .iter()
                    .zip(&gt)
                    .map(|(a, b)| (a - b) * (a - b)),
            );
            (id.clone(), (ss / gt.len() as f64).sqrt())
        })
        .collect()
}

/// `scene_id,model_id,s_star,t_star`.
pub fn scale_fits_to_csv(
    rows: &[(String, ScaleFit)],
    provenance: Option<&Provenance>,
) -> String {
    let mut s = String::from("scene_id,model_id,s_star,t_star\n");
    for (model, fit) in rows {
        let _ = writeln!(s, "{},{},{},{}", fit.scene_id, model, fit.s_star, fit.t_star);
    }
    if let Some(p) = provenance {
        s.push_str(&p.footer());
    }
    s
}
