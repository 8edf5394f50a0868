//! Per-image affine decomposition of depth estimates.
//!
//! Within each scene the estimates are fitted as
//! `z_est ≈ a_z z_gt + a_x p_x + a_y p_y + b` with `a_z ≥ A_Z_FLOOR`, where
//! `p_x`, `p_y` are the normalized pixel coordinates. The residual is
//! `z_pred - z_est`. Coefficient and residual series of a subject are then
//! correlated with the human series across scenes.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{EvaluationPoint, PointSet};
use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::numeric::compensated_sum;
use crate::par;
use crate::stats::{ols, pearson, CorrelationStat, OlsOptions};

/// Lower bound on the depth scale.
pub const A_Z_FLOOR: f64 = 1e-6;

/// Largest fraction of rank-deficient scenes `decompose_all` tolerates.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub scene_id: String,
    pub a_z: f64,
    pub b: f64,
    pub a_x: f64,
    pub a_y: f64,
    /// `z_pred - z_est`, in point order.
    pub residuals: Vec<f64>,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    AZ,
    B,
    AX,
    AY,
    Residual,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::AZ,
        Component::B,
        Component::AX,
        Component::AY,
        Component::Residual,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::AZ => "a_z",
            Component::B => "b",
            Component::AX => "a_x",
            Component::AY => "a_y",
            Component::Residual => "residual",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSimilarity {
    pub subject_id: String,
    pub component: Component,
    pub stat: CorrelationStat,
}

/// Fits one scene. `estimates[i]` belongs to `points[i]`.
pub fn fit_affine(estimates: &[f64], points: &[EvaluationPoint]) -> Result<AffineFit> {
    if estimates.len() != points.len() || points.is_empty() {
        return Err(Error::Invalid(format!(
            "{} estimates for {} points",
            estimates.len(),
            points.len()
        )));
    }
    let design = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => points[i].gt_depth,
        1 => points[i].px_norm,
        _ => points[i].py_norm,
    });
    let fit = ols(
        &design,
        estimates,
        &OlsOptions::with_intercept().lower_bound(0, A_Z_FLOOR),
    )?;
    let residuals: Vec<f64> = fit.residuals.iter().map(|r| -r).collect();
    let mean = compensated_sum(estimates.iter().copied()) / estimates.len() as f64;
    let ss_tot = compensated_sum(estimates.iter().map(|v| (v - mean) * (v - mean)));
    let ss_res = compensated_sum(residuals.iter().map(|r| r * r));
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(AffineFit {
        scene_id: points[0].scene_id.clone(),
        a_z: fit.coefficients[0],
        a_x: fit.coefficients[1],
        a_y: fit.coefficients[2],
        b: fit.intercept,
        residuals,
        r2,
    })
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub fits: Vec<AffineFit>,
    pub failed: Vec<String>,
}

/// Fits every scene; rank-deficient scenes are listed in `failed` and left
/// out of the series.
pub fn decompose_all(estimates: &[f64], points: &PointSet) -> Result<Decomposition> {
    if estimates.len() != points.len() {
        return Err(Error::Invalid(format!(
            "{} estimates for {} points",
            estimates.len(),
            points.len()
        )));
    }
    let results = par::map_slice(points.scenes(), |(id, range)| {
        (
            id.clone(),
            fit_affine(&estimates[range.clone()], &points.points()[range.clone()]),
        )
    });
    let mut fits = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(f) => fits.push(f),
            Err(Error::RankDeficient { .. }) => failed.push(id),
            Err(e) => return Err(e),
        }
    }
    let total = points.scene_count();
    if total > 0 && failed.len() as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::DecompositionUnreliable {
            failed: failed.len(),
            total,
        });
    }
    Ok(Decomposition { fits, failed })
}

/// Series for one component; residuals are concatenated in scene, point
/// order.
pub fn component_series(fits: &[AffineFit], component: Component) -> Vec<f64> {
    match component {
        Component::AZ => fits.iter().map(|f| f.a_z).collect(),
        Component::B => fits.iter().map(|f| f.b).collect(),
        Component::AX => fits.iter().map(|f| f.a_x).collect(),
        Component::AY => fits.iter().map(|f| f.a_y).collect(),
        Component::Residual => fits.iter().flat_map(|f| f.residuals.iter().copied()).collect(),
    }
}

/// Restricts two fit lists to their common scenes, in scene order.
pub fn common_scenes<'a>(
    human: &'a [AffineFit],
    subject: &'a [AffineFit],
) -> (Vec<AffineFit>, Vec<AffineFit>) {
    let subj: BTreeMap<&str, &AffineFit> =
        subject.iter().map(|f| (f.scene_id.as_str(), f)).collect();
    let mut h = Vec::new();
    let mut s = Vec::new();
    for f in human {
        if let Some(g) = subj.get(f.scene_id.as_str()) {
            h.push(f.clone());
            s.push((*g).clone());
        }
    }
    (h, s)
}

pub fn component_similarity(
    subject_id: &str,
    human: &[AffineFit],
    subject: &[AffineFit],
    component: Component,
) -> Result<ComponentSimilarity> {
    if human.len() != subject.len()
        || human
            .iter()
            .zip(subject)
            .any(|(a, b)| a.scene_id != b.scene_id || a.residuals.len() != b.residuals.len())
    {
        return Err(Error::SceneMismatch);
    }
    let stat = pearson(
        &component_series(human, component),
        &component_series(subject, component),
    )?;
    Ok(ComponentSimilarity {
        subject_id: subject_id.to_string(),
        component,
        stat,
    })
}

/// RMSE of residuals at points whose ground truth lies in `[min, max]`.
pub fn residual_rmse_in_range(
    fits: &[AffineFit],
    points: &PointSet,
    depth_range: (f64, f64),
) -> Result<f64> {
    let (min, max) = depth_range;
    let mut squares = Vec::new();
    for f in fits {
        let range = points
            .scenes()
            .iter()
            .find(|(id, _)| *id == f.scene_id)
            .map(|(_, r)| r.clone())
            .ok_or(Error::SceneMismatch)?;
        for (p, r) in points.points()[range].iter().zip(&f.residuals) {
            if p.gt_depth >= min && p.gt_depth <= max {
                squares.push(r * r);
            }
        }
    }
    if squares.is_empty() {
        return Err(Error::EmptyRange { min, max });
    }
    Ok((compensated_sum(squares.iter().copied()) / squares.len() as f64).sqrt())
}

/// One subject's fits within a track, for CSV output.
pub struct FitRows<'a> {
    pub subject_id: &'a str,
    pub track: &'a str,
    pub fits: &'a [AffineFit],
}

/// `scene_id,subject_id,track,a_z,b,a_x,a_y,r2`.
pub fn affine_fits_to_csv(rows: &[FitRows<'_>], provenance: Option<&Provenance>) -> String {
    let mut s = String::from("scene_id,subject_id,track,a_z,b,a_x,a_y,r2\n");
    for set in rows {
        for f in set.fits {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                f.scene_id, set.subject_id, set.track, f.a_z, f.b, f.a_x, f.a_y, f.r2
            );
        }
    }
    if let Some(p) = provenance {
        s.push_str(&p.footer());
    }
    s
}

/// `scene_id,point_id,subject_id,track,z_res`. Point ids are taken from
/// `points` in scene order.
pub fn affine_residuals_to_csv(
    rows: &[FitRows<'_>],
    points: &PointSet,
    provenance: Option<&Provenance>,
) -> String {
    let ranges: BTreeMap<&str, std::ops::Range<usize>> = points
        .scenes()
        .iter()
        .map(|(id, r)| (id.as_str(), r.clone()))
        .collect();
    let mut s = String::from("scene_id,point_id,subject_id,track,z_res\n");
    for set in rows {
        for f in set.fits {
            let pts = &points.points()[ranges[f.scene_id.as_str()].clone()];
            for (p, r) in pts.iter().zip(&f.residuals) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    f.scene_id, p.point_id, set.subject_id, set.track, r
                );
            }
        }
    }
    if let Some(p) = provenance {
        s.push_str(&p.footer());
    }
    s
}

/// Reads `affine_fits.csv` and `affine_residuals.csv` back into
/// `(track, subject) -> fits`.
pub fn parse_affine_outputs(
    fits_path: &Path,
    fits_text: &str,
    residuals_path: &Path,
    residuals_text: &str,
) -> Result<BTreeMap<(String, String), Vec<AffineFit>>> {
    let perr = |path: &Path, line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let num = |path: &Path, rec: &csv::StringRecord, i: usize| -> Result<f64> {
        rec.get(i)
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| {
                perr(
                    path,
                    rec.position().map(|p| p.line()).unwrap_or(0),
                    format!("bad number in column {i}"),
                )
            })
    };

    let mut residuals: BTreeMap<(String, String, String), Vec<(u32, f64)>> = BTreeMap::new();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(residuals_text.as_bytes());
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(residuals_path, 0, e.to_string()))?;
        let point: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| perr(residuals_path, 0, "bad point_id".into()))?;
        residuals
            .entry((rec[3].to_string(), rec[2].to_string(), rec[0].to_string()))
            .or_default()
            .push((point, num(residuals_path, &rec, 4)?));
    }

    let mut out: BTreeMap<(String, String), Vec<AffineFit>> = BTreeMap::new();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(fits_text.as_bytes());
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(fits_path, 0, e.to_string()))?;
        let (scene, subject, track) = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string());
        let mut res = residuals
            .remove(&(track.clone(), subject.clone(), scene.clone()))
            .unwrap_or_default();
        res.sort_by_key(|(p, _)| *p);
        out.entry((track, subject)).or_default().push(AffineFit {
            scene_id: scene,
            a_z: num(fits_path, &rec, 3)?,
            b: num(fits_path, &rec, 4)?,
            a_x: num(fits_path, &rec, 5)?,
            a_y: num(fits_path, &rec, 6)?,
            r2: num(fits_path, &rec, 7)?,
            residuals: res.into_iter().map(|(_, v)| v).collect(),
        });
    }
    for fits in out.values_mut() {
        fits.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::simple_linear_fit;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(rng: &mut ChaCha8Rng, id: &str) -> Vec<EvaluationPoint> {
        (0..16u32)
            .map(|i| EvaluationPoint {
                scene_id: id.into(),
                point_id: i,
                group_id: i / 4,
                px_raw: 0,
                py_raw: 0,
                px_norm: rng.random_range(-1.0..1.0),
                py_norm: rng.random_range(-1.0..1.0),
                gt_depth: rng.random_range(2.0..80.0),
            })
            .collect()
    }

    fn planted(pts: &[EvaluationPoint], c: (f64, f64, f64, f64)) -> Vec<f64> {
        pts.iter()
            .map(|p| c.0 * p.gt_depth + c.2 * p.px_norm + c.3 * p.py_norm + c.1)
            .collect()
    }

    #[test]
    fn identity_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = scene(&mut rng, "s");
        let gt: Vec<f64> = pts.iter().map(|p| p.gt_depth).collect();
        let f = fit_affine(&gt, &pts).unwrap();
        assert_abs_diff_eq!(f.a_z, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.b, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.a_x, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.a_y, 0.0, epsilon = 1e-10);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn planted_coefficients_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = scene(&mut rng, "s");
        let est = planted(&pts, (0.8, 5.0, -2.0, 3.0));
        let f = fit_affine(&est, &pts).unwrap();
        assert_abs_diff_eq!(f.a_z, 0.8, epsilon = 1e-9);
        assert_abs_diff_eq!(f.b, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.a_x, -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.a_y, 3.0, epsilon = 1e-9);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-9));
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decreasing_estimates_pin_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = scene(&mut rng, "s");
        let est = planted(&pts, (-0.4, 40.0, 1.0, -1.0));
        let f = fit_affine(&est, &pts).unwrap();
        assert_eq!(f.a_z, A_Z_FLOOR);
        // Reduced-design oracle: fix a_z, regress the remainder on
        // [p_x, p_y, 1] via the closed-form 3x3 normal equations.
        let y: Vec<f64> = pts
            .iter()
            .zip(&est)
            .map(|(p, e)| e - A_Z_FLOOR * p.gt_depth)
            .collect();
        let design = DMatrix::from_fn(16, 2, |i, j| if j == 0 { pts[i].px_norm } else { pts[i].py_norm });
        let reduced = ols(&design, &y, &OlsOptions::with_intercept()).unwrap();
        assert_abs_diff_eq!(f.a_x, reduced.coefficients[0], epsilon = 1e-9);
        assert_abs_diff_eq!(f.a_y, reduced.coefficients[1], epsilon = 1e-9);
        assert_abs_diff_eq!(f.b, reduced.intercept, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_scene_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = scene(&mut rng, "s");
        for p in &mut pts {
            p.px_norm = 0.3 * p.py_norm;
        }
        let est: Vec<f64> = pts.iter().map(|p| p.gt_depth).collect();
        assert!(matches!(
            fit_affine(&est, &pts),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn decompose_all_reports_failures_and_unreliability() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut all = Vec::new();
        for s in 0..40 {
            let mut pts = scene(&mut rng, &format!("s{s:02}"));
            if s == 0 {
                for p in &mut pts {
                    p.gt_depth = 10.0;
                }
            }
            all.extend(pts);
        }
        let set = PointSet::new(all).unwrap();
        let est: Vec<f64> = set.points().iter().map(|p| p.gt_depth + p.px_norm).collect();
        let d = decompose_all(&est, &set).unwrap();
        assert_eq!(d.fits.len(), 39);
        assert_eq!(d.failed, vec!["s00".to_string()]);

        let mut bad = set.points().to_vec();
        for p in bad.iter_mut().filter(|p| p.scene_id <= "s02".to_string()) {
            p.gt_depth = 10.0;
        }
        let bad = PointSet::new(bad).unwrap();
        let est: Vec<f64> = bad.points().iter().map(|p| p.gt_depth + p.px_norm).collect();
        assert!(matches!(
            decompose_all(&est, &bad),
            Err(Error::DecompositionUnreliable { failed: 3, total: 40 })
        ));
    }

    #[test]
    fn gauge_transform_maps_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let pts = scene(&mut rng, "s");
            let est: Vec<f64> = planted(&pts, (0.9, 3.0, -1.0, 2.0))
                .into_iter()
                .map(|v| v + rng.random_range(-3.0..3.0))
                .collect();
            let (alpha, beta) = (rng.random_range(0.1..5.0), rng.random_range(-10.0..10.0));
            let moved: Vec<f64> = est.iter().map(|v| alpha * v + beta).collect();
            let f = fit_affine(&est, &pts).unwrap();
            let g = fit_affine(&moved, &pts).unwrap();
            assert_abs_diff_eq!(g.a_z, alpha * f.a_z, epsilon = 1e-9);
            assert_abs_diff_eq!(g.b, alpha * f.b + beta, epsilon = 1e-9);
            assert_abs_diff_eq!(g.a_x, alpha * f.a_x, epsilon = 1e-9);
            assert_abs_diff_eq!(g.a_y, alpha * f.a_y, epsilon = 1e-9);
            for (a, b) in g.residuals.iter().zip(&f.residuals) {
                assert_abs_diff_eq!(*a, alpha * b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn affine_fit_nests_two_parameter_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pts = scene(&mut rng, "s");
            let est: Vec<f64> = pts
                .iter()
                .map(|p| 0.7 * p.gt_depth + 4.0 + rng.random_range(-5.0..5.0))
                .collect();
            let f = fit_affine(&est, &pts).unwrap();
            let gt: Vec<f64> = pts.iter().map(|p| p.gt_depth).collect();
            let (s, t) = simple_linear_fit(&gt, &est).unwrap();
            let two: f64 = gt.iter().zip(&est).map(|(z, e)| (s * z + t - e).powi(2)).sum();
            let four: f64 = f.residuals.iter().map(|r| r * r).sum();
            assert!(four <= two + 1e-9);
        }
    }

    #[test]
    fn interior_constrained_fit_equals_unconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = scene(&mut rng, "s");
        let est: Vec<f64> = planted(&pts, (0.5, 1.0, 2.0, -3.0))
            .into_iter()
            .map(|v| v + rng.random_range(-1.0..1.0))
            .collect();
        let f = fit_affine(&est, &pts).unwrap();
        let design = DMatrix::from_fn(16, 3, |i, j| match j {
            0 => pts[i].gt_depth,
            1 => pts[i].px_norm,
            _ => pts[i].py_norm,
        });
        let free = ols(&design, &est, &OlsOptions::with_intercept()).unwrap();
        assert_eq!(f.a_z, free.coefficients[0]);
        assert_eq!(f.b, free.intercept);
        let mean: f64 = f.residuals.iter().sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-10);
    }

    fn many_fits(seed: u64, scenes: usize) -> (PointSet, Vec<AffineFit>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = Vec::new();
        for s in 0..scenes {
            all.extend(scene(&mut rng, &format!("s{s:03}")));
        }
        let set = PointSet::new(all).unwrap();
        let est: Vec<f64> = set
            .points()
            .iter()
            .map(|p| 0.8 * p.gt_depth + 3.0 + rng.random_range(-4.0..4.0))
            .collect();
        let fits = decompose_all(&est, &set).unwrap().fits;
        (set, fits)
    }

    #[test]
    fn self_similarity_is_one() {
        let (_, fits) = many_fits(9, 30);
        for c in Component::ALL {
            let s = component_similarity("m", &fits, &fits, c).unwrap();
            assert_abs_diff_eq!(s.stat.r, 1.0, epsilon = 1e-12);
        }
        assert_eq!(component_series(&fits, Component::Residual).len(), 30 * 16);
    }

    #[test]
    fn independent_series_are_uncorrelated_at_null_rate() {
        // Null oracle: two independent N(0,1) series of 328 values; |r|
        // exceeds 0.15 with probability ~0.6%, so at least 95% of 1000
        // trials stay under it.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mk = |rng: &mut ChaCha8Rng| -> Vec<AffineFit> {
            (0..328)
                .map(|i| AffineFit {
                    scene_id: format!("s{i:03}"),
                    a_z: rand_distr::Distribution::sample(&normal, rng),
                    b: 0.0,
                    a_x: 0.0,
                    a_y: 0.0,
                    residuals: vec![],
                    r2: 1.0,
                })
                .collect()
        };
        let below = (0..1000)
            .filter(|_| {
                let a = mk(&mut rng);
                let b = mk(&mut rng);
                component_similarity("m", &a, &b, Component::AZ)
                    .unwrap()
                    .stat
                    .r
                    .abs()
                    < 0.15
            })
            .count();
        assert!(below >= 950, "{below}");
    }

    #[test]
    fn mismatched_scenes_rejected() {
        let (_, fits) = many_fits(11, 5);
        assert!(matches!(
            component_similarity("m", &fits, &fits[1..], Component::B),
            Err(Error::SceneMismatch)
        ));
        let (h, s) = common_scenes(&fits, &fits[1..]);
        assert_eq!(h.len(), 4);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn residual_rmse_ranges() {
        let (set, fits) = many_fits(12, 10);
        let all: Vec<f64> = component_series(&fits, Component::Residual);
        let plain = (all.iter().map(|r| r * r).sum::<f64>() / all.len() as f64).sqrt();
        assert_abs_diff_eq!(
            residual_rmse_in_range(&fits, &set, (0.0, f64::INFINITY)).unwrap(),
            plain,
            epsilon = 1e-12
        );
        // filter oracle
        let near: Vec<f64> = set
            .points()
            .iter()
            .zip(&all)
            .filter(|(p, _)| p.gt_depth <= 10.0)
            .map(|(_, r)| *r)
            .collect();
        let oracle = (near.iter().map(|r| r * r).sum::<f64>() / near.len() as f64).sqrt();
        assert_abs_diff_eq!(
            residual_rmse_in_range(&fits, &set, (0.0, 10.0)).unwrap(),
            oracle,
            epsilon = 1e-12
        );
        assert!(matches!(
            residual_rmse_in_range(&fits, &set, (200.0, 300.0)),
            Err(Error::EmptyRange { .. })
        ));
    }

    #[test]
    fn zero_residuals_give_zero_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts = scene(&mut rng, "s");
        let set = PointSet::new(pts.clone()).unwrap();
        let f = fit_affine(&planted(&pts, (1.0, 0.0, 0.0, 0.0)), &pts).unwrap();
        assert!(residual_rmse_in_range(&[f], &set, (0.0, 80.0)).unwrap() < 1e-10);
    }

    #[test]
    fn csv_roundtrip() {
        let (set, fits) = many_fits(14, 3);
        let rows = [FitRows {
            subject_id: "human",
            track: "absolute",
            fits: &fits,
        }];
        let a = affine_fits_to_csv(&rows, None);
        let r = affine_residuals_to_csv(&rows, &set, None);
        let back = parse_affine_outputs(Path::new("a"), &a, Path::new("r"), &r).unwrap();
        let got = &back[&("absolute".to_string(), "human".to_string())];
        assert_eq!(got, &fits);
    }
}
