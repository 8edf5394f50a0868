//! Evaluation-point sampling under spacing, border and segmentation-edge
//! constraints.
//!
//! Points are drawn one at a time from the pixels that already satisfy the
//! border, edge-distance and valid-depth rules. A draw that lands too close
//! to a point of its own group triggers a ring search around it (same
//! segment only); if that fails the whole attempt restarts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_coord, EvaluationPoint, LabelMap, Scene};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Minimum separation between points of one group, applied to both the
    /// horizontal and the vertical offset.
    pub min_pair_sep: usize,
    pub border_margin: usize,
    /// Minimum Chebyshev distance to a segmentation boundary pixel.
    pub boundary_margin: usize,
    pub points_per_group: usize,
    pub groups: usize,
    pub max_restarts: usize,
    /// Chebyshev radius of the ring search around a rejected draw.
    pub search_radius: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            min_pair_sep: 20,
            border_margin: 20,
            boundary_margin: 5,
            points_per_group: 4,
            groups: 4,
            max_restarts: 1000,
            search_radius: 50,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn total_points(&self) -> usize {
        self.points_per_group * self.groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// (A) same-group points too close horizontally or vertically.
    PairSeparation,
    /// (B) too close to the image border.
    Border,
    /// (C) too close to a segmentation boundary.
    Boundary,
    InvalidGroundTruth,
    OutOfImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    /// Offending point ids.
    pub points: Vec<u32>,
}

/// Boundary pixels have at least one 4-neighbour with a different label.
pub fn is_boundary(labels: &LabelMap, x: usize, y: usize) -> bool {
    let l = labels.label(x, y);
    (x > 0 && labels.label(x - 1, y) != l)
        || (x + 1 < labels.width() && labels.label(x + 1, y) != l)
        || (y > 0 && labels.label(x, y - 1) != l)
        || (y + 1 < labels.height() && labels.label(x, y + 1) != l)
}

/// Chebyshev distance from every pixel to the nearest boundary pixel
/// (`u32::MAX` when the map has a single segment). Two-pass chamfer with
/// unit weights on all eight neighbours, which is exact for this metric.
pub fn boundary_distance(labels: &LabelMap) -> Vec<u32> {
    let (w, h) = (labels.width(), labels.height());
    let mut d = vec![u32::MAX; w * h];
    for y in 0..h {
        for x in 0..w {
            if is_boundary(labels, x, y) {
                d[y * w + x] = 0;
            }
        }
    }
    let relax = |d: &mut Vec<u32>, x: usize, y: usize, nx: isize, ny: isize| {
        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
            return;
        }
        let n = d[ny as usize * w + nx as usize];
        if n != u32::MAX && n + 1 < d[y * w + x] {
            d[y * w + x] = n + 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0)] {
                relax(&mut d, x, y, xi + dx, yi + dy);
            }
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let (xi, yi) = (x as isize, y as isize);
            for (dx, dy) in [(1, 1), (0, 1), (-1, 1), (1, 0)] {
                relax(&mut d, x, y, xi + dx, yi + dy);
            }
        }
    }
    d
}

fn border_ok(x: usize, y: usize, w: usize, h: usize, margin: usize) -> bool {
    x >= margin && y >= margin && x + margin < w && y + margin < h
}

fn separated(a: (usize, usize), b: (usize, usize), sep: usize) -> bool {
    a.0.abs_diff(b.0) >= sep && a.1.abs_diff(b.1) >= sep
}

/// Pixels of the ring at Chebyshev radius `r` around `(cx, cy)`, clockwise
/// from the top-left corner, clipped to the image.
fn ring(cx: usize, cy: usize, r: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (cx, cy, r) = (cx as isize, cy as isize, r as isize);
    let top = (-r..=r).map(move |dx| (cx + dx, cy - r));
    let right = (-r + 1..=r).map(move |dy| (cx + r, cy + dy));
    let bottom = (-r..r).rev().map(move |dx| (cx + dx, cy + r));
    let left = (-r + 1..r).rev().map(move |dy| (cx - r, cy + dy));
    top.chain(right)
        .chain(bottom)
        .chain(left)
        .filter(move |&(x, y)| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
        .map(|(x, y)| (x as usize, y as usize))
}

/// Draws `groups × points_per_group` points. Deterministic in
/// `(scene, cfg)`; the random stream is keyed by the scene id.
pub fn sample_points(scene: &Scene, cfg: &SamplerConfig) -> Result<Vec<EvaluationPoint>> {
    let labels = scene
        .segmentation
        .as_ref()
        .ok_or_else(|| Error::MissingSegmentation(scene.scene_id.clone()))?;
    let (w, h) = (scene.width(), scene.height());
    let total = cfg.total_points();
    if total == 0 {
        return Err(Error::Invalid("sampler asks for zero points".into()));
    }

    let dist = boundary_distance(labels);
    let mut legal = vec![false; w * h];
    let mut pool = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if scene.ground_truth.is_valid(x, y)
                && border_ok(x, y, w, h, cfg.border_margin)
                && dist[i] >= cfg.boundary_margin as u32
            {
                legal[i] = true;
                pool.push((x, y));
            }
        }
    }

    let mut rng = rng::stream(cfg.seed, "sample-points", scene.scene_id.as_bytes());
    let mut best = 0;
    for _ in 0..cfg.max_restarts.max(1) {
        if pool.is_empty() {
            break;
        }
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(total);
        while chosen.len() < total {
            let group_start = chosen.len() / cfg.points_per_group * cfg.points_per_group;
            let acceptable = |p: (usize, usize), chosen: &[(usize, usize)]| {
                !chosen.contains(&p)
                    && chosen[group_start..]
                        .iter()
                        .all(|&q| separated(p, q, cfg.min_pair_sep))
            };
            let cand = pool[rng.random_range(0..pool.len())];
            let pick = if acceptable(cand, &chosen) {
                Some(cand)
            } else {
                let segment = labels.label(cand.0, cand.1);
                (1..=cfg.search_radius)
                    .flat_map(|r| ring(cand.0, cand.1, r, w, h))
                    .find(|&(x, y)| {
                        legal[y * w + x]
                            && labels.label(x, y) == segment
                            && acceptable((x, y), &chosen)
                    })
            };
            match pick {
                Some(p) => chosen.push(p),
                None => break,
            }
        }
        best = best.max(chosen.len());
        if chosen.len() == total {
            return Ok(chosen
                .into_iter()
                .enumerate()
                .map(|(i, (x, y))| EvaluationPoint {
                    scene_id: scene.scene_id.clone(),
                    point_id: i as u32,
                    group_id: (i / cfg.points_per_group) as u32,
                    px_raw: x as u32,
                    py_raw: y as u32,
                    px_norm: normalize_coord(x, w),
                    py_norm: normalize_coord(y, h),
                    gt_depth: scene.ground_truth.get(x, y).expect("legal pixels are valid"),
                })
                .collect());
        }
    }
    Err(Error::SamplingExhausted {
        restarts: cfg.max_restarts,
        best,
    })
}

/// Lists every rule the point set breaks. Boundary distance is checked by
/// direct neighbourhood scan, independently of the sampler's distance
/// transform.
pub fn check_constraints(
    points: &[EvaluationPoint],
    scene: &Scene,
    cfg: &SamplerConfig,
) -> Vec<Violation> {
    let (w, h) = (scene.width(), scene.height());
    let mut out = Vec::new();
    let mut inside = Vec::new();
    for p in points {
        let (x, y) = (p.px_raw as usize, p.py_raw as usize);
        if x >= w || y >= h {
            out.push(Violation {
                rule: Rule::OutOfImage,
                points: vec![p.point_id],
            });
            continue;
        }
        inside.push(p);
        if !scene.ground_truth.is_valid(x, y) {
            out.push(Violation {
                rule: Rule::InvalidGroundTruth,
                points: vec![p.point_id],
            });
        }
        if !border_ok(x, y, w, h, cfg.border_margin) {
            out.push(Violation {
                rule: Rule::Border,
                points: vec![p.point_id],
            });
        }
        if let Some(labels) = &scene.segmentation {
            let m = cfg.boundary_margin;
            let near_edge = (y.saturating_sub(m.saturating_sub(1))..(y + m).min(h))
                .flat_map(|yy| {
                    (x.saturating_sub(m.saturating_sub(1))..(x + m).min(w)).map(move |xx| (xx, yy))
                })
                .any(|(xx, yy)| m > 0 && is_boundary(labels, xx, yy));
            if near_edge {
                out.push(Violation {
                    rule: Rule::Boundary,
                    points: vec![p.point_id],
                });
            }
        }
    }
    for (i, a) in inside.iter().enumerate() {
        for b in &inside[i + 1..] {
            if a.group_id == b.group_id
                && !separated(
                    (a.px_raw as usize, a.py_raw as usize),
                    (b.px_raw as usize, b.py_raw as usize),
                    cfg.min_pair_sep,
                )
            {
                out.push(Violation {
                    rule: Rule::PairSeparation,
                    points: vec![a.point_id, b.point_id],
                });
            }
        }
    }
    out
}
