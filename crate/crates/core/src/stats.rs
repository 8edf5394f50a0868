//! Least squares with lower bounds, Pearson/Spearman correlation and
//! partial correlation with two-tailed Student-t p-values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Relative size below which a QR pivot marks a column as dependent.
const RANK_TOL: f64 = 1e-10;

/// Residual norm, relative to the centered input norm, below which a
/// residualized series counts as degenerate.
const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// One per design column, in design order.
    pub coefficients: Vec<f64>,
    /// 0 when the fit has no intercept.
    pub intercept: f64,
    /// `target - fitted`.
    pub residuals: Vec<f64>,
    pub design_rank: usize,
    /// Design columns whose coefficient sits on its lower bound.
    pub at_bound: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OlsOptions {
    pub intercept: bool,
    /// `(column, lower bound)` pairs.
    pub lower_bounds: Vec<(usize, f64)>,
}

impl OlsOptions {
    pub fn with_intercept() -> Self {
        Self {
            intercept: true,
            lower_bounds: Vec::new(),
        }
    }

    pub fn lower_bound(mut self, column: usize, bound: f64) -> Self {
        self.lower_bounds.push((column, bound));
        self
    }
}

/// Least squares of `target` on `design` (plus an optional intercept), with
/// optional lower bounds on selected coefficients.
///
/// Bounded problems are solved with a Lawson-Hanson active set: bounded
/// coefficients start pinned, free columns are fitted, and pinned columns
/// are released while their gradient points into the feasible region. The
/// result is exact at the bound and coincides with the unconstrained fit
/// whenever that fit is feasible.
pub fn ols(design: &DMatrix<f64>, target: &[f64], opts: &OlsOptions) -> Result<OlsFit> {
    let n = design.nrows();
    let k = design.ncols();
    if target.len() != n {
        return Err(Error::Invalid(format!(
            "design has {n} rows, target has {}",
            target.len()
        )));
    }
    for &(c, b) in &opts.lower_bounds {
        if c >= k || !b.is_finite() {
            return Err(Error::Invalid(format!("bad lower bound ({c}, {b})")));
        }
    }

    let m = k + usize::from(opts.intercept);
    let mut x = DMatrix::zeros(n, m);
    x.columns_mut(0, k).copy_from(design);
    if opts.intercept {
        x.column_mut(k).fill(1.0);
    }
    let y = DVector::from_column_slice(target);

    let mut lower = vec![None; m];
    for &(c, b) in &opts.lower_bounds {
        lower[c] = Some(lower[c].map_or(b, |prev: f64| prev.max(b)));
    }

    // Identically zero columns carry no information; they get their bound
    // (or 0) and are left out of the solve.
    let nonzero: Vec<usize> = (0..m).filter(|&j| x.column(j).norm() > 0.0).collect();
    if n < nonzero.len() {
        return Err(Error::InsufficientData {
            needed: nonzero.len(),
            got: n,
        });
    }
    check_rank(&x, &nonzero)?;
    let design_rank = nonzero.len();

    let mut coef = vec![0.0; m];
    for j in 0..m {
        if !nonzero.contains(&j) {
            coef[j] = lower[j].map_or(0.0, |b| b.max(0.0));
        }
    }

    let unconstrained = solve_subset(&x, &y, &nonzero, &[], &coef);
    let feasible = nonzero
        .iter()
        .zip(&unconstrained)
        .all(|(&j, &v)| lower[j].is_none_or(|b| v >= b));
    let mut at_bound = Vec::new();
    if feasible {
        for (&j, &v) in nonzero.iter().zip(&unconstrained) {
            coef[j] = v;
        }
    } else {
        active_set(&x, &y, &nonzero, &lower, &mut coef);
        at_bound = nonzero
            .iter()
            .copied()
            .filter(|&j| lower[j].is_some_and(|b| coef[j] == b))
            .collect();
    }

    let fitted = &x * DVector::from_column_slice(&coef);
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let intercept = if opts.intercept { coef[k] } else { 0.0 };
    coef.truncate(k);
    at_bound.retain(|&j| j < k);
    Ok(OlsFit {
        coefficients: coef,
        intercept,
        residuals,
        design_rank,
        at_bound,
    })
}

fn check_rank(x: &DMatrix<f64>, cols: &[usize]) -> Result<()> {
    if cols.is_empty() {
        return Ok(());
    }
    let sub = x.select_columns(cols);
    let r = sub.clone().qr().r();
    let dependent: Vec<usize> = (0..cols.len())
        .filter(|&i| r[(i, i)].abs() <= RANK_TOL * sub.column(i).norm())
        .map(|i| cols[i])
        .collect();
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient {
            columns: dependent,
        })
    }
}

/// Least squares over the `free` columns with every column in `fixed` held at
/// its value in `coef`. Returns values for `free`, in order.
fn solve_subset(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    free: &[usize],
    fixed: &[usize],
    coef: &[f64],
) -> Vec<f64> {
    let mut rhs = y.clone();
    for &j in fixed {
        rhs.axpy(-coef[j], &x.column(j), 1.0);
    }
    if free.is_empty() {
        return Vec::new();
    }
    let sub = x.select_columns(free);
    let qr = sub.qr();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let head = rhs.rows(0, free.len()).into_owned();
    r.solve_upper_triangular(&head)
        .expect("full-rank design checked before solving")
        .iter()
        .copied()
        .collect()
}

fn active_set(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cols: &[usize],
    lower: &[Option<f64>],
    coef: &mut [f64],
) {
    let mut passive: Vec<usize> = cols.iter().copied().filter(|&j| lower[j].is_none()).collect();
    let mut active: Vec<usize> = cols.iter().copied().filter(|&j| lower[j].is_some()).collect();
    for &j in &active {
        coef[j] = lower[j].unwrap();
    }
    let z = solve_subset(x, y, &passive, &active, coef);
    for (&j, v) in passive.iter().zip(z) {
        coef[j] = v;
    }

    let scale = x.norm() * y.norm().max(1.0);
    let grad_tol = 1e-12 * scale;
    let max_outer = 3 * cols.len() + 10;
    for _ in 0..max_outer {
        let resid = y - x * DVector::from_column_slice(coef);
        let best = active
            .iter()
            .map(|&j| (j, x.column(j).dot(&resid)))
            .filter(|&(_, g)| g > grad_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((enter, _)) = best else { break };
        active.retain(|&j| j != enter);
        passive.push(enter);
        passive.sort_unstable();

        for _ in 0..max_outer {
            let z = solve_subset(x, y, &passive, &active, coef);
            let violating: Vec<(usize, f64)> = passive
                .iter()
                .zip(&z)
                .filter_map(|(&j, &v)| lower[j].filter(|&b| v <= b).map(|_| (j, v)))
                .collect();
            if violating.is_empty() {
                for (&j, v) in passive.iter().zip(z) {
                    coef[j] = v;
                }
                break;
            }
            let alpha = violating
                .iter()
                .map(|&(j, v)| {
                    let b = lower[j].unwrap();
                    let denom = coef[j] - v;
                    if denom > 0.0 {
                        ((coef[j] - b) / denom).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .fold(1.0, f64::min);
            for (&j, v) in passive.iter().zip(&z) {
                coef[j] += alpha * (v - coef[j]);
            }
            let mut moved = false;
            passive.retain(|&j| match lower[j] {
                Some(b) if coef[j] <= b + 1e-14 * b.abs().max(1.0) => {
                    coef[j] = b;
                    active.push(j);
                    moved = true;
                    false
                }
                _ => true,
            });
            if !moved {
                // Numerical stall: pin the worst offender.
                let (j, _) = violating
                    .iter()
                    .copied()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                passive.retain(|&p| p != j);
                coef[j] = lower[j].unwrap();
                active.push(j);
            }
            active.sort_unstable();
        }
    }
}

/// Closed-form simple regression `y ≈ slope * x + intercept`.
pub fn simple_linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let spread = x.iter().fold(0.0f64, |m, v| m.max((v - mx).abs()));
    if sxx <= 0.0 || spread <= RANK_TOL * mx.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient { columns: vec![0] });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStat {
    pub r: f64,
    pub n: usize,
    /// Two-tailed.
    pub p_value: f64,
}

/// Two-tailed p-value of a correlation coefficient under the Student-t null
/// with `df` degrees of freedom.
///
/// With `t = r sqrt(df / (1 - r²))`, `P(|T| ≥ |t|) = I_{1-r²}(df/2, 1/2)`.
pub fn correlation_p_value(r: f64, df: usize) -> f64 {
    if df == 0 {
        return f64::NAN;
    }
    let one_minus = (1.0 - r * r).max(0.0);
    if one_minus == 0.0 {
        return 0.0;
    }
    statrs::function::beta::beta_reg(df as f64 / 2.0, 0.5, one_minus.min(1.0)).clamp(0.0, 1.0)
}

/// Product-moment correlation without a p-value. Requires two non-constant
/// series of equal length ≥ 2.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::ZeroVariance);
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let syy = compensated_sum(y.iter().map(|v| (v - my) * (v - my)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationStat> {
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: x.len(),
        });
    }
    let r = pearson_r(x, y)?;
    Ok(CorrelationStat {
        r,
        n: x.len(),
        p_value: correlation_p_value(r, x.len() - 2),
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationStat> {
    if x.len() != y.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// Removes the `[1, z]` least-squares fit from a series. Built once per
/// control variable and reused across many series.
#[derive(Debug, Clone)]
pub struct ControlResidualizer {
    centered: Vec<f64>,
    szz: f64,
}

impl ControlResidualizer {
    pub fn new(z: &[f64]) -> Result<Self> {
        if z.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: z.len(),
            });
        }
        if is_constant(z) {
            return Err(Error::RankDeficient { columns: vec![1] });
        }
        let mz = compensated_sum(z.iter().copied()) / z.len() as f64;
        let centered: Vec<f64> = z.iter().map(|v| v - mz).collect();
        let szz = compensated_sum(centered.iter().map(|v| v * v));
        Ok(Self { centered, szz })
    }

    pub fn len(&self) -> usize {
        self.centered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centered.is_empty()
    }

    /// Residual of `x` after regressing on `[1, z]`. Fails with
    /// [`Error::DegenerateResidual`] when `x` is (numerically) affine in `z`.
    pub fn residualize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.centered.len() {
            return Err(Error::Invalid("length mismatch".into()));
        }
        let mx = compensated_sum(x.iter().copied()) / x.len() as f64;
        let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let beta = compensated_sum(xc.iter().zip(&self.centered).map(|(a, b)| a * b)) / self.szz;
        let resid: Vec<f64> = xc
            .iter()
            .zip(&self.centered)
            .map(|(a, b)| a - beta * b)
            .collect();
        let total = compensated_sum(xc.iter().map(|v| v * v)).sqrt();
        let left = compensated_sum(resid.iter().map(|v| v * v)).sqrt();
        if total == 0.0 || left <= DEGENERATE_TOL * total {
            return Err(Error::DegenerateResidual);
        }
        Ok(resid)
    }
}

/// Correlation of two already-residualized series. Maps zero variance to
/// [`Error::DegenerateResidual`].
pub fn residual_correlation(rx: &[f64], ry: &[f64]) -> Result<f64> {
    pearson_r(rx, ry).map_err(|e| match e {
        Error::ZeroVariance => Error::DegenerateResidual,
        other => other,
    })
}

/// Partial correlation of `x` and `y` controlling for `z`, with `n - 3`
/// degrees of freedom.
pub fn partial_corr(x: &[f64], y: &[f64], z: &[f64]) -> Result<CorrelationStat> {
    let n = z.len();
    if x.len() != n || y.len() != n {
        return Err(Error::Invalid("length mismatch".into()));
    }
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let ctrl = ControlResidualizer::new(z)?;
    let rx = ctrl.residualize(x)?;
    let ry = ctrl.residualize(y)?;
    let r = residual_correlation(&rx, &ry)?;
    Ok(CorrelationStat {
        r,
        n,
        p_value: correlation_p_value(r, n - 3),
    })
}
