//! Observer screening by pooled reliability.
//!
//! Each observer is correlated with the leave-self-out reference of the
//! cohort that saw the same stimuli. Reliabilities from all cohorts are
//! pooled and observers below the lower Tukey fence `Q1 - 1.5 IQR` are
//! dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ResponseTable;
use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::numeric::quantile_sorted;
use crate::par;
use crate::stats::pearson_r;

pub const MIN_SHARED_CELLS: usize = 3;
pub const FENCE_MULTIPLIER: f64 = 1.5;

/// Statistic used to summarise cohort-mates at each cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Reference::Mean),
            "median" => Ok(Reference::Median),
            other => Err(Error::Invalid(format!("unknown reference {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityRecord {
    pub observer_id: String,
    pub reliability: f64,
    pub cohort_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Unscorable {
    TooFewSharedCells(usize),
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reliability {
    Scored(ReliabilityRecord),
    Unscorable {
        observer_id: String,
        cohort_id: String,
        reason: Unscorable,
    },
}

impl Reliability {
    pub fn observer_id(&self) -> &str {
        match self {
            Reliability::Scored(r) => &r.observer_id,
            Reliability::Unscorable { observer_id, .. } => observer_id,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Reliability::Scored(r) => Some(r.reliability),
            Reliability::Unscorable { .. } => None,
        }
    }
}

/// Groups observers by the exact set of scenes they rated. Cohort ids are
/// `c0`, `c1`, ... in order of each cohort's first scene list.
pub fn derive_cohorts(table: &ResponseTable) -> BTreeMap<String, String> {
    let mut scenes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in table.records() {
        scenes
            .entry(r.observer_id.as_str())
            .or_default()
            .insert(r.scene_id.as_str());
    }
    let distinct: BTreeSet<&BTreeSet<&str>> = scenes.values().collect();
    let ids: BTreeMap<&BTreeSet<&str>, String> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, format!("c{i}")))
        .collect();
    scenes
        .iter()
        .map(|(obs, set)| (obs.to_string(), ids[set].clone()))
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, 0.5)
}

/// Reliability of every observer in `table`. Observers absent from
/// `cohorts` form a cohort of their own and come back unscorable.
pub fn observer_reliability(
    table: &ResponseTable,
    cohorts: &BTreeMap<String, String>,
    reference: Reference,
) -> Vec<Reliability> {
    let by_observer = table.by_observer();
    let cohort_of = |obs: &str| {
        cohorts
            .get(obs)
            .cloned()
            .unwrap_or_else(|| format!("solo:{obs}"))
    };
    // cohort -> cell -> [(observer, estimate)]
    let mut cells: BTreeMap<String, BTreeMap<(&str, u32), Vec<(&str, f64)>>> = BTreeMap::new();
    for (obs, est) in &by_observer {
        let slot = cells.entry(cohort_of(obs)).or_default();
        for (cell, v) in est {
            slot.entry(*cell).or_default().push((obs, *v));
        }
    }

    let observers: Vec<(&str, &BTreeMap<(&str, u32), f64>)> =
        by_observer.iter().map(|(k, v)| (*k, v)).collect();
    par::map_slice(&observers, |(obs, est)| {
        let cohort_id = cohort_of(obs);
        let cohort_cells = &cells[&cohort_id];
        let mut own = Vec::with_capacity(est.len());
        let mut refs = Vec::with_capacity(est.len());
        for (cell, v) in est.iter() {
            let mut others: Vec<f64> = cohort_cells[cell]
                .iter()
                .filter(|(o, _)| o != obs)
                .map(|(_, x)| *x)
                .collect();
            if others.is_empty() {
                continue;
            }
            let r = match reference {
                Reference::Mean => others.iter().sum::<f64>() / others.len() as f64,
                Reference::Median => median(&mut others),
            };
            own.push(*v);
            refs.push(r);
        }
        let unscorable = |reason| Reliability::Unscorable {
            observer_id: obs.to_string(),
            cohort_id: cohort_id.clone(),
            reason,
        };
        if own.len() < MIN_SHARED_CELLS {
            return unscorable(Unscorable::TooFewSharedCells(own.len()));
        }
        match pearson_r(&own, &refs) {
            Ok(r) => Reliability::Scored(ReliabilityRecord {
                observer_id: obs.to_string(),
                reliability: r,
                cohort_id: cohort_id.clone(),
            }),
            Err(_) => unscorable(Unscorable::ZeroVariance),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExclusionReason {
    BelowCutoff,
    Unscorable(Unscorable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub observer_id: String,
    pub reliability: Option<f64>,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningOutcome {
    pub kept: Vec<ReliabilityRecord>,
    pub excluded: Vec<Exclusion>,
    pub cutoff: f64,
    pub q1: f64,
    pub q3: f64,
}

impl ScreeningOutcome {
    pub fn kept_ids(&self) -> BTreeSet<String> {
        self.kept.iter().map(|r| r.observer_id.clone()).collect()
    }
}

/// Lower Tukey fence over the scorable reliabilities. Exclusion is strict
/// (`r < cutoff`), so a zero-IQR population keeps everyone.
pub fn tukey_lower_fence(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.len() < 4 {
        return Err(Error::QuartilesUndefined(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok((q1 - FENCE_MULTIPLIER * (q3 - q1), q1, q3))
}

pub fn screen(records: &[Reliability]) -> Result<ScreeningOutcome> {
    let scored: Vec<f64> = records.iter().filter_map(Reliability::value).collect();
    let (cutoff, q1, q3) = tukey_lower_fence(&scored)?;
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for rec in records {
        match rec {
            Reliability::Scored(r) if r.reliability < cutoff => excluded.push(Exclusion {
                observer_id: r.observer_id.clone(),
                reliability: Some(r.reliability),
                reason: ExclusionReason::BelowCutoff,
            }),
            Reliability::Scored(r) => kept.push(r.clone()),
            Reliability::Unscorable {
                observer_id,
                reason,
                ..
            } => excluded.push(Exclusion {
                observer_id: observer_id.clone(),
                reliability: None,
                reason: ExclusionReason::Unscorable(reason.clone()),
            }),
        }
    }
    Ok(ScreeningOutcome {
        kept,
        excluded,
        cutoff,
        q1,
        q3,
    })
}

/// `observer_id,reliability,kept` sorted by observer, cutoff in a footer
/// comment. Unscorable observers have an empty reliability.
pub fn screening_to_csv(outcome: &ScreeningOutcome, provenance: Option<&Provenance>) -> String {
    let mut rows: Vec<(String, String, bool)> = outcome
        .kept
        .iter()
        .map(|r| (r.observer_id.clone(), r.reliability.to_string(), true))
        .chain(outcome.excluded.iter().map(|e| {
            (
                e.observer_id.clone(),
                e.reliability.map(|v| v.to_string()).unwrap_or_default(),
                false,
            )
        }))
        .collect();
    rows.sort();
    let mut s = String::from("observer_id,reliability,kept\n");
    for (id, r, k) in rows {
        let _ = writeln!(s, "{id},{r},{k}");
    }
    let _ = writeln!(
        s,
        "# cutoff={} q1={} q3={}",
        outcome.cutoff, outcome.q1, outcome.q3
    );
    if let Some(p) = provenance {
        s.push_str(&p.footer());
    }
    s
}

/// Observer ids flagged `kept=true` in a `screening.csv`.
pub fn parse_screening_kept(path: &std::path::Path, text: &str) -> Result<BTreeSet<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut kept = BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        if rec.get(2).map(str::trim) == Some("true") {
            kept.insert(rec[0].to_string());
        }
    }
    Ok(kept)
}
