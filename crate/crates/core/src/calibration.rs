//! Score fusion and its calibration.
//!
//! A [`CalibrationProfile`] fuses a few statistics into one score:
//!
//! ```text
//! score = orientation * sum_i w_i * (v[id_i] - mean_i) / std_i
//! ```
//!
//! Weights lie on the grid simplex (`w_i >= 0`, `sum w_i = 1`, each a
//! multiple of the grid step). The per-statistic z-scoring is fitted on the
//! calibration set; raw mode replaces it with the identity (mean 0, std 1).
//! The orientation makes spoof utterances score higher on average, and the
//! threshold is the EER operating point on the calibration set.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::exec::Executor;
use crate::metrics::{self, ClassLabel, LabeledScores};
use crate::statistics::{StatisticId, StatisticVector, DEFAULT_WINDOW};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GRID_STEP: f64 = 0.1;
pub const DEFAULT_MAX_SUBSET: usize = 3;
const DEGENERATE_STD: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

impl TryFrom<i8> for Orientation {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Orientation::Positive),
            -1 => Ok(Orientation::Negative),
            other => Err(format!("orientation must be 1 or -1, got {other}")),
        }
    }
}

impl From<Orientation> for i8 {
    fn from(o: Orientation) -> i8 {
        match o {
            Orientation::Positive => 1,
            Orientation::Negative => -1,
        }
    }
}

/// Per-statistic (mean, std) fitted on a calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationFit {
    pub params: BTreeMap<StatisticId, [f64; 2]>,
    /// Ids whose std was at most `1e-12`; absent from `params`.
    pub degenerate: Vec<StatisticId>,
}

/// Fits population mean and std per id over `matrix`.
pub fn fit_standardization(
    matrix: &[StatisticVector],
    ids: &[StatisticId],
) -> Result<StandardizationFit> {
    if matrix.len() < 2 {
        return Err(TraceError::Empty(
            "standardization needs at least 2 utterances",
        ));
    }
    let mut params = BTreeMap::new();
    let mut degenerate = Vec::new();
    for &id in ids {
        let col = column(matrix, id)?;
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= DEGENERATE_STD {
            degenerate.push(id);
        } else {
            params.insert(id, [mean, std]);
        }
    }
    Ok(StandardizationFit { params, degenerate })
}

fn column(matrix: &[StatisticVector], id: StatisticId) -> Result<Vec<f64>> {
    matrix
        .iter()
        .map(|v| {
            v.get(id)
                .map_err(|e| TraceError::for_utterance(&v.utterance_id, e))
        })
        .collect()
}

#[inline]
fn standardize(x: f64, [mean, std]: [f64; 2]) -> f64 {
    (x - mean) / std
}

/// Sign that makes spoof utterances score higher on average; an exact tie
/// resolves to `Positive`.
pub fn calibrate_orientation(scores: &[f64], labels: &[ClassLabel]) -> Result<Orientation> {
    let (mut sum_b, mut n_b, mut sum_s, mut n_s) = (0.0, 0usize, 0.0, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match l {
            ClassLabel::Bonafide => {
                sum_b += s;
                n_b += 1;
            }
            ClassLabel::Spoof => {
                sum_s += s;
                n_s += 1;
            }
        }
    }
    if n_b == 0 || n_s == 0 {
        return Err(TraceError::SingleClass {
            bonafide: n_b,
            spoof: n_s,
        });
    }
    let diff = sum_s / n_s as f64 - sum_b / n_b as f64;
    if diff < 0.0 {
        Ok(Orientation::Negative)
    } else {
        Ok(Orientation::Positive)
    }
}

/// Threshold at the EER operating point of already-oriented scores.
pub fn select_threshold(scores: &[f64], labels: &[ClassLabel]) -> Result<f64> {
    let s = LabeledScores::from_pairs(scores, labels)?;
    Ok(metrics::compute_eer(&s)?.threshold)
}

/// Validates a grid step and returns the number of steps in `[0, 1]`.
pub fn grid_units(step: f64) -> Result<u32> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(TraceError::InvalidGridStep(step));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > SIMPLEX_TOL {
        return Err(TraceError::InvalidGridStep(step));
    }
    Ok(n as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub schema_version: u32,
    pub profile_name: String,
    #[serde(default)]
    pub encoder_meta: BTreeMap<String, String>,
    pub statistic_ids: Vec<StatisticId>,
    pub weights: Vec<f64>,
    pub standardization: BTreeMap<StatisticId, [f64; 2]>,
    pub orientation: Orientation,
    pub threshold: f64,
    pub calibration_eer: f64,
    pub window_w: usize,
    pub grid_step: f64,
    pub raw_mode: bool,
}

impl CalibrationProfile {
    /// Checks every profile invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TraceError::InvalidProfile(m));
        if self.schema_version != SCHEMA_VERSION {
            return Err(TraceError::UnsupportedSchema(self.schema_version));
        }
        if self.statistic_ids.is_empty() {
            return bad("no statistics".into());
        }
        if self.statistic_ids.len() != self.weights.len() {
            return bad(format!(
                "{} statistics but {} weights",
                self.statistic_ids.len(),
                self.weights.len()
            ));
        }
        for (i, id) in self.statistic_ids.iter().enumerate() {
            if self.statistic_ids[..i].contains(id) {
                return bad(format!("statistic `{id}` listed twice"));
            }
        }
        grid_units(self.grid_step)
            .map_err(|_| TraceError::InvalidProfile(format!("grid step {}", self.grid_step)))?;
        for &w in &self.weights {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("weight {w} is negative or not finite"));
            }
            let q = w / self.grid_step;
            if (q - q.round()).abs() > SIMPLEX_TOL {
                return bad(format!(
                    "weight {w} is not a multiple of grid step {}",
                    self.grid_step
                ));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return bad(format!("weights sum to {total}, expected 1"));
        }
        for id in &self.statistic_ids {
            match self.standardization.get(id) {
                Some([mean, std]) if mean.is_finite() && std.is_finite() && *std > 0.0 => {}
                Some(_) => return bad(format!("standardization for `{id}` is invalid")),
                None => return bad(format!("no standardization for `{id}`")),
            }
        }
        if !self.threshold.is_finite() {
            return bad("threshold is not finite".into());
        }
        // Orientation follows the class means, not the ranks, so a
        // near-chance fit can land slightly above 0.5.
        if !(0.0..=1.0).contains(&self.calibration_eer) {
            return bad(format!(
                "calibration EER {} outside [0, 1]",
                self.calibration_eer
            ));
        }
        if self.window_w == 0 {
            return bad("window width must be at least 1".into());
        }
        Ok(())
    }

    /// Fused, oriented score for one utterance.
    pub fn fuse(&self, v: &StatisticVector) -> Result<f64> {
        let mut acc = 0.0;
        for (id, &w) in self.statistic_ids.iter().zip(&self.weights) {
            let params = self
                .standardization
                .get(id)
                .ok_or_else(|| TraceError::MissingStatistic(id.to_string()))?;
            acc += w * standardize(v.get(*id)?, *params);
        }
        Ok(self.orientation.sign() * acc)
    }

    /// True iff `score` is decided spoof.
    pub fn decide(&self, score: f64) -> bool {
        score > self.threshold
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Check the schema version before the field layout.
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(TraceError::UnsupportedSchema(v.schema_version));
        }
        let p: CalibrationProfile = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

pub fn save_profile(profile: &CalibrationProfile, path: impl AsRef<Path>) -> Result<()> {
    profile.validate()?;
    let path = path.as_ref();
    let mut text = profile.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| TraceError::io(path, e))
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<CalibrationProfile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
    CalibrationProfile::from_json(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub profile_name: String,
    pub max_subset_size: usize,
    pub grid_step: f64,
    pub raw_mode: bool,
    /// Window width the statistic matrix was computed with; recorded in the
    /// profile.
    pub window_w: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            profile_name: "calibrated".into(),
            max_subset_size: DEFAULT_MAX_SUBSET,
            grid_step: DEFAULT_GRID_STEP,
            raw_mode: false,
            window_w: DEFAULT_WINDOW,
        }
    }
}

/// One point of the search space: a subset of candidates (indices into the
/// sorted candidate list) and strictly positive integer weight units summing
/// to the grid resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCandidate {
    pub members: Vec<usize>,
    pub units: Vec<u32>,
}

/// Every subset of `n_candidates` of size `1..=max_subset` paired with every
/// composition of `units` into that many positive parts.
pub fn enumerate_candidates(
    n_candidates: usize,
    max_subset: usize,
    units: u32,
) -> Vec<GridCandidate> {
    let mut out = Vec::new();
    for k in 1..=max_subset.min(n_candidates).min(units as usize) {
        let compositions = compositions(units, k);
        for subset in combinations(n_candidates, k) {
            for c in &compositions {
                out.push(GridCandidate {
                    members: subset.clone(),
                    units: c.clone(),
                });
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(remaining);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=remaining.saturating_sub(parts as u32 - 1) {
            cur.push(first);
            rec(remaining - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && total >= parts as u32 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub profile: CalibrationProfile,
    /// Number of (subset, weight vector) candidates scored.
    pub n_evaluated: usize,
    /// Candidates dropped because they were constant on the calibration set.
    pub excluded: Vec<StatisticId>,
}

struct Scored {
    eer: f64,
    threshold: f64,
    orientation: Orientation,
    candidate: usize,
}

/// Exhaustive search over subsets and grid weights minimizing calibration
/// EER.
///
/// Ties on EER prefer fewer statistics, then the lexicographically smaller
/// id list, then the lexicographically larger weight vector.
pub fn grid_search(
    matrix: &[StatisticVector],
    labels: &[ClassLabel],
    candidate_ids: &[StatisticId],
    cfg: &GridConfig,
    exec: &Executor,
) -> Result<GridSearchOutcome> {
    let units = grid_units(cfg.grid_step)?;
    if cfg.max_subset_size == 0 {
        return Err(TraceError::InvalidConfig(
            "max subset size must be at least 1".into(),
        ));
    }
    if matrix.len() != labels.len() {
        return Err(TraceError::Mismatch(format!(
            "{} statistic rows but {} labels",
            matrix.len(),
            labels.len()
        )));
    }
    require_both(labels)?;

    let mut ids: Vec<StatisticId> = candidate_ids.to_vec();
    ids.sort_by_key(|id| id.as_str());
    ids.dedup();
    if ids.is_empty() {
        return Err(TraceError::EmptyCandidates);
    }

    let (params, excluded) = if cfg.raw_mode {
        for &id in &ids {
            column(matrix, id)?;
        }
        (ids.iter().map(|&id| (id, [0.0, 1.0])).collect(), Vec::new())
    } else {
        let fit = fit_standardization(matrix, &ids)?;
        (fit.params, fit.degenerate)
    };
    ids.retain(|id| params.contains_key(id));
    if ids.is_empty() {
        return Err(TraceError::EmptyCandidates);
    }

    let columns: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            let p = params[&id];
            column(matrix, id).map(|c| c.into_iter().map(|x| standardize(x, p)).collect())
        })
        .collect::<Result<_>>()?;

    let candidates = enumerate_candidates(ids.len(), cfg.max_subset_size, units);
    let names: Vec<&str> = ids.iter().map(|id| id.as_str()).collect();
    let order = |a: &Scored, b: &Scored| -> Ordering {
        let (ca, cb) = (&candidates[a.candidate], &candidates[b.candidate]);
        a.eer
            .total_cmp(&b.eer)
            .then(ca.members.len().cmp(&cb.members.len()))
            .then_with(|| {
                let na = ca.members.iter().map(|&i| names[i]);
                let nb = cb.members.iter().map(|&i| names[i]);
                na.cmp(nb)
            })
            .then_with(|| cb.units.cmp(&ca.units))
    };

    let indices: Vec<usize> = (0..candidates.len()).collect();
    let best = exec
        .min_by(
            &indices,
            |&ci| evaluate(&candidates[ci], ci, &columns, labels, units),
            |a, b| match (a, b) {
                (Ok(a), Ok(b)) => order(a, b),
                (Err(_), Ok(_)) => Ordering::Less,
                (Ok(_), Err(_)) => Ordering::Greater,
                (Err(_), Err(_)) => Ordering::Equal,
            },
        )
        .ok_or(TraceError::EmptyCandidates)??;

    let winner = &candidates[best.candidate];
    let statistic_ids: Vec<StatisticId> = winner.members.iter().map(|&i| ids[i]).collect();
    let profile = CalibrationProfile {
        schema_version: SCHEMA_VERSION,
        profile_name: cfg.profile_name.clone(),
        encoder_meta: BTreeMap::new(),
        weights: winner
            .units
            .iter()
            .map(|&u| u as f64 / units as f64)
            .collect(),
        standardization: statistic_ids.iter().map(|id| (*id, params[id])).collect(),
        statistic_ids,
        orientation: best.orientation,
        threshold: best.threshold,
        calibration_eer: best.eer,
        window_w: cfg.window_w,
        grid_step: cfg.grid_step,
        raw_mode: cfg.raw_mode,
    };
    profile.validate()?;
    Ok(GridSearchOutcome {
        profile,
        n_evaluated: candidates.len(),
        excluded,
    })
}

fn require_both(labels: &[ClassLabel]) -> Result<()> {
    let spoof = labels.iter().filter(|&&l| l == ClassLabel::Spoof).count();
    let bonafide = labels.len() - spoof;
    if spoof == 0 || bonafide == 0 {
        return Err(TraceError::SingleClass { bonafide, spoof });
    }
    Ok(())
}

fn evaluate(
    cand: &GridCandidate,
    index: usize,
    columns: &[Vec<f64>],
    labels: &[ClassLabel],
    units: u32,
) -> Result<Scored> {
    let weights: Vec<f64> = cand
        .units
        .iter()
        .map(|&u| u as f64 / units as f64)
        .collect();
    let fused = fuse_columns(&cand.members, &weights, columns, labels.len());
    let (scores, orientation) = orient(fused, labels)?;
    let eer = metrics::compute_eer(&LabeledScores::from_pairs(&scores, labels)?)?;
    Ok(Scored {
        eer: eer.eer,
        threshold: eer.threshold,
        orientation,
        candidate: index,
    })
}

/// Same accumulation order as [`CalibrationProfile::fuse`].
fn fuse_columns(members: &[usize], weights: &[f64], columns: &[Vec<f64>], n: usize) -> Vec<f64> {
    (0..n)
        .map(|u| {
            let mut acc = 0.0;
            for (&m, &w) in members.iter().zip(weights) {
                acc += w * columns[m][u];
            }
            acc
        })
        .collect()
}

fn orient(mut fused: Vec<f64>, labels: &[ClassLabel]) -> Result<(Vec<f64>, Orientation)> {
    let orientation = calibrate_orientation(&fused, labels)?;
    let sign = orientation.sign();
    for s in &mut fused {
        *s *= sign;
    }
    Ok((fused, orientation))
}

/// Fits standardization, orientation and threshold for fixed ids/weights.
pub fn fit_fixed(
    matrix: &[StatisticVector],
    labels: &[ClassLabel],
    preset: &Preset,
    raw_mode: bool,
    window_w: usize,
) -> Result<CalibrationProfile> {
    require_both(labels)?;
    let params: BTreeMap<StatisticId, [f64; 2]> = if raw_mode {
        preset.ids.iter().map(|&id| (id, [0.0, 1.0])).collect()
    } else {
        let fit = fit_standardization(matrix, preset.ids)?;
        if let Some(id) = fit.degenerate.first() {
            return Err(TraceError::DegenerateStatistic(id.to_string()));
        }
        fit.params
    };
    let columns: Vec<Vec<f64>> = preset
        .ids
        .iter()
        .map(|&id| {
            column(matrix, id).map(|c| c.into_iter().map(|x| standardize(x, params[&id])).collect())
        })
        .collect::<Result<_>>()?;
    let members: Vec<usize> = (0..preset.ids.len()).collect();
    let fused = fuse_columns(&members, preset.weights, &columns, labels.len());
    let (scores, orientation) = orient(fused, labels)?;
    let eer = metrics::compute_eer(&LabeledScores::from_pairs(&scores, labels)?)?;
    let mut profile = preset.to_profile();
    profile.standardization = params;
    profile.orientation = orientation;
    profile.threshold = eer.threshold;
    profile.calibration_eer = eer.eer;
    profile.raw_mode = raw_mode;
    profile.window_w = window_w;
    profile.validate()?;
    Ok(profile)
}

/// A named statistic combination with fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub ids: &'static [StatisticId],
    pub weights: &'static [f64],
    pub grid_step: f64,
    pub note: &'static str,
}

const THIRD: f64 = 1.0 / 3.0;

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "partialspoof-f1opt",
        ids: &[StatisticId::F1MaxwRms, StatisticId::F1Dt4Rms],
        weights: &[0.5, 0.5],
        grid_step: 0.1,
        note: "English partial-spoof combination, equal weights",
    },
    Preset {
        name: "had-f1opt",
        ids: &[
            StatisticId::F1MaxwRms,
            StatisticId::F1Top5Mean,
            StatisticId::F1Top2Mean,
        ],
        weights: &[THIRD, THIRD, THIRD],
        grid_step: THIRD,
        note: "dense Mandarin splices; weights not published, equal weights assumed",
    },
    Preset {
        name: "had-transfer",
        ids: &[StatisticId::F1MaxwRms, StatisticId::AngleMean],
        weights: &[0.7, 0.3],
        grid_step: 0.1,
        note: "magnitude plus direction mix for cross-lingual transfer",
    },
    Preset {
        name: "llamaps",
        ids: &[StatisticId::F1Std, StatisticId::F1MaxwRms],
        weights: &[0.5, 0.5],
        grid_step: 0.1,
        note: "LLM-era partial spoofs; weights not published, equal weights assumed",
    },
    Preset {
        name: "add2023",
        ids: &[StatisticId::F1Rms],
        weights: &[1.0],
        grid_step: 0.1,
        note: "short spoof segments; single global statistic",
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| TraceError::UnknownPreset(name.to_string()))
}

impl Preset {
    /// An unfitted raw-mode profile: identity standardization, positive
    /// orientation, threshold 0.
    pub fn to_profile(&self) -> CalibrationProfile {
        let mut encoder_meta = BTreeMap::new();
        encoder_meta.insert("preset".to_string(), self.name.to_string());
        encoder_meta.insert("note".to_string(), self.note.to_string());
        CalibrationProfile {
            schema_version: SCHEMA_VERSION,
            profile_name: self.name.to_string(),
            encoder_meta,
            statistic_ids: self.ids.to_vec(),
            weights: self.weights.to_vec(),
            standardization: self.ids.iter().map(|&id| (id, [0.0, 1.0])).collect(),
            orientation: Orientation::Positive,
            threshold: 0.0,
            calibration_eer: 0.5,
            window_w: DEFAULT_WINDOW,
            grid_step: self.grid_step,
            raw_mode: true,
        }
    }
}
