//! Detection metrics over labeled scores.
//!
//! Convention throughout: a higher score is more spoof-like and an utterance
//! is decided spoof iff `score > threshold` (ties go to bonafide).
//!
//! * FAR: fraction of bonafide utterances decided spoof.
//! * FRR: fraction of spoof utterances decided bonafide.
//!
//! The EER sweep evaluates thresholds at the midpoints between adjacent
//! distinct scores plus one sentinel below the minimum and one above the
//! maximum. Sentinels sit half an adjacent gap outside the score range (one
//! unit when all scores coincide); their error rates equal those at
//! `-inf`/`+inf`. The EER is the crossing of the FAR and FRR polylines,
//! linearly interpolated between the two sweep points that bracket it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Bonafide,
    Spoof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUtterance {
    pub utterance_id: String,
    pub score: f64,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledScores {
    entries: Vec<ScoredUtterance>,
}

impl LabeledScores {
    pub fn new(entries: Vec<ScoredUtterance>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(TraceError::NonFiniteScore(e.utterance_id.clone()));
        }
        Ok(LabeledScores { entries })
    }

    /// Builds from parallel score/label slices with positional ids.
    pub fn from_pairs(scores: &[f64], labels: &[ClassLabel]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(TraceError::Mismatch(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Self::new(
            scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&score, &label))| ScoredUtterance {
                    utterance_id: i.to_string(),
                    score,
                    label,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ScoredUtterance] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (bonafide, spoof) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let n_spoof = self
            .entries
            .iter()
            .filter(|e| e.label == ClassLabel::Spoof)
            .count();
        (self.entries.len() - n_spoof, n_spoof)
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (b, s) = self.class_counts();
        if b == 0 || s == 0 {
            return Err(TraceError::SingleClass {
                bonafide: b,
                spoof: s,
            });
        }
        Ok((b, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedThresholdResult {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub hter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` shared bin edges.
    pub edges: Vec<f64>,
    pub bonafide: Vec<u64>,
    pub spoof: Vec<u64>,
}

/// Threshold sweep, ordered by increasing threshold.
pub fn sweep(s: &LabeledScores) -> Result<Vec<SweepPoint>> {
    let (n_b, n_s) = s.require_both_classes()?;
    let mut sorted: Vec<(f64, ClassLabel)> = s.entries.iter().map(|e| (e.score, e.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Distinct values with per-class counts at each.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (v, label) in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == v => {}
            _ => groups.push((v, 0, 0)),
        }
        let g = groups.last_mut().unwrap();
        match label {
            ClassLabel::Bonafide => g.1 += 1,
            ClassLabel::Spoof => g.2 += 1,
        }
    }

    let (lo, hi) = sentinels(&groups.iter().map(|g| g.0).collect::<Vec<_>>());
    let rate = |count: usize, n: usize| count as f64 / n as f64;
    let mut points = Vec::with_capacity(groups.len() + 1);
    points.push(SweepPoint {
        threshold: lo,
        far: 1.0,
        frr: 0.0,
    });
    let (mut below_b, mut below_s) = (0usize, 0usize);
    for (j, g) in groups.iter().enumerate() {
        below_b += g.1;
        below_s += g.2;
        let threshold = match groups.get(j + 1) {
            Some(next) => g.0 + (next.0 - g.0) / 2.0,
            None => hi,
        };
        points.push(SweepPoint {
            threshold,
            far: rate(n_b - below_b, n_b),
            frr: rate(below_s, n_s),
        });
    }
    Ok(points)
}

fn sentinels(distinct: &[f64]) -> (f64, f64) {
    let first = distinct[0];
    let last = distinct[distinct.len() - 1];
    if distinct.len() == 1 {
        return (first - 1.0, last + 1.0);
    }
    let lo_gap = (distinct[1] - first) / 2.0;
    let hi_gap = (last - distinct[distinct.len() - 2]) / 2.0;
    (first - lo_gap, last + hi_gap)
}

/// Locates the FAR/FRR crossing on a sweep.
pub fn eer_from_sweep(points: &[SweepPoint]) -> Eer {
    // FAR - FRR starts at +1 and ends at -1, so a sign change always exists.
    let i = points
        .iter()
        .position(|p| p.far - p.frr <= 0.0)
        .expect("sweep ends with FAR 0 and FRR 1");
    let cur = points[i];
    let d_cur = cur.far - cur.frr;
    if d_cur == 0.0 || i == 0 {
        return Eer {
            eer: cur.far,
            threshold: cur.threshold,
        };
    }
    let prev = points[i - 1];
    let d_prev = prev.far - prev.frr;
    let alpha = d_prev / (d_prev - d_cur);
    Eer {
        eer: prev.far + alpha * (cur.far - prev.far),
        threshold: prev.threshold + alpha * (cur.threshold - prev.threshold),
    }
}

pub fn compute_eer(s: &LabeledScores) -> Result<Eer> {
    let points = sweep(s)?;
    Ok(eer_with_points(s, &points))
}

fn eer_with_points(s: &LabeledScores, points: &[SweepPoint]) -> Eer {
    let mut eer = eer_from_sweep(points);
    if points.len() == 2 {
        // all scores coincide; the crossing sits exactly on that score
        eer.threshold = s.entries[0].score;
    }
    eer
}

/// Probability that a random spoof outscores a random bonafide, ties ½.
pub fn compute_auc(s: &LabeledScores) -> Result<f64> {
    let (n_b, n_s) = s.require_both_classes()?;
    let mut sorted: Vec<(f64, ClassLabel)> = s.entries.iter().map(|e| (e.score, e.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the count of ordered pairs, so ties stay integral.
    let mut twice_wins: u128 = 0;
    let mut bonafide_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        let (mut b, mut sp) = (0u128, 0u128);
        while i < sorted.len() && sorted[i].0 == v {
            match sorted[i].1 {
                ClassLabel::Bonafide => b += 1,
                ClassLabel::Spoof => sp += 1,
            }
            i += 1;
        }
        twice_wins += sp * (2 * bonafide_below + b);
        bonafide_below += b;
    }
    Ok(twice_wins as f64 / (2.0 * n_b as f64 * n_s as f64))
}

pub fn fixed_threshold_eval(s: &LabeledScores, threshold: f64) -> Result<FixedThresholdResult> {
    let (n_b, n_s) = s.require_both_classes()?;
    let mut false_accept = 0usize;
    let mut false_reject = 0usize;
    for e in &s.entries {
        let spoof = e.score > threshold;
        match e.label {
            ClassLabel::Bonafide if spoof => false_accept += 1,
            ClassLabel::Spoof if !spoof => false_reject += 1,
            _ => {}
        }
    }
    let far = false_accept as f64 / n_b as f64;
    let frr = false_reject as f64 / n_s as f64;
    Ok(FixedThresholdResult {
        threshold,
        far,
        frr,
        hter: (far + frr) / 2.0,
    })
}

/// Per-class counts over `n_bins` equal-width bins spanning all scores.
///
/// A value belongs to bin `j` when `edges[j] <= x < edges[j + 1]`; the last
/// bin is closed on the right. If all scores coincide the span is widened to
/// `[v - 0.5, v + 0.5]`.
pub fn score_histogram(s: &LabeledScores, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(TraceError::InvalidConfig(
            "histogram needs at least one bin".into(),
        ));
    }
    if s.is_empty() {
        return Err(TraceError::Empty("histogram input"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for e in &s.entries {
        lo = lo.min(e.score);
        hi = hi.max(e.score);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|j| lo + j as f64 * width).collect();
    edges.push(hi);

    let mut hist = Histogram {
        bonafide: vec![0; n_bins],
        spoof: vec![0; n_bins],
        edges,
    };
    for e in &s.entries {
        let j = bin_index(&hist.edges, e.score, lo, width);
        match e.label {
            ClassLabel::Bonafide => hist.bonafide[j] += 1,
            ClassLabel::Spoof => hist.spoof[j] += 1,
        }
    }
    Ok(hist)
}

fn bin_index(edges: &[f64], x: f64, lo: f64, width: f64) -> usize {
    let n = edges.len() - 1;
    let mut j = (((x - lo) / width).floor().max(0.0) as usize).min(n - 1);
    // settle floating-point disagreements against the stored edges
    while j > 0 && x < edges[j] {
        j -= 1;
    }
    while j + 1 < n && x >= edges[j + 1] {
        j += 1;
    }
    j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    /// Utterances excluded because their label was `unknown`.
    pub n_unlabeled: usize,
    pub eer: f64,
    pub eer_threshold: f64,
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fixed: Option<FixedThresholdResult>,
    pub roc_points: Vec<SweepPoint>,
    pub histogram: Histogram,
}

impl EvalReport {
    pub fn build(
        s: &LabeledScores,
        fixed_threshold: Option<f64>,
        n_bins: usize,
        n_unlabeled: usize,
    ) -> Result<Self> {
        let points = sweep(s)?;
        let eer = eer_with_points(s, &points);
        let (n_bonafide, n_spoof) = s.class_counts();
        Ok(EvalReport {
            n_bonafide,
            n_spoof,
            n_unlabeled,
            eer: eer.eer,
            eer_threshold: eer.threshold,
            auc: compute_auc(s)?,
            fixed: fixed_threshold
                .map(|t| fixed_threshold_eval(s, t))
                .transpose()?,
            roc_points: points,
            histogram: score_histogram(s, n_bins)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("threshold,far,frr\n");
        for p in &self.roc_points {
            let _ = writeln!(out, "{:e},{:e},{:e}", p.threshold, p.far, p.frr);
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let h = &self.histogram;
        let mut out = String::from("bin_lo,bin_hi,count_bonafide,count_spoof\n");
        for j in 0..h.bonafide.len() {
            let _ = writeln!(
                out,
                "{:e},{:e},{},{}",
                h.edges[j],
                h.edges[j + 1],
                h.bonafide[j],
                h.spoof[j]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    fn set(bonafide: &[f64], spoof: &[f64]) -> LabeledScores {
        let scores: Vec<f64> = bonafide.iter().chain(spoof).copied().collect();
        let labels: Vec<ClassLabel> = bonafide
            .iter()
            .map(|_| Bonafide)
            .chain(spoof.iter().map(|_| Spoof))
            .collect();
        LabeledScores::from_pairs(&scores, &labels).unwrap()
    }

    #[test]
    fn separable() {
        let s = set(&[0.1, 0.2], &[0.8, 0.9]);
        let e = compute_eer(&s).unwrap();
        assert_eq!(e.eer, 0.0);
        assert!((e.threshold - 0.5).abs() < 1e-12);
        assert_eq!(compute_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn worked_four_point_set() {
        let s = set(&[0.1, 0.6], &[0.4, 0.9]);
        let e = compute_eer(&s).unwrap();
        assert!((e.eer - 0.5).abs() < 1e-12);
        assert_eq!(compute_auc(&s).unwrap(), 0.75);
        let f = fixed_threshold_eval(&s, 0.5).unwrap();
        assert_eq!((f.far, f.frr, f.hter), (0.5, 0.5, 0.5));
    }

    #[test]
    fn all_equal_scores() {
        let s = set(&[0.3, 0.3], &[0.3]);
        let e = compute_eer(&s).unwrap();
        assert_eq!(e.eer, 0.5);
        assert_eq!(e.threshold, 0.3);
        assert_eq!(compute_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn threshold_below_everything() {
        let s = set(&[0.1, 0.6], &[0.4, 0.9]);
        let f = fixed_threshold_eval(&s, -10.0).unwrap();
        assert_eq!((f.far, f.frr, f.hter), (1.0, 0.0, 0.5));
    }

    #[test]
    fn score_equal_to_threshold_is_bonafide() {
        let s = set(&[0.5], &[0.5]);
        let f = fixed_threshold_eval(&s, 0.5).unwrap();
        assert_eq!((f.far, f.frr), (0.0, 1.0));
    }

    #[test]
    fn single_class_rejected() {
        let s = set(&[0.1, 0.2], &[]);
        assert!(matches!(
            compute_eer(&s),
            Err(TraceError::SingleClass { .. })
        ));
        assert!(compute_auc(&s).is_err());
        assert!(fixed_threshold_eval(&s, 0.0).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            LabeledScores::from_pairs(&[f64::NAN], &[Spoof]),
            Err(TraceError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn histogram_counts() {
        let scores: Vec<f64> = (0..10).map(|i| i as f64 * 0.37).collect();
        let s = LabeledScores::from_pairs(&scores, &[Spoof; 10]).unwrap();
        let h = score_histogram(&s, 4).unwrap();
        assert_eq!(h.spoof.iter().sum::<u64>(), 10);
        assert_eq!(h.bonafide.iter().sum::<u64>(), 0);
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.spoof[3], 3);
    }

    #[test]
    fn histogram_all_equal() {
        let s = set(&[2.0, 2.0], &[2.0]);
        let h = score_histogram(&s, 50).unwrap();
        let occupied: Vec<usize> = (0..50)
            .filter(|&j| h.bonafide[j] + h.spoof[j] > 0)
            .collect();
        assert_eq!(occupied.len(), 1);
        assert!(score_histogram(&s, 0).is_err());
        assert!(score_histogram(&LabeledScores::default(), 3).is_err());
    }

    #[test]
    fn report_hter_and_csv() {
        let s = set(&[0.1, 0.6], &[0.4, 0.9]);
        let r = EvalReport::build(&s, Some(0.5), 5, 0).unwrap();
        let f = r.fixed.unwrap();
        assert_eq!(f.hter, (f.far + f.frr) / 2.0);
        assert!(r.roc_csv().starts_with("threshold,far,frr\n"));
        assert_eq!(r.histogram_csv().lines().count(), 6);
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
