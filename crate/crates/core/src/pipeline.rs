//! Corpus-level stages and their CSV interchange formats.
//!
//! * stats CSV: `utterance_id,label,<id1>,<id2>,...`
//! * scores CSV: `utterance_id,score,decision`
//!
//! Floating-point fields are written with 17 significant digits, so a value
//! read back is bit-identical to the one written. Rows always follow manifest
//! order regardless of the executor's thread count.

use std::collections::HashMap;

use crate::calibration::{self, CalibrationProfile, GridConfig, GridSearchOutcome, Preset};
use crate::dynamics::{DynamicsBundle, DynamicsConfig};
use crate::embedding_io::{self, Label, ManifestEntry};
use crate::error::{Result, TraceError};
use crate::exec::Executor;
use crate::metrics::{ClassLabel, EvalReport, LabeledScores, ScoredUtterance};
use crate::statistics::{self, StatisticId, StatisticVector};

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| TraceError::Mismatch(format!("line {line}: bad {what} `{s}`")))
}

/// Loads one utterance and computes `ids` on it.
pub fn utterance_stats(
    entry: &ManifestEntry,
    ids: &[StatisticId],
    window_w: usize,
    cfg: &DynamicsConfig,
) -> Result<StatisticVector> {
    let run = || {
        let seq = embedding_io::read_tef(&entry.path)?;
        let bundle = DynamicsBundle::compute(&seq, cfg)?;
        statistics::compute(&entry.utterance_id, ids, &bundle, window_w)
    };
    run().map_err(|e| TraceError::for_utterance(&entry.utterance_id, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub label: Label,
    pub vector: StatisticVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub ids: Vec<StatisticId>,
    pub rows: Vec<StatsRow>,
}

/// Outcome of a per-utterance corpus stage.
#[derive(Debug)]
pub struct Batch<T> {
    pub items: T,
    /// Per-utterance failures tolerated under `skip_errors`.
    pub skipped: Vec<TraceError>,
}

fn collect_rows<T>(results: Vec<Result<T>>, skip_errors: bool) -> Result<Batch<Vec<T>>> {
    let mut items = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(v) => items.push(v),
            Err(e) if skip_errors => skipped.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(Batch { items, skipped })
}

pub fn compute_stats(
    entries: &[ManifestEntry],
    ids: &[StatisticId],
    window_w: usize,
    exec: &Executor,
    skip_errors: bool,
) -> Result<Batch<StatsTable>> {
    if window_w == 0 {
        return Err(TraceError::InvalidWindow);
    }
    let cfg = DynamicsConfig::default();
    let results = exec.map(entries, |e| {
        utterance_stats(e, ids, window_w, &cfg).map(|vector| StatsRow {
            label: e.label,
            vector,
        })
    });
    let batch = collect_rows(results, skip_errors)?;
    Ok(Batch {
        items: StatsTable {
            ids: ids.to_vec(),
            rows: batch.items,
        },
        skipped: batch.skipped,
    })
}

impl StatsTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["utterance_id".to_string(), "label".to_string()];
        header.extend(self.ids.iter().map(|id| id.to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.vector.utterance_id.clone(), row.label.to_string()];
            for &id in &self.ids {
                rec.push(format_f64(row.vector.get(id)?));
            }
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "utterance_id" || &header[1] != "label" {
            return Err(TraceError::Mismatch(
                "stats CSV header must start with utterance_id,label and name at least one statistic".into(),
            ));
        }
        let ids: Vec<StatisticId> = header
            .iter()
            .skip(2)
            .map(str::parse)
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let label: Label = rec[1]
                .parse()
                .map_err(|m| TraceError::Mismatch(format!("line {line}: {m}")))?;
            let mut values = std::collections::BTreeMap::new();
            for (i, &id) in ids.iter().enumerate() {
                values.insert(id, parse_f64(&rec[i + 2], id.as_str(), line)?);
            }
            rows.push(StatsRow {
                label,
                vector: StatisticVector {
                    utterance_id: rec[0].to_string(),
                    values,
                    notes: Vec::new(),
                },
            });
        }
        Ok(StatsTable { ids, rows })
    }

    /// Rows with a bonafide/spoof label, split into vectors and labels.
    pub fn labeled(&self) -> (Vec<StatisticVector>, Vec<ClassLabel>) {
        self.rows
            .iter()
            .filter_map(|r| class_of(r.label).map(|l| (r.vector.clone(), l)))
            .unzip()
    }
}

pub fn class_of(label: Label) -> Option<ClassLabel> {
    match label {
        Label::Bonafide => Some(ClassLabel::Bonafide),
        Label::Spoof => Some(ClassLabel::Spoof),
        Label::Unknown => None,
    }
}

/// Grid-search calibration over a statistics table.
pub fn calibrate(
    table: &StatsTable,
    candidates: &[StatisticId],
    cfg: &GridConfig,
    exec: &Executor,
) -> Result<GridSearchOutcome> {
    let (matrix, labels) = table.labeled();
    calibration::grid_search(&matrix, &labels, candidates, cfg, exec)
}

/// Fits a preset's fixed combination over a statistics table.
pub fn calibrate_preset(
    table: &StatsTable,
    preset: &Preset,
    raw_mode: bool,
    window_w: usize,
) -> Result<CalibrationProfile> {
    let (matrix, labels) = table.labeled();
    calibration::fit_fixed(&matrix, &labels, preset, raw_mode, window_w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub utterance_id: String,
    pub score: f64,
    pub spoof: bool,
}

pub fn score_corpus(
    entries: &[ManifestEntry],
    profile: &CalibrationProfile,
    exec: &Executor,
    skip_errors: bool,
) -> Result<Batch<Vec<ScoreRow>>> {
    profile.validate()?;
    let cfg = DynamicsConfig::default();
    let results = exec.map(entries, |e| {
        let v = utterance_stats(e, &profile.statistic_ids, profile.window_w, &cfg)?;
        let score = profile
            .fuse(&v)
            .map_err(|err| TraceError::for_utterance(&e.utterance_id, err))?;
        Ok(ScoreRow {
            utterance_id: e.utterance_id.clone(),
            score,
            spoof: profile.decide(score),
        })
    });
    collect_rows(results, skip_errors)
}

/// Scores a precomputed statistics table with a profile.
pub fn score_table(table: &StatsTable, profile: &CalibrationProfile) -> Result<Vec<ScoreRow>> {
    table
        .rows
        .iter()
        .map(|r| {
            let score = profile
                .fuse(&r.vector)
                .map_err(|e| TraceError::for_utterance(&r.vector.utterance_id, e))?;
            Ok(ScoreRow {
                utterance_id: r.vector.utterance_id.clone(),
                score,
                spoof: profile.decide(score),
            })
        })
        .collect()
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["utterance_id", "score", "decision"])?;
    for r in rows {
        let decision = if r.spoof { "spoof" } else { "bonafide" };
        w.write_record([r.utterance_id.as_str(), &format_f64(r.score), decision])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a scores CSV into (id, score) pairs; the decision column is
/// ignored.
pub fn scores_from_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "utterance_id" || &header[1] != "score" {
        return Err(TraceError::Mismatch(
            "scores CSV header must start with utterance_id,score".into(),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((rec[0].to_string(), parse_f64(&rec[1], "score", line)?));
    }
    Ok(out)
}

/// Joins scores with manifest labels (1:1 on utterance id) and evaluates.
/// Utterances labeled `unknown` are counted but excluded from the metrics.
pub fn evaluate(
    scores: &[(String, f64)],
    manifest: &[ManifestEntry],
    fixed_threshold: Option<f64>,
    n_bins: usize,
) -> Result<EvalReport> {
    let labels: HashMap<&str, Label> = manifest
        .iter()
        .map(|e| (e.utterance_id.as_str(), e.label))
        .collect();
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(scores.len());
    let mut entries = Vec::with_capacity(scores.len());
    let mut n_unlabeled = 0;
    for (id, score) in scores {
        let label = *labels.get(id.as_str()).ok_or_else(|| {
            TraceError::Mismatch(format!("scored utterance `{id}` is not in the manifest"))
        })?;
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(TraceError::Mismatch(format!(
                "utterance `{id}` scored twice"
            )));
        }
        match class_of(label) {
            Some(label) => entries.push(ScoredUtterance {
                utterance_id: id.clone(),
                score: *score,
                label,
            }),
            None => n_unlabeled += 1,
        }
    }
    if let Some(missing) = manifest
        .iter()
        .find(|e| !seen.contains_key(e.utterance_id.as_str()))
    {
        return Err(TraceError::Mismatch(format!(
            "manifest utterance `{}` has no score",
            missing.utterance_id
        )));
    }
    EvalReport::build(
        &LabeledScores::new(entries)?,
        fixed_threshold,
        n_bins,
        n_unlabeled,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn entry(id: &str, label: Label) -> ManifestEntry {
        ManifestEntry {
            utterance_id: id.into(),
            path: PathBuf::from(format!("{id}.tef")),
            label,
        }
    }

    #[test]
    fn stats_csv_round_trip_is_exact() {
        let ids = vec![StatisticId::F1Rms, StatisticId::AngleMean];
        let rows = (0..4)
            .map(|i| StatsRow {
                label: if i % 2 == 0 {
                    Label::Bonafide
                } else {
                    Label::Spoof
                },
                vector: StatisticVector {
                    utterance_id: format!("u,{i}"),
                    values: [
                        (StatisticId::F1Rms, 0.1 + i as f64 / 3.0),
                        (
                            StatisticId::AngleMean,
                            std::f64::consts::PI / (i + 1) as f64,
                        ),
                    ]
                    .into_iter()
                    .collect(),
                    notes: Vec::new(),
                },
            })
            .collect();
        let t = StatsTable { ids, rows };
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("utterance_id,label,f1_rms,angle_mean\n"));
        assert_eq!(StatsTable::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn stats_csv_rejects_unknown_column() {
        let text = "utterance_id,label,f1_bogus\nu,spoof,1.0\n";
        assert!(matches!(
            StatsTable::from_csv(text),
            Err(TraceError::UnknownStatistic(_))
        ));
    }

    #[test]
    fn scores_csv_round_trip() {
        let rows = vec![
            ScoreRow {
                utterance_id: "a".into(),
                score: 1.0 / 3.0,
                spoof: true,
            },
            ScoreRow {
                utterance_id: "b".into(),
                score: -2e-300,
                spoof: false,
            },
        ];
        let text = scores_to_csv(&rows).unwrap();
        assert!(text.starts_with("utterance_id,score,decision\n"));
        let back = scores_from_csv(&text).unwrap();
        assert_eq!(back, vec![("a".into(), 1.0 / 3.0), ("b".into(), -2e-300)]);
    }

    #[test]
    fn evaluate_worked_example() {
        let manifest = vec![
            entry("b1", Label::Bonafide),
            entry("b2", Label::Bonafide),
            entry("s1", Label::Spoof),
            entry("s2", Label::Spoof),
            entry("x", Label::Unknown),
        ];
        let scores = vec![
            ("b1".to_string(), 0.1),
            ("b2".to_string(), 0.6),
            ("s1".to_string(), 0.4),
            ("s2".to_string(), 0.9),
            ("x".to_string(), 0.0),
        ];
        let r = evaluate(&scores, &manifest, Some(-1.0), 10).unwrap();
        assert!((r.eer - 0.5).abs() < 1e-12);
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.n_unlabeled, 1);
        assert_eq!(r.fixed.unwrap().hter, 0.5);
    }

    #[test]
    fn evaluate_id_mismatch() {
        let manifest = vec![entry("a", Label::Bonafide), entry("b", Label::Spoof)];
        let extra = vec![
            ("a".to_string(), 0.1),
            ("b".to_string(), 0.2),
            ("c".to_string(), 0.3),
        ];
        assert!(evaluate(&extra, &manifest, None, 5).is_err());
        let missing = vec![("a".to_string(), 0.1)];
        assert!(evaluate(&missing, &manifest, None, 5).is_err());
        let dup = vec![
            ("a".to_string(), 0.1),
            ("a".to_string(), 0.1),
            ("b".to_string(), 0.2),
        ];
        assert!(evaluate(&dup, &manifest, None, 5).is_err());
    }

    #[test]
    fn missing_file_names_utterance() {
        let entries = vec![entry("ghost", Label::Spoof)];
        let err = compute_stats(
            &entries,
            &[StatisticId::F1Rms],
            25,
            &Executor::sequential(),
            false,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("utterance `ghost`:"), "{err}");
        let ok = compute_stats(
            &entries,
            &[StatisticId::F1Rms],
            25,
            &Executor::sequential(),
            true,
        )
        .unwrap();
        assert!(ok.items.rows.is_empty());
        assert_eq!(ok.skipped.len(), 1);
    }
}
