//! Naive reference implementations used as test oracles. Each follows the
//! textbook definition directly (multi-pass, quadratic where convenient) and
//! shares no code with the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use trace_core::synth::SplitMix64;
use trace_core::ClassLabel;

pub fn gaussian_rows(rng: &mut SplitMix64, t: usize, l: usize) -> Vec<Vec<f32>> {
    (0..t)
        .map(|_| (0..l).map(|_| rng.next_normal() as f32).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn unit_rows(rows: &[Vec<f32>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let r: Vec<f64> = r.iter().map(|&x| f64::from(x)).collect();
            let n = norm(&r);
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

pub fn naive_f1(units: &[Vec<f64>]) -> Vec<f64> {
    units
        .windows(2)
        .map(|w| {
            norm(
                &w[1]
                    .iter()
                    .zip(&w[0])
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}

/// Angle between consecutive displacements, `None` when either has norm at
/// most `eps`.
pub fn naive_angles(units: &[Vec<f64>], eps: f64) -> Vec<Option<f64>> {
    let disp: Vec<Vec<f64>> = units
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect();
    disp.windows(2)
        .map(|w| {
            let (nu, nv) = (norm(&w[0]), norm(&w[1]));
            if nu <= eps || nv <= eps {
                None
            } else {
                Some((dot(&w[0], &w[1]) / (nu * nv)).clamp(-1.0, 1.0).acos())
            }
        })
        .collect()
}

pub fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn central(x: &[f64], p: i32) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(p)).sum::<f64>() / x.len() as f64
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn kurtosis(x: &[f64]) -> f64 {
    let m2 = central(x, 2);
    if m2 < 1e-12 {
        0.0
    } else {
        central(x, 4) / (m2 * m2) - 3.0
    }
}

fn lag_rms(x: &[f64], k: usize) -> f64 {
    let d: Vec<f64> = (0..x.len() - k).map(|t| x[t + k] - x[t]).collect();
    rms(&d)
}

fn windows_rms(x: &[f64], w: usize) -> Vec<f64> {
    if w > x.len() {
        return vec![rms(x)];
    }
    x.windows(w).map(rms).collect()
}

fn percentile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

fn top_mean(x: &[f64], percent: usize) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let k = (percent * s.len()).div_ceil(100);
    mean(&s[..k])
}

/// Every catalog statistic that the input lengths allow, keyed by id.
pub fn naive_stats(
    f1: &[f64],
    f2: &[f64],
    valid_angles: &[f64],
    w: usize,
) -> BTreeMap<&'static str, f64> {
    let mut m = BTreeMap::new();
    let n = f1.len();
    if n >= 1 {
        m.insert("f1_mean", mean(f1));
        m.insert(
            "f1_mean_abs",
            mean(&f1.iter().map(|v| v.abs()).collect::<Vec<_>>()),
        );
        m.insert("f1_rms", rms(f1));
        let win = windows_rms(f1, w);
        let maxw = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let minw = win.iter().copied().fold(f64::INFINITY, f64::min);
        m.insert("f1_maxw_rms", maxw);
        m.insert("f1_minw_rms", minw);
        m.insert("f1_spreadw", maxw - minw);
        m.insert("f1_p99", percentile(f1, 0.99));
        m.insert("f1_p95", percentile(f1, 0.95));
        m.insert("f1_top5_mean", top_mean(f1, 5));
        m.insert("f1_top2_mean", top_mean(f1, 2));
    }
    if n >= 2 {
        m.insert("f1_std", central(f1, 2).sqrt());
        m.insert("f1_kurtosis", kurtosis(f1));
    }
    let dt = [
        "f1_dt1_rms",
        "f1_dt2_rms",
        "f1_dt3_rms",
        "f1_dt4_rms",
        "f1_dt5_rms",
    ];
    for (i, name) in dt.iter().enumerate() {
        let k = i + 1;
        if n > k {
            m.insert(*name, lag_rms(f1, k));
        }
    }
    if !valid_angles.is_empty() {
        m.insert("angle_mean", mean(valid_angles));
        m.insert("angle_rms", rms(valid_angles));
    }
    if valid_angles.len() >= 2 {
        m.insert("angle_std", central(valid_angles, 2).sqrt());
    }
    if !f2.is_empty() {
        m.insert(
            "f2_mean_abs",
            mean(&f2.iter().map(|v| v.abs()).collect::<Vec<_>>()),
        );
        m.insert("f2_rms", rms(f2));
    }
    if f2.len() >= 2 {
        m.insert("f2_std", central(f2, 2).sqrt());
        m.insert("f2_kurtosis", kurtosis(f2));
    }
    m
}

pub struct SweepOracle {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
}

/// Direct-count error rates at every midpoint between distinct scores plus
/// one sentinel on each side (half an end gap out, or one unit out when all
/// scores coincide).
pub fn sweep_oracle(scores: &[f64], labels: &[ClassLabel]) -> SweepOracle {
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let m = distinct.len();
    let mut thresholds = Vec::new();
    if m == 1 {
        thresholds.push(distinct[0] - 1.0);
        thresholds.push(distinct[0] + 1.0);
    } else {
        thresholds.push(distinct[0] - (distinct[1] - distinct[0]) / 2.0);
        for j in 0..m - 1 {
            thresholds.push(distinct[j] + (distinct[j + 1] - distinct[j]) / 2.0);
        }
        thresholds.push(distinct[m - 1] + (distinct[m - 1] - distinct[m - 2]) / 2.0);
    }
    let n_b = labels
        .iter()
        .filter(|&&l| l == ClassLabel::Bonafide)
        .count() as f64;
    let n_s = labels.len() as f64 - n_b;
    let mut far = Vec::new();
    let mut frr = Vec::new();
    for &t in &thresholds {
        let fa = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l == ClassLabel::Bonafide && s > t)
            .count();
        let fr = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l == ClassLabel::Spoof && s <= t)
            .count();
        far.push(fa as f64 / n_b);
        frr.push(fr as f64 / n_s);
    }
    SweepOracle {
        thresholds,
        far,
        frr,
    }
}

/// Linear interpolation of the FAR/FRR crossing over the oracle sweep.
pub fn eer_oracle(scores: &[f64], labels: &[ClassLabel]) -> (f64, f64) {
    let o = sweep_oracle(scores, labels);
    for i in 0..o.thresholds.len() {
        let d = o.far[i] - o.frr[i];
        if d <= 0.0 {
            if d == 0.0 || i == 0 {
                return (o.far[i], o.thresholds[i]);
            }
            let dp = o.far[i - 1] - o.frr[i - 1];
            let a = dp / (dp - d);
            return (
                o.far[i - 1] + a * (o.far[i] - o.far[i - 1]),
                o.thresholds[i - 1] + a * (o.thresholds[i] - o.thresholds[i - 1]),
            );
        }
    }
    unreachable!("sweep ends with FAR 0")
}

/// Fraction of (spoof, bonafide) pairs with the spoof scored higher, ties ½.
pub fn auc_oracle(scores: &[f64], labels: &[ClassLabel]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (&s, &ls) in scores.iter().zip(labels) {
        if ls != ClassLabel::Spoof {
            continue;
        }
        for (&b, &lb) in scores.iter().zip(labels) {
            if lb != ClassLabel::Bonafide {
                continue;
            }
            pairs += 1.0;
            if s > b {
                wins += 1.0;
            } else if s == b {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn random_labels(rng: &mut SplitMix64, n: usize) -> Vec<ClassLabel> {
    let mut labels: Vec<ClassLabel> = (0..n)
        .map(|_| {
            if rng.next_u64() & 1 == 0 {
                ClassLabel::Bonafide
            } else {
                ClassLabel::Spoof
            }
        })
        .collect();
    labels[0] = ClassLabel::Bonafide;
    labels[n - 1] = ClassLabel::Spoof;
    labels
}

/// Best EER over every subset of at most `max_subset` columns and every
/// strictly positive integer weight split summing to `units`, after z-scoring
/// each column and orienting spoof-high.
pub fn grid_oracle(
    columns: &[Vec<f64>],
    labels: &[ClassLabel],
    max_subset: usize,
    units: u32,
) -> (f64, usize) {
    let z: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = mean(c);
            let s = central(c, 2).sqrt();
            c.iter().map(|x| (x - m) / s).collect()
        })
        .collect();
    let k = columns.len();
    let mut best = f64::INFINITY;
    let mut count = 0;
    for mask in 1u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        if members.len() > max_subset {
            continue;
        }
        let mut splits = Vec::new();
        match members.len() {
            1 => splits.push(vec![units]),
            2 => (1..units).for_each(|a| splits.push(vec![a, units - a])),
            3 => {
                for a in 1..units {
                    for b in 1..units - a {
                        splits.push(vec![a, b, units - a - b]);
                    }
                }
            }
            _ => unreachable!(),
        }
        for split in splits {
            count += 1;
            let fused: Vec<f64> = (0..labels.len())
                .map(|u| {
                    members
                        .iter()
                        .zip(&split)
                        .map(|(&m, &w)| f64::from(w) / f64::from(units) * z[m][u])
                        .sum()
                })
                .collect();
            let class_mean = |c: ClassLabel| {
                let v: Vec<f64> = fused
                    .iter()
                    .zip(labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(s, _)| *s)
                    .collect();
                mean(&v)
            };
            let sign = if class_mean(ClassLabel::Spoof) >= class_mean(ClassLabel::Bonafide) {
                1.0
            } else {
                -1.0
            };
            let oriented: Vec<f64> = fused.iter().map(|s| sign * s).collect();
            best = best.min(eer_oracle(&oriented, labels).0);
        }
    }
    (best, count)
}
