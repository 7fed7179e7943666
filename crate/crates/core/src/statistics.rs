//! Catalog of utterance-level summary statistics over trajectory dynamics.
//!
//! Every statistic maps a [`DynamicsBundle`] to one `f64`. Conventions:
//!
//! * standard deviations and moments are population (divide by `n`);
//! * kurtosis is excess kurtosis `m4 / m2^2 - 3`, defined as 0 (and noted as
//!   degenerate) when the variance is below `1e-12`;
//! * percentiles interpolate linearly at rank `p * (n - 1)` of the sorted data;
//! * `top5`/`top2` are the means of the `ceil(0.05 n)` / `ceil(0.02 n)` largest
//!   values;
//! * window statistics use every full window of width `W` (stride 1). If `W`
//!   exceeds the F1 length all three fall back to the full-sequence RMS
//!   (spread 0) and a [`StatNote::WindowFallback`] is attached.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsBundle;
use crate::error::{Result, TraceError};

pub const DEFAULT_WINDOW: usize = 25;
const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Base,
    Derivative,
    Window,
    Tail,
    Angle,
    SecondOrder,
}

impl Family {
    /// True for families computed from the first-order (F1) sequence.
    pub fn is_first_order(self) -> bool {
        matches!(
            self,
            Family::Base | Family::Derivative | Family::Window | Family::Tail
        )
    }
}

macro_rules! catalog {
    ($($variant:ident => $name:literal, $family:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum StatisticId {
            $($variant,)*
        }

        impl StatisticId {
            pub const ALL: &'static [StatisticId] = &[$(StatisticId::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(StatisticId::$variant => $name,)*
                }
            }

            pub fn family(self) -> Family {
                match self {
                    $(StatisticId::$variant => Family::$family,)*
                }
            }
        }

        impl FromStr for StatisticId {
            type Err = TraceError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(StatisticId::$variant),)*
                    other => Err(TraceError::UnknownStatistic(other.to_string())),
                }
            }
        }
    };
}

catalog! {
    F1Mean => "f1_mean", Base;
    F1MeanAbs => "f1_mean_abs", Base;
    F1Rms => "f1_rms", Base;
    F1Std => "f1_std", Base;
    F1Kurtosis => "f1_kurtosis", Base;
    F1Dt1Rms => "f1_dt1_rms", Derivative;
    F1Dt2Rms => "f1_dt2_rms", Derivative;
    F1Dt3Rms => "f1_dt3_rms", Derivative;
    F1Dt4Rms => "f1_dt4_rms", Derivative;
    F1Dt5Rms => "f1_dt5_rms", Derivative;
    F1MaxwRms => "f1_maxw_rms", Window;
    F1MinwRms => "f1_minw_rms", Window;
    F1Spreadw => "f1_spreadw", Window;
    F1P99 => "f1_p99", Tail;
    F1P95 => "f1_p95", Tail;
    F1Top5Mean => "f1_top5_mean", Tail;
    F1Top2Mean => "f1_top2_mean", Tail;
    AngleMean => "angle_mean", Angle;
    AngleRms => "angle_rms", Angle;
    AngleStd => "angle_std", Angle;
    F2MeanAbs => "f2_mean_abs", SecondOrder;
    F2Rms => "f2_rms", SecondOrder;
    F2Std => "f2_std", SecondOrder;
    F2Kurtosis => "f2_kurtosis", SecondOrder;
}

impl StatisticId {
    /// Minimum length of the statistic's input sequence, and what that
    /// sequence is called in error messages.
    fn requirement(self) -> (usize, Input) {
        use StatisticId::*;
        match self {
            F1Mean | F1MeanAbs | F1Rms => (1, Input::F1),
            F1Std | F1Kurtosis => (2, Input::F1),
            F1Dt1Rms => (2, Input::F1),
            F1Dt2Rms => (3, Input::F1),
            F1Dt3Rms => (4, Input::F1),
            F1Dt4Rms => (5, Input::F1),
            F1Dt5Rms => (6, Input::F1),
            F1MaxwRms | F1MinwRms | F1Spreadw => (1, Input::F1),
            F1P99 | F1P95 | F1Top5Mean | F1Top2Mean => (1, Input::F1),
            AngleMean | AngleRms => (1, Input::Angles),
            AngleStd => (2, Input::Angles),
            F2MeanAbs | F2Rms => (1, Input::F2),
            F2Std | F2Kurtosis => (2, Input::F2),
        }
    }

    /// Minimum number of frames an utterance needs for this statistic.
    pub fn min_frames(self) -> usize {
        let (n, input) = self.requirement();
        match input {
            Input::F1 => n + 1,
            Input::F2 | Input::Angles => n + 2,
        }
    }
}

#[derive(Clone, Copy)]
enum Input {
    F1,
    F2,
    Angles,
}

impl fmt::Display for StatisticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for StatisticId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StatisticId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated id list, rejecting unknown ids and duplicates.
pub fn parse_id_list(s: &str) -> Result<Vec<StatisticId>> {
    let mut ids = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let id: StatisticId = tok.parse()?;
        if ids.contains(&id) {
            return Err(TraceError::InvalidConfig(format!(
                "statistic `{id}` listed twice"
            )));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(TraceError::InvalidConfig("empty statistic list".into()));
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StatNote {
    /// The window was wider than the F1 sequence.
    WindowFallback { window: usize, len: usize },
    /// Variance below the degeneracy floor; kurtosis reported as 0.
    DegenerateKurtosis(StatisticId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticVector {
    pub utterance_id: String,
    pub values: BTreeMap<StatisticId, f64>,
    pub notes: Vec<StatNote>,
}

impl StatisticVector {
    pub fn get(&self, id: StatisticId) -> Result<f64> {
        self.values
            .get(&id)
            .copied()
            .ok_or_else(|| TraceError::MissingStatistic(id.to_string()))
    }
}

/// Computes the requested statistics for one utterance.
pub fn compute(
    utterance_id: &str,
    ids: &[StatisticId],
    bundle: &DynamicsBundle,
    window_w: usize,
) -> Result<StatisticVector> {
    if window_w == 0 {
        return Err(TraceError::InvalidWindow);
    }
    for &id in ids {
        check_length(id, bundle)?;
    }

    let mut ctx = Context::new(bundle, window_w);
    let mut values = BTreeMap::new();
    for &id in ids {
        let v = ctx.value(id);
        values.insert(id, v);
    }
    Ok(StatisticVector {
        utterance_id: utterance_id.to_string(),
        values,
        notes: ctx.notes,
    })
}

fn check_length(id: StatisticId, bundle: &DynamicsBundle) -> Result<()> {
    let (required, input) = id.requirement();
    let too_short = |required, unit, actual| TraceError::StatisticTooShort {
        id: id.to_string(),
        required,
        unit,
        actual,
    };
    if bundle.n_frames < id.min_frames() {
        return Err(too_short(id.min_frames(), "frames", bundle.n_frames));
    }
    if let Input::Angles = input {
        let n_valid = bundle.angle_valid.iter().filter(|&&v| v).count();
        if n_valid < required {
            return Err(too_short(required, "valid angles", n_valid));
        }
    }
    Ok(())
}

/// Lazily shared intermediates for one bundle.
struct Context<'a> {
    bundle: &'a DynamicsBundle,
    window_w: usize,
    sorted_f1: Option<Vec<f64>>,
    valid_angles: Option<Vec<f64>>,
    window_range: Option<(f64, f64)>,
    notes: Vec<StatNote>,
}

impl<'a> Context<'a> {
    fn new(bundle: &'a DynamicsBundle, window_w: usize) -> Self {
        Context {
            bundle,
            window_w,
            sorted_f1: None,
            valid_angles: None,
            window_range: None,
            notes: Vec::new(),
        }
    }

    fn sorted_f1(&mut self) -> &[f64] {
        let f1 = &self.bundle.f1;
        self.sorted_f1.get_or_insert_with(|| {
            let mut s = f1.clone();
            s.sort_by(f64::total_cmp);
            s
        })
    }

    fn angles(&mut self) -> &[f64] {
        let bundle = self.bundle;
        self.valid_angles
            .get_or_insert_with(|| bundle.valid_angles().collect())
    }

    fn window(&mut self) -> (f64, f64) {
        if let Some(r) = self.window_range {
            return r;
        }
        let f1 = &self.bundle.f1;
        let r = match window_rms_range(f1, self.window_w) {
            Some(r) => r,
            None => {
                self.notes.push(StatNote::WindowFallback {
                    window: self.window_w,
                    len: f1.len(),
                });
                let full = rms(f1);
                (full, full)
            }
        };
        self.window_range = Some(r);
        r
    }

    fn kurtosis_of(&mut self, id: StatisticId, xs: &[f64]) -> f64 {
        let m = Moments::of(xs);
        if m.m2 < DEGENERATE_VARIANCE {
            self.notes.push(StatNote::DegenerateKurtosis(id));
            0.0
        } else {
            m.m4 / (m.m2 * m.m2) - 3.0
        }
    }

    fn value(&mut self, id: StatisticId) -> f64 {
        use StatisticId::*;
        let f1 = &self.bundle.f1;
        let f2 = &self.bundle.f2;
        match id {
            F1Mean => mean(f1),
            F1MeanAbs => mean_abs(f1),
            F1Rms => rms(f1),
            F1Std => Moments::of(f1).m2.sqrt(),
            F1Kurtosis => self.kurtosis_of(id, f1),
            F1Dt1Rms => lag_rms(f1, 1),
            F1Dt2Rms => lag_rms(f1, 2),
            F1Dt3Rms => lag_rms(f1, 3),
            F1Dt4Rms => lag_rms(f1, 4),
            F1Dt5Rms => lag_rms(f1, 5),
            F1MaxwRms => self.window().1,
            F1MinwRms => self.window().0,
            F1Spreadw => {
                let (lo, hi) = self.window();
                hi - lo
            }
            F1P99 => percentile(self.sorted_f1(), 0.99),
            F1P95 => percentile(self.sorted_f1(), 0.95),
            F1Top5Mean => top_mean(self.sorted_f1(), 5),
            F1Top2Mean => top_mean(self.sorted_f1(), 2),
            AngleMean => mean(self.angles()),
            AngleRms => rms(self.angles()),
            AngleStd => Moments::of(self.angles()).m2.sqrt(),
            F2MeanAbs => mean_abs(f2),
            F2Rms => rms(f2),
            F2Std => Moments::of(f2).m2.sqrt(),
            F2Kurtosis => self.kurtosis_of(id, f2),
        }
    }
}

struct Moments {
    m2: f64,
    m4: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        // shifted by the first sample, so constant input gives exactly 0
        let x0 = xs[0];
        let n = xs.len() as f64;
        let mu = xs.iter().map(|x| x - x0).sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for &x in xs {
            let d = (x - x0) - mu;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        Moments {
            m2: m2 / n,
            m4: m4 / n,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_abs(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn lag_rms(xs: &[f64], k: usize) -> f64 {
    let n = xs.len() - k;
    let ss: f64 = xs[k..].iter().zip(xs).map(|(b, a)| (b - a) * (b - a)).sum();
    (ss / n as f64).sqrt()
}

/// (min, max) of the RMS over all full windows of width `w`, or `None` if
/// no full window fits.
fn window_rms_range(xs: &[f64], w: usize) -> Option<(f64, f64)> {
    if w > xs.len() {
        return None;
    }
    let mut sum: f64 = xs[..w].iter().map(|x| x * x).sum();
    let (mut lo, mut hi) = (sum, sum);
    for i in w..xs.len() {
        sum += xs[i] * xs[i] - xs[i - w] * xs[i - w];
        lo = lo.min(sum);
        hi = hi.max(sum);
    }
    let to_rms = |s: f64| (s.max(0.0) / w as f64).sqrt();
    Some((to_rms(lo), to_rms(hi)))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) => sorted[lo] + frac * (next - sorted[lo]),
        None => sorted[lo],
    }
}

/// Mean of the `ceil(percent * n / 100)` largest values.
fn top_mean(sorted: &[f64], percent: usize) -> f64 {
    let n = sorted.len();
    let k = (percent * n).div_ceil(100).max(1);
    sorted[n - k..].iter().sum::<f64>() / k as f64
}
