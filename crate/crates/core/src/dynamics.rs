//! Unit-hypersphere projection and trajectory dynamics.
//!
//! For unit frames `u_t`:
//!
//! * `f1[t] = |u_{t+1} - u_t|` is the chord distance between neighbours,
//! * `f2[t] = f1[t+1] - f1[t]`,
//! * `angles[t]` is the angle between displacements `u_{t+1} - u_t` and
//!   `u_{t+2} - u_{t+1}`, marked invalid when either displacement is shorter
//!   than `eps_disp`.
//!
//! [`DynamicsBundle::compute`] produces all three in a single streaming pass
//! over the raw embeddings without materializing the normalized matrix. The
//! step-wise functions ([`normalize`], [`first_order`], ...) share the same
//! arithmetic kernels, so both routes agree bit for bit.

use crate::embedding_io::EmbeddingSequence;
use crate::error::{Result, TraceError};

pub const DEFAULT_EPS_NORM: f64 = 1e-8;
pub const DEFAULT_EPS_DISP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    /// Frames with L2 norm at or below this are rejected.
    pub eps_norm: f64,
    /// Displacements with norm at or below this invalidate the adjacent angles.
    pub eps_disp: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            eps_norm: DEFAULT_EPS_NORM,
            eps_disp: DEFAULT_EPS_DISP,
        }
    }
}

/// Frames projected onto the unit sphere, stored row-major in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTrajectory {
    n_frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl UnitTrajectory {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsBundle {
    /// Number of frames of the source utterance.
    pub n_frames: usize,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub angles: Vec<f64>,
    pub angle_valid: Vec<bool>,
}

impl DynamicsBundle {
    /// Computes F1, F2 and displacement angles in one pass over `seq`.
    ///
    /// Sequences too short for some of the outputs yield empty vectors for
    /// those outputs; statistics report the shortfall per statistic.
    pub fn compute(seq: &EmbeddingSequence, cfg: &DynamicsConfig) -> Result<Self> {
        let n = seq.n_frames();
        let dim = seq.dim();
        let mut prev_unit = vec![0.0; dim];
        let mut cur_unit = vec![0.0; dim];
        let mut prev_disp = vec![0.0; dim];
        let mut cur_disp = vec![0.0; dim];
        let mut prev_disp_norm = 0.0;

        let mut f1 = Vec::with_capacity(n.saturating_sub(1));
        let mut angles = Vec::with_capacity(n.saturating_sub(2));
        let mut angle_valid = Vec::with_capacity(n.saturating_sub(2));

        for (t, row) in seq.rows().enumerate() {
            unit_row(row, &mut cur_unit, cfg.eps_norm).ok_or(TraceError::ZeroNormFrame(t))?;
            if t >= 1 {
                let (ss, dot) = displace(&prev_unit, &cur_unit, &prev_disp, &mut cur_disp);
                let norm = ss.sqrt();
                f1.push(norm);
                if t >= 2 {
                    let (a, ok) = turning_angle(dot, prev_disp_norm, norm, cfg.eps_disp);
                    angles.push(a);
                    angle_valid.push(ok);
                }
                prev_disp_norm = norm;
                std::mem::swap(&mut prev_disp, &mut cur_disp);
            }
            std::mem::swap(&mut prev_unit, &mut cur_unit);
        }

        let f2 = forward_diff(&f1);
        Ok(DynamicsBundle {
            n_frames: n,
            f1,
            f2,
            angles,
            angle_valid,
        })
    }

    /// Builds the bundle from an already-normalized trajectory.
    pub fn from_trajectory(traj: &UnitTrajectory, cfg: &DynamicsConfig) -> Self {
        let f1 = if traj.n_frames >= 2 {
            chord_distances(traj)
        } else {
            Vec::new()
        };
        let f2 = forward_diff(&f1);
        let (angles, angle_valid) = if traj.n_frames >= 3 {
            angles_of(traj, cfg.eps_disp)
        } else {
            (Vec::new(), Vec::new())
        };
        DynamicsBundle {
            n_frames: traj.n_frames,
            f1,
            f2,
            angles,
            angle_valid,
        }
    }

    /// Angles whose adjacent displacements were both non-degenerate.
    pub fn valid_angles(&self) -> impl Iterator<Item = f64> + '_ {
        self.angles
            .iter()
            .zip(&self.angle_valid)
            .filter_map(|(&a, &ok)| ok.then_some(a))
    }
}

/// Projects every frame onto the unit hypersphere.
pub fn normalize(seq: &EmbeddingSequence, eps_norm: f64) -> Result<UnitTrajectory> {
    let dim = seq.dim();
    let mut data = vec![0.0; seq.n_frames() * dim];
    for (t, (row, out)) in seq.rows().zip(data.chunks_exact_mut(dim)).enumerate() {
        unit_row(row, out, eps_norm).ok_or(TraceError::ZeroNormFrame(t))?;
    }
    Ok(UnitTrajectory {
        n_frames: seq.n_frames(),
        dim,
        data,
    })
}

/// Chord distances between consecutive unit frames (length `T - 1`).
pub fn first_order(traj: &UnitTrajectory) -> Result<Vec<f64>> {
    if traj.n_frames < 2 {
        return Err(TraceError::TooShort {
            what: "dynamics",
            required: 2,
            actual: traj.n_frames,
        });
    }
    Ok(chord_distances(traj))
}

/// Forward differences of F1 (length `len - 1`).
pub fn second_order(f1: &[f64]) -> Result<Vec<f64>> {
    if f1.len() < 2 {
        return Err(TraceError::TooShort {
            what: "second-order dynamics",
            required: 2,
            actual: f1.len(),
        });
    }
    Ok(forward_diff(f1))
}

/// Turning angles between consecutive displacement vectors and their
/// validity mask (both length `T - 2`).
pub fn displacement_angles(traj: &UnitTrajectory, eps_disp: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if traj.n_frames < 3 {
        return Err(TraceError::TooShort {
            what: "angle statistics",
            required: 3,
            actual: traj.n_frames,
        });
    }
    Ok(angles_of(traj, eps_disp))
}

fn chord_distances(traj: &UnitTrajectory) -> Vec<f64> {
    let mut scratch_prev = vec![0.0; traj.dim];
    let mut scratch = vec![0.0; traj.dim];
    (1..traj.n_frames)
        .map(|t| {
            let (ss, _) = displace(traj.row(t - 1), traj.row(t), &scratch_prev, &mut scratch);
            std::mem::swap(&mut scratch_prev, &mut scratch);
            ss.sqrt()
        })
        .collect()
}

fn angles_of(traj: &UnitTrajectory, eps_disp: f64) -> (Vec<f64>, Vec<bool>) {
    let mut prev_disp = vec![0.0; traj.dim];
    let mut cur_disp = vec![0.0; traj.dim];
    let (ss, _) = displace(traj.row(0), traj.row(1), &cur_disp, &mut prev_disp);
    let mut prev_norm = ss.sqrt();
    let mut angles = Vec::with_capacity(traj.n_frames - 2);
    let mut valid = Vec::with_capacity(traj.n_frames - 2);
    for t in 2..traj.n_frames {
        let (ss, dot) = displace(traj.row(t - 1), traj.row(t), &prev_disp, &mut cur_disp);
        let norm = ss.sqrt();
        let (a, ok) = turning_angle(dot, prev_norm, norm, eps_disp);
        angles.push(a);
        valid.push(ok);
        prev_norm = norm;
        std::mem::swap(&mut prev_disp, &mut cur_disp);
    }
    (angles, valid)
}

fn forward_diff(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Writes `row / |row|` into `out`; `None` if the norm is at most `eps`.
#[inline]
fn unit_row(row: &[f32], out: &mut [f64], eps: f64) -> Option<()> {
    let mut acc = [0.0f64; 4];
    let chunks = row.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            let v = c[k] as f64;
            acc[k] += v * v;
        }
    }
    let mut ss = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for &v in tail {
        ss += (v as f64) * (v as f64);
    }
    let norm = ss.sqrt();
    if !(norm > eps) {
        return None;
    }
    let inv = 1.0 / norm;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v as f64 * inv;
    }
    Some(())
}

/// `out = b - a`; returns `(|out|^2, out . prev_disp)`.
#[inline]
fn displace(a: &[f64], b: &[f64], prev_disp: &[f64], out: &mut [f64]) -> (f64, f64) {
    let mut ss = [0.0f64; 4];
    let mut dot = [0.0f64; 4];
    let n = out.len();
    let split = n - n % 4;
    let mut i = 0;
    while i < split {
        for k in 0..4 {
            let d = b[i + k] - a[i + k];
            out[i + k] = d;
            ss[k] += d * d;
            dot[k] += d * prev_disp[i + k];
        }
        i += 4;
    }
    let mut ss_t = (ss[0] + ss[1]) + (ss[2] + ss[3]);
    let mut dot_t = (dot[0] + dot[1]) + (dot[2] + dot[3]);
    for j in split..n {
        let d = b[j] - a[j];
        out[j] = d;
        ss_t += d * d;
        dot_t += d * prev_disp[j];
    }
    (ss_t, dot_t)
}

#[inline]
fn turning_angle(dot: f64, n0: f64, n1: f64, eps: f64) -> (f64, bool) {
    if n0 > eps && n1 > eps {
        ((dot / (n0 * n1)).clamp(-1.0, 1.0).acos(), true)
    } else {
        (0.0, false)
    }
}
