//! Seeded synthetic trajectories on the unit hypersphere.
//!
//! Bona fide trajectories drift smoothly: each frame is the previous one
//! rotated by a small angle within the plane spanned by the point and a unit
//! tangent direction. The tangent follows an AR(1) process:
//!
//! ```text
//! u' = normalize(p * u + sqrt(1 - p^2) * g)
//! ```
//!
//! where `g` is a Gaussian vector projected onto the tangent space and
//! normalized, and `p` is `direction_persistence`. Step angles are
//! `step_angle_mean + step_angle_jitter * N(0, 1)`, floored at 0.
//!
//! Spoofed trajectories additionally jump by `jump_angle` toward a fresh
//! random direction at each splice position `p`: the jump replaces the
//! regular steps from frame `p` to frame `p + crossfade_frames + 1`, spread
//! evenly along the great circle (spherical linear interpolation). Without
//! crossfade the whole jump lands on `f1[p]`.
//!
//! # Random numbers
//!
//! All randomness comes from [`SplitMix64`], so other implementations can
//! reproduce corpora exactly. Uniforms take the top 53 bits of each output;
//! normals use the cosine branch of Box-Muller, one normal per two uniforms:
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. Each utterance draws from two
//! streams seeded with [`derive_seed`]: stream 0 drives the smooth
//! trajectory, stream 1 the splice positions and jump directions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::embedding_io::{self, EmbeddingSequence, Label};
use crate::error::{Result, TraceError};
use crate::exec::Executor;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Uniform integer in `[0, n)` by rejection (no modulo bias).
    pub fn next_below(&mut self, n: u64) -> u64 {
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

/// Seed for stream `stream` of item `index` under a base seed.
pub fn derive_seed(seed: u64, index: u64, stream: u64) -> u64 {
    let mut g = SplitMix64::new(seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let a = g.next_u64();
    SplitMix64::new(a ^ stream.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)).next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_frames: usize,
    pub dim: usize,
    pub step_angle_mean: f64,
    pub step_angle_jitter: f64,
    pub direction_persistence: f64,
    pub n_splices: usize,
    pub jump_angle: f64,
    pub crossfade_frames: usize,
    pub frame_rate_hz: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_frames: 500,
            dim: 64,
            step_angle_mean: 0.05,
            step_angle_jitter: 0.01,
            direction_persistence: 0.9,
            n_splices: 0,
            jump_angle: PI / 2.0,
            crossfade_frames: 0,
            frame_rate_hz: 50.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Default bona fide generator with a given seed.
    pub fn bonafide(seed: u64) -> Self {
        SynthConfig {
            seed,
            ..SynthConfig::default()
        }
    }

    /// Default generator with one splice of `jump_angle`.
    pub fn spoof(seed: u64, jump_angle: f64) -> Self {
        SynthConfig {
            seed,
            n_splices: 1,
            jump_angle,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TraceError::InvalidConfig(m));
        if self.n_frames < 8 {
            return bad(format!(
                "n_frames must be at least 8, got {}",
                self.n_frames
            ));
        }
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(self.step_angle_mean.is_finite() && self.step_angle_mean >= 0.0) {
            return bad("step_angle_mean must be finite and non-negative".into());
        }
        if !(self.step_angle_jitter.is_finite() && self.step_angle_jitter >= 0.0) {
            return bad("step_angle_jitter must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.direction_persistence) {
            return bad("direction_persistence must be in [0, 1)".into());
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return bad("frame_rate_hz must be positive".into());
        }
        if self.n_splices > 0 {
            if !(self.jump_angle > 0.0 && self.jump_angle <= PI) {
                return bad(format!(
                    "jump_angle must be in (0, pi], got {}",
                    self.jump_angle
                ));
            }
            let slots = self.splice_slots();
            if slots < self.n_splices {
                return bad(format!(
                    "{} splices with crossfade {} do not fit in {} frames",
                    self.n_splices, self.crossfade_frames, self.n_frames
                ));
            }
        }
        Ok(())
    }

    /// Size of the compressed range splice positions are drawn from.
    fn splice_slots(&self) -> usize {
        // p in [2, n - 4 - c]: the jump ends at frame p + c + 1 <= n - 3
        let c = self.crossfade_frames;
        let Some(last) = self.n_frames.checked_sub(4 + c) else {
            return 0;
        };
        if last < 2 {
            return 0;
        }
        let span = last - 2 + 1;
        let gap = c + 2;
        let needed_extra = (self.n_splices.saturating_sub(1)) * (gap - 1);
        span.saturating_sub(needed_extra)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub sequence: EmbeddingSequence,
    pub label: Label,
    /// Frame `p` such that the jump begins between frames `p` and `p + 1`,
    /// i.e. `f1[p]` is the first spliced step.
    pub splice_positions: Vec<usize>,
}

/// Smooth bona fide trajectory; `cfg.n_splices` must be 0.
pub fn gen_trajectory(id: &str, cfg: &SynthConfig) -> Result<SynthRecord> {
    if cfg.n_splices != 0 {
        return Err(TraceError::InvalidConfig(
            "gen_trajectory takes a config without splices".into(),
        ));
    }
    generate(id, cfg)
}

/// Trajectory with `cfg.n_splices` splices (0 reproduces [`gen_trajectory`]).
pub fn gen_spoofed(id: &str, cfg: &SynthConfig) -> Result<SynthRecord> {
    generate(id, cfg)
}

fn generate(id: &str, cfg: &SynthConfig) -> Result<SynthRecord> {
    cfg.validate()?;
    let dim = cfg.dim;
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, 0, 0));
    let mut splice_rng = SplitMix64::new(derive_seed(cfg.seed, 0, 1));
    let positions = splice_positions(cfg, &mut splice_rng);

    let mut point = random_unit(&mut rng, dim);
    let mut tangent = random_tangent(&mut rng, &point);
    let mut frames: Vec<f32> = Vec::with_capacity(cfg.n_frames * dim);
    push_frame(&mut frames, &point);

    let rho = cfg.direction_persistence;
    let innovation_scale = (1.0 - rho * rho).sqrt();
    let mut t = 0;
    let mut next_splice = positions.iter().peekable();
    while t + 1 < cfg.n_frames {
        if next_splice.peek() == Some(&&t) {
            next_splice.next();
            let dir = random_tangent(&mut splice_rng, &point);
            let start = point.clone();
            let steps = cfg.crossfade_frames + 1;
            for j in 1..=steps {
                let a = cfg.jump_angle * j as f64 / steps as f64;
                point = rotate(&start, &dir, a);
                push_frame(&mut frames, &point);
            }
            t += steps;
            tangent =
                reproject(&tangent, &point).unwrap_or_else(|| random_tangent(&mut rng, &point));
            continue;
        }

        let g = random_tangent(&mut rng, &point);
        let mixed: Vec<f64> = tangent
            .iter()
            .zip(&g)
            .map(|(u, g)| rho * u + innovation_scale * g)
            .collect();
        let u = reproject(&mixed, &point).unwrap_or(g);
        let angle = (cfg.step_angle_mean + cfg.step_angle_jitter * rng.next_normal()).max(0.0);
        if angle > 0.0 {
            let next = rotate(&point, &u, angle);
            // parallel transport of the direction of travel
            tangent = point
                .iter()
                .zip(&u)
                .map(|(x, u)| -angle.sin() * x + angle.cos() * u)
                .collect();
            point = next;
        } else {
            tangent = u;
        }
        push_frame(&mut frames, &point);
        t += 1;
    }

    let sequence = EmbeddingSequence::new(id, cfg.n_frames, dim, cfg.frame_rate_hz, frames)?;
    Ok(SynthRecord {
        sequence,
        label: if cfg.n_splices > 0 {
            Label::Spoof
        } else {
            Label::Bonafide
        },
        splice_positions: positions,
    })
}

/// Sorted splice positions in `[2, n - 4 - c]`, at least `c + 2` apart.
fn splice_positions(cfg: &SynthConfig, rng: &mut SplitMix64) -> Vec<usize> {
    if cfg.n_splices == 0 {
        return Vec::new();
    }
    // draw distinct slots from the compressed range, then re-expand gaps
    let slots = cfg.splice_slots() as u64;
    let mut picked: Vec<u64> = Vec::with_capacity(cfg.n_splices);
    while picked.len() < cfg.n_splices {
        let s = rng.next_below(slots);
        if !picked.contains(&s) {
            picked.push(s);
        }
    }
    picked.sort_unstable();
    let gap = cfg.crossfade_frames + 2;
    picked
        .into_iter()
        .enumerate()
        .map(|(i, s)| 2 + s as usize + i * (gap - 1))
        .collect()
}

fn push_frame(frames: &mut Vec<f32>, point: &[f64]) {
    frames.extend(point.iter().map(|&x| x as f32));
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_unit(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Removes the component along unit `point` and normalizes.
fn reproject(v: &[f64], point: &[f64]) -> Option<Vec<f64>> {
    let dot: f64 = v.iter().zip(point).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = v.iter().zip(point).map(|(a, p)| a - dot * p).collect();
    let n = norm(&w);
    (n > 1e-9).then(|| w.into_iter().map(|x| x / n).collect())
}

fn random_tangent(rng: &mut SplitMix64, point: &[f64]) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..point.len()).map(|_| rng.next_normal()).collect();
        if let Some(t) = reproject(&g, point) {
            return t;
        }
    }
}

/// Rotates unit `point` by `angle` toward unit tangent `dir`, renormalized.
fn rotate(point: &[f64], dir: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let v: Vec<f64> = point.iter().zip(dir).map(|(p, d)| c * p + s * d).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Corpus-level options for [`gen_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub bonafide: SynthConfig,
    pub spoof: SynthConfig,
    pub n_each: usize,
}

/// Per-utterance config: the role's base config with a seed derived from the
/// base seed, the role and the index.
pub fn utterance_config(base: &SynthConfig, role: Label, index: usize) -> SynthConfig {
    let role_tag = match role {
        Label::Bonafide => 1,
        Label::Spoof => 2,
        Label::Unknown => 3,
    };
    SynthConfig {
        seed: derive_seed(base.seed, index as u64, 16 + role_tag),
        ..base.clone()
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SPLICES_FILE: &str = "splices.jsonl";

/// Generates `n_each` bona fide and `n_each` spoofed records in manifest
/// order (all bona fide first).
pub fn gen_records(spec: &CorpusSpec, exec: &Executor) -> Result<Vec<SynthRecord>> {
    spec.bonafide.validate()?;
    spec.spoof.validate()?;
    if spec.bonafide.n_splices != 0 {
        return Err(TraceError::InvalidConfig(
            "bona fide config must not splice".into(),
        ));
    }
    if spec.spoof.n_splices == 0 {
        return Err(TraceError::InvalidConfig(
            "spoof config needs at least one splice".into(),
        ));
    }
    let n = spec.n_each;
    exec.map_range(2 * n, |i| {
        let (role, base, idx) = if i < n {
            (Label::Bonafide, &spec.bonafide, i)
        } else {
            (Label::Spoof, &spec.spoof, i - n)
        };
        let cfg = utterance_config(base, role, idx);
        generate(&format!("{}_{:04}", role.as_str(), idx), &cfg)
    })
    .into_iter()
    .collect()
}

/// Writes a corpus: one TEF per utterance, `manifest.jsonl` with relative
/// paths, and `splices.jsonl` with ground-truth splice positions. Returns the
/// manifest path.
pub fn gen_corpus(
    spec: &CorpusSpec,
    out_dir: impl AsRef<Path>,
    exec: &Executor,
) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| TraceError::io(out_dir, e))?;
    let records = gen_records(spec, exec)?;

    let written: Vec<Result<()>> = exec.map(&records, |r| {
        let path = out_dir.join(format!("{}.tef", r.sequence.utterance_id));
        embedding_io::write_tef(&r.sequence, path)
    });
    written.into_iter().collect::<Result<()>>()?;

    let mut manifest = String::new();
    let mut splices = String::new();
    for r in &records {
        let id = &r.sequence.utterance_id;
        manifest.push_str(&embedding_io::manifest_line(
            id,
            &format!("{id}.tef"),
            r.label,
        ));
        manifest.push('\n');
        let base = if r.label == Label::Spoof {
            &spec.spoof
        } else {
            &spec.bonafide
        };
        let _ = writeln!(
            splices,
            "{}",
            serde_json::json!({
                "id": id,
                "splice_positions": r.splice_positions,
                "jump_angle": if r.splice_positions.is_empty() { 0.0 } else { base.jump_angle },
                "crossfade_frames": if r.splice_positions.is_empty() { 0 } else { base.crossfade_frames },
            })
        );
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest).map_err(|e| TraceError::io(&manifest_path, e))?;
    let splices_path = out_dir.join(SPLICES_FILE);
    fs::write(&splices_path, splices).map_err(|e| TraceError::io(&splices_path, e))?;
    Ok(manifest_path)
}
