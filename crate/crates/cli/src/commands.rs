use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use trace_core::calibration::{self, GridConfig};
use trace_core::dynamics::{DynamicsBundle, DynamicsConfig};
use trace_core::embedding_io::{self, ManifestEntry};
use trace_core::pipeline::{self, Batch, ScoreRow, StatsTable};
use trace_core::statistics::{self, StatisticId};
use trace_core::synth::{self, CorpusSpec, SynthConfig};
use trace_core::{CalibrationProfile, Executor, TraceError};

use crate::{CalibrateArgs, EvalArgs, ExecArgs, InspectArgs, ScoreArgs, StatsArgs, SynthArgs};

fn executor(a: &ExecArgs) -> Result<Executor> {
    Ok(Executor::with_threads(a.threads.unwrap_or(0))?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn report_skipped<T>(batch: &Batch<T>) {
    for e in &batch.skipped {
        eprintln!("warning: skipped {e}");
    }
}

fn corpus_stats(
    manifest: &Path,
    ids: &[StatisticId],
    window: usize,
    exec: &ExecArgs,
    skip_errors: bool,
) -> Result<StatsTable> {
    let entries: Vec<ManifestEntry> = embedding_io::read_manifest(manifest)?;
    let batch = pipeline::compute_stats(&entries, ids, window, &executor(exec)?, skip_errors)?;
    report_skipped(&batch);
    Ok(batch.items)
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let ids = statistics::parse_id_list(&a.stats)?;
    let table = corpus_stats(&a.manifest, &ids, a.window, &a.exec, a.skip_errors)?;
    emit(a.out.as_deref(), &table.to_csv()?)
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    if let Some(name) = &a.preset {
        let preset = calibration::preset(name)?;
        let profile = match (&a.manifest, &a.input_stats) {
            (None, None) => {
                let mut p = preset.to_profile();
                p.window_w = a.window;
                p
            }
            (manifest, input) => {
                let table = match (manifest, input) {
                    (Some(m), _) => corpus_stats(m, preset.ids, a.window, &a.exec, a.skip_errors)?,
                    (None, Some(p)) => StatsTable::from_csv(&read_text(p)?)?,
                    (None, None) => unreachable!(),
                };
                pipeline::calibrate_preset(&table, preset, a.raw_mode, a.window)?
            }
        };
        calibration::save_profile(&profile, &a.out)?;
        print_profile(&profile, None);
        return Ok(());
    }

    let cfg = GridConfig {
        profile_name: a.name.clone(),
        max_subset_size: a.max_subset,
        grid_step: a.grid_step,
        raw_mode: a.raw_mode,
        window_w: a.window,
    };
    // validate cheap options before touching the corpus
    calibration::grid_units(cfg.grid_step)?;
    if cfg.max_subset_size == 0 {
        bail!("--max-subset must be at least 1");
    }
    let requested = a
        .stats
        .as_deref()
        .map(statistics::parse_id_list)
        .transpose()?;
    let table = match (&a.manifest, &a.input_stats) {
        (Some(m), _) => {
            let ids = requested
                .clone()
                .unwrap_or_else(|| StatisticId::ALL.to_vec());
            corpus_stats(m, &ids, a.window, &a.exec, a.skip_errors)?
        }
        (None, Some(p)) => StatsTable::from_csv(&read_text(p)?)?,
        (None, None) => bail!("one of --manifest or --input-stats is required"),
    };
    let candidates = requested.unwrap_or_else(|| table.ids.clone());
    let outcome = pipeline::calibrate(&table, &candidates, &cfg, &executor(&a.exec)?)?;
    for id in &outcome.excluded {
        eprintln!("warning: {id} is constant on the calibration set and was excluded");
    }
    calibration::save_profile(&outcome.profile, &a.out)?;
    print_profile(&outcome.profile, Some(outcome.n_evaluated));
    Ok(())
}

fn print_profile(p: &CalibrationProfile, n_evaluated: Option<usize>) {
    if p.calibration_eer > 0.5 {
        eprintln!(
            "warning: calibration EER {} is worse than chance",
            p.calibration_eer
        );
    }
    let ids: Vec<&str> = p.statistic_ids.iter().map(|id| id.as_str()).collect();
    let weights: Vec<String> = p.weights.iter().map(|w| format!("{w}")).collect();
    println!("profile: {}", p.profile_name);
    println!("statistics: {}", ids.join(","));
    println!("weights: {}", weights.join(","));
    println!("orientation: {:+}", p.orientation.sign());
    println!("threshold: {}", p.threshold);
    println!("calibration_eer: {}", p.calibration_eer);
    if let Some(n) = n_evaluated {
        println!("candidates_evaluated: {n}");
    }
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let profile = calibration::load_profile(&a.profile)?;
    let rows: Vec<ScoreRow> = match (&a.manifest, &a.input_stats) {
        (Some(m), _) => {
            let entries = embedding_io::read_manifest(m)?;
            let batch =
                pipeline::score_corpus(&entries, &profile, &executor(&a.exec)?, a.skip_errors)?;
            report_skipped(&batch);
            batch.items
        }
        (None, Some(p)) => pipeline::score_table(&StatsTable::from_csv(&read_text(p)?)?, &profile)?,
        (None, None) => bail!("one of --manifest or --input-stats is required"),
    };
    emit(a.out.as_deref(), &pipeline::scores_to_csv(&rows)?)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        if !t.is_finite() {
            bail!("--threshold must be finite");
        }
    }
    let scores = pipeline::scores_from_csv(&read_text(&a.scores)?)?;
    let manifest = embedding_io::read_manifest(&a.manifest)?;
    let report = pipeline::evaluate(&scores, &manifest, a.threshold, a.bins)?;
    if let Some(p) = &a.roc_csv {
        fs::write(p, report.roc_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.hist_csv {
        fs::write(p, report.histogram_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut json = report.to_json()?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let base = SynthConfig {
        n_frames: a.n_frames,
        dim: a.dim,
        step_angle_mean: a.step_angle,
        step_angle_jitter: a.step_jitter,
        direction_persistence: a.persistence,
        n_splices: 0,
        jump_angle: a.jump_angle,
        crossfade_frames: a.crossfade,
        frame_rate_hz: a.frame_rate,
        seed: a.seed,
    };
    let spec = CorpusSpec {
        spoof: SynthConfig {
            n_splices: a.n_splices,
            ..base.clone()
        },
        bonafide: base,
        n_each: a.n_each,
    };
    let manifest = synth::gen_corpus(&spec, &a.out, &executor(&a.exec)?)?;
    println!(
        "wrote {} utterances; manifest {}",
        2 * a.n_each,
        manifest.display()
    );
    Ok(())
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let seq = embedding_io::read_tef(&a.path)?;
    let (t, l) = (seq.n_frames(), seq.dim());
    let mut out = String::new();
    out.push_str(&format!("utterance: {}\n", seq.utterance_id));
    out.push_str(&format!("frames (T): {t}\n"));
    out.push_str(&format!("dim (L): {l}\n"));
    out.push_str(&format!("frame_rate_hz: {}\n", seq.frame_rate_hz()));
    out.push_str(&format!(
        "duration_s: {}\n",
        t as f64 / f64::from(seq.frame_rate_hz())
    ));

    let mut lo = vec![f32::INFINITY; l];
    let mut hi = vec![f32::NEG_INFINITY; l];
    for row in seq.rows() {
        for (d, &x) in row.iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    let overall_lo = lo.iter().copied().fold(f32::INFINITY, f32::min);
    let overall_hi = hi.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    out.push_str(&format!("value range: [{overall_lo}, {overall_hi}]\n"));
    out.push_str("per-dimension range:\n");
    for d in 0..l {
        out.push_str(&format!("  {d}: [{}, {}]\n", lo[d], hi[d]));
    }

    if t < 2 {
        out.push_str("dynamics: n/a\n");
    } else {
        match DynamicsBundle::compute(&seq, &DynamicsConfig::default()) {
            Ok(b) => {
                let mean = b.f1.iter().sum::<f64>() / b.f1.len() as f64;
                let (argmax, max) =
                    b.f1.iter()
                        .copied()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (i, x)| if x > acc.1 { (i, x) } else { acc },
                        );
                out.push_str(&format!("f1 mean: {mean}\n"));
                out.push_str(&format!("f1 max: {max} (step {argmax})\n"));
            }
            Err(e @ TraceError::ZeroNormFrame(_)) => {
                out.push_str(&format!("dynamics: n/a ({e})\n"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    emit(None, &out)
}
