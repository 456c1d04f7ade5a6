//! Benchmark matrix: scenes x controllers x seeds, with deterministic CSV
//! and markdown artifacts. Wall-clock latency statistics go to a separate
//! file so the deterministic artifacts stay byte-stable across reruns.

use crate::config::Config;
use crate::controller::{Controller, ControllerKind};
use crate::episode::{percentile, run_episode, write_episode_csv, EpisodeResult};
use crate::scene::resolve_scene;
use anyhow::{Context, Result};
use rayon::prelude::*;
use scanctl::rl::Scene;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct BenchmarkCell {
    pub scene: String,
    pub controller: String,
    pub seed: u64,
    pub ape: Option<f64>,
    pub mean_r_exp: f64,
    pub degenerate_steps: usize,
    pub failed: bool,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub cells: Vec<BenchmarkCell>,
}

/// Runs every (scene, controller, seed) cell in parallel and writes the
/// artifact set under `out_dir`.
pub fn run_benchmark(
    scene_specs: &[String],
    controller_specs: &[String],
    seeds: &[u64],
    cfg: &Config,
    out_dir: &Path,
) -> Result<BenchmarkResult> {
    std::fs::create_dir_all(out_dir.join("episodes"))?;
    let scenes: Vec<Scene<f64>> = scene_specs
        .iter()
        .map(|s| resolve_scene(s, cfg))
        .collect::<Result<_>>()?;

    struct Job<'a> {
        scene_idx: usize,
        scene_name: &'a str,
        controller: String,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for (scene_idx, spec) in scene_specs.iter().enumerate() {
        for c in controller_specs {
            for &seed in seeds {
                jobs.push(Job {
                    scene_idx,
                    scene_name: spec,
                    controller: c.clone(),
                    seed,
                });
            }
        }
    }

    let env_cfg = cfg.env_config();
    let cells: Vec<(BenchmarkCell, EpisodeResult)> = jobs
        .par_iter()
        .map(|job| -> Result<(BenchmarkCell, EpisodeResult)> {
            let kind = ControllerKind::parse(&job.controller, cfg)?;
            let controller = Controller::new(kind, cfg)?;
            let result = run_episode(
                &scenes[job.scene_idx],
                &controller,
                job.seed,
                &env_cfg,
                cfg.episode_steps,
            )
            .with_context(|| {
                format!(
                    "episode {} / {} / seed {}",
                    job.scene_name, job.controller, job.seed
                )
            })?;
            let cell = BenchmarkCell {
                scene: job.scene_name.to_string(),
                controller: job.controller.clone(),
                seed: job.seed,
                ape: result.ape,
                mean_r_exp: result.mean_r_exp,
                degenerate_steps: result.degenerate_steps,
                failed: result.failed,
                latency_p50_ms: percentile(&result.latencies_us, 0.50) / 1000.0,
                latency_p95_ms: percentile(&result.latencies_us, 0.95) / 1000.0,
            };
            Ok((cell, result))
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<(BenchmarkCell, EpisodeResult)> = cells;
    cells.sort_by(|a, b| {
        (&a.0.scene, &a.0.controller, a.0.seed).cmp(&(&b.0.scene, &b.0.controller, b.0.seed))
    });

    for (cell, result) in &cells {
        let name = format!("{}_{}_{}.csv", cell.scene, cell.controller, cell.seed);
        write_episode_csv(&out_dir.join("episodes").join(name), result)?;
    }

    let cells: Vec<BenchmarkCell> = cells.into_iter().map(|(c, _)| c).collect();
    write_benchmark_csv(&out_dir.join("benchmark.csv"), &cells)?;
    write_latency_csv(&out_dir.join("latency.csv"), &cells)?;
    write_markdown(&out_dir.join("benchmark.md"), &cells)?;
    Ok(BenchmarkResult { cells })
}

fn write_benchmark_csv(path: &Path, cells: &[BenchmarkCell]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "scene,controller,seed,ape_m,mean_r_exp,degenerate_steps,failed")?;
    for c in cells {
        writeln!(
            f,
            "{},{},{},{},{:.9},{},{}",
            c.scene,
            c.controller,
            c.seed,
            c.ape.map(|a| format!("{a:.9}")).unwrap_or_default(),
            c.mean_r_exp,
            c.degenerate_steps,
            c.failed as u8,
        )?;
    }
    Ok(())
}

/// Wall-clock measurements; excluded from the determinism contract.
fn write_latency_csv(path: &Path, cells: &[BenchmarkCell]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "scene,controller,seed,latency_p50_ms,latency_p95_ms")?;
    for c in cells {
        writeln!(
            f,
            "{},{},{},{:.3},{:.3}",
            c.scene, c.controller, c.seed, c.latency_p50_ms, c.latency_p95_ms
        )?;
    }
    Ok(())
}

/// Scene-by-controller table of mean APE over the non-failed seeds, best
/// per row in bold, with failure counts.
fn write_markdown(path: &Path, cells: &[BenchmarkCell]) -> Result<()> {
    let mut controllers: Vec<String> = Vec::new();
    for c in cells {
        if !controllers.contains(&c.controller) {
            controllers.push(c.controller.clone());
        }
    }
    let mut by_scene: BTreeMap<&str, BTreeMap<&str, Vec<&BenchmarkCell>>> = BTreeMap::new();
    for c in cells {
        by_scene
            .entry(&c.scene)
            .or_default()
            .entry(&c.controller)
            .or_default()
            .push(c);
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# Benchmark: translational APE (m)")?;
    writeln!(f)?;
    writeln!(f, "Mean over seeds, failures excluded. Lower is better; best per row in bold.")?;
    writeln!(f)?;
    write!(f, "| Scene |")?;
    for c in &controllers {
        write!(f, " {c} |")?;
    }
    writeln!(f)?;
    write!(f, "|---|")?;
    for _ in &controllers {
        write!(f, "---|")?;
    }
    writeln!(f)?;

    for (scene, row) in &by_scene {
        let mut means: Vec<Option<(f64, usize, usize)>> = Vec::new();
        for ctrl in &controllers {
            let entry = row.get(ctrl.as_str()).map(|cells| {
                let ok: Vec<f64> = cells
                    .iter()
                    .filter(|c| !c.failed)
                    .filter_map(|c| c.ape)
                    .collect();
                let failures = cells.iter().filter(|c| c.failed).count();
                let mean = if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().sum::<f64>() / ok.len() as f64
                };
                (mean, ok.len(), failures)
            });
            means.push(entry);
        }
        let best = means
            .iter()
            .flatten()
            .filter(|(m, _, _)| m.is_finite())
            .map(|(m, _, _)| *m)
            .fold(f64::INFINITY, f64::min);
        write!(f, "| {scene} |")?;
        for m in &means {
            match m {
                Some((mean, n, failures)) if mean.is_finite() => {
                    let text = if *failures > 0 {
                        format!("{mean:.3} (n={n}, failed={failures})")
                    } else {
                        format!("{mean:.3} (n={n})")
                    };
                    if (*mean - best).abs() < 1e-12 {
                        write!(f, " **{text}** |")?;
                    } else {
                        write!(f, " {text} |")?;
                    }
                }
                Some((_, _, failures)) => write!(f, " all failed ({failures}) |")?,
                None => write!(f, " - |")?,
            }
        }
        writeln!(f)?;
    }
    Ok(())
}
