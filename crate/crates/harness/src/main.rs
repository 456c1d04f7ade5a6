use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use scanctl::costnet::save_checkpoint;
use scanctl::odometry::compute_ape;
use scanctl::rl::{Critic, Scene, Trainer};
use scanctl::scansim::{load_tum, save_tum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use scanctl_harness::{
    emit_plots, episode, resolve_scene, run_benchmark, run_episode, write_episode_csv,
    write_metrics_json, Config, Controller, ControllerKind,
};

#[derive(Parser)]
#[command(
    name = "scanctl",
    about = "Active LiDAR scanning control testbed: simulation, training and evaluation"
)]
struct Cli {
    /// Configuration file (TOML-like); built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: map.ply + trajectory.tum + metadata
    GenerateScene {
        /// tunnel | room | forest
        #[arg(long)]
        scene: String,
        /// Overrides [scene].seed from the config
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the cost-map policy with PPO through the controller
    Train {
        /// Comma-separated scene list (names or <ply>+<tum> pairs)
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment-step budget; defaults to [rl].total_steps
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint directory written by a previous run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run one episode under a controller and export logs, metrics, plots
    Run {
        #[arg(long)]
        scene: String,
        /// fixed-slow | fixed-fast | fixed:<rad_s> | random | mpc |
        /// hybrid:<ckpt> | hybrid-no-unc:<ckpt>
        #[arg(long)]
        controller: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Episode length in control ticks; defaults to [harness].episode_steps
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the scene x controller x seed matrix and aggregate results
    Benchmark {
        #[arg(long)]
        out: PathBuf,
        /// Overrides [harness].scenes
        #[arg(long)]
        scenes: Option<String>,
        /// Overrides [harness].controllers
        #[arg(long)]
        controllers: Option<String>,
        /// Overrides [harness].seeds
        #[arg(long)]
        seeds: Option<String>,
        /// Overrides [harness].episode_steps
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Re-render the plot set from an episode CSV
    Plot {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Absolute pose error between two TUM trajectories
    Ape {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Skip the rigid (no-scale) alignment before the residuals
        #[arg(long)]
        no_align: bool,
        /// Write the JSON metrics here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes map to the documented exit codes: configuration
/// problems exit 1, episode/runtime failures exit 2.
enum Failure {
    Config(anyhow::Error),
    Episode(anyhow::Error),
}

trait IntoFailure<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn episode_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> IntoFailure<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn episode_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Episode(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version print and exit cleanly; bad usage is a config error
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Episode(e)) => {
            eprintln!("episode failure: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p).config_err(),
        None => Ok(Config::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::GenerateScene { scene, seed, out } => {
            let mut cfg = cfg;
            if let Some(s) = seed {
                cfg.scene_seed = s;
            }
            generate_scene(&scene, &cfg, &out)
        }
        Command::Train {
            scene,
            seed,
            steps,
            out,
            resume,
        } => train(&scene, seed, steps, &out, resume.as_deref(), &cfg),
        Command::Run {
            scene,
            controller,
            seed,
            out,
            steps,
        } => run(&scene, &controller, seed, &out, steps, &cfg),
        Command::Benchmark {
            out,
            scenes,
            controllers,
            seeds,
            steps,
        } => benchmark(&out, scenes, controllers, seeds, steps, cfg),
        Command::Plot { episode, out } => plot(&episode, &out),
        Command::Ape {
            est,
            truth,
            no_align,
            out,
        } => ape(&est, &truth, no_align, out.as_deref()),
    }
}

fn generate_scene(scene: &str, cfg: &Config, out: &Path) -> Result<(), Failure> {
    if scene.contains('+') {
        return Err(Failure::Config(anyhow!(
            "generate-scene takes a synthetic scene name (tunnel | room | forest)"
        )));
    }
    let resolved = resolve_scene(scene, cfg).config_err()?;
    std::fs::create_dir_all(out).episode_err()?;
    let ply = out.join(format!("{scene}.ply"));
    let tum = out.join(format!("{scene}.tum"));
    scanctl::geometry::save_ply_binary(
        &ply,
        &resolved.map.cloud.points,
        Some(&resolved.map.normals),
    )
    .episode_err()?;
    save_tum(&tum, &resolved.traj).episode_err()?;
    let meta = serde_json::json!({
        "scene": scene,
        "seed": cfg.scene_seed,
        "points": resolved.map.len(),
        "trajectory_poses": resolved.traj.len(),
        "duration_s": resolved.traj.duration(),
        "pitch_m": cfg.scene.pitch,
        "speed_m_s": cfg.scene.speed,
    });
    std::fs::write(
        out.join(format!("{scene}.json")),
        serde_json::to_string_pretty(&meta).unwrap(),
    )
    .episode_err()?;
    println!(
        "wrote {} ({} points) and {} ({} poses, {:.1} s)",
        ply.display(),
        resolved.map.len(),
        tum.display(),
        resolved.traj.len(),
        resolved.traj.duration()
    );
    Ok(())
}

fn train(
    scene_list: &str,
    seed: u64,
    steps: Option<usize>,
    out: &Path,
    resume: Option<&Path>,
    cfg: &Config,
) -> Result<(), Failure> {
    let scenes: Vec<Scene<f64>> = scene_list
        .split(',')
        .map(|s| resolve_scene(s.trim(), cfg))
        .collect::<Result<_>>()
        .config_err()?;
    let train_cfg = cfg.train_config(seed).config_err()?;
    let budget = steps.unwrap_or(cfg.total_steps);

    let mut trainer = match resume {
        Some(dir) => Trainer::load_state(dir, train_cfg).config_err()?,
        None => {
            let net = cfg.new_costnet();
            let critic = Critic::new(cfg.feature_dim(), &cfg.hidden, seed.wrapping_add(1));
            Trainer::new(net, critic, train_cfg)
        }
    };

    std::fs::create_dir_all(out).episode_err()?;
    trainer
        .run(
            &scenes,
            &cfg.env_config(),
            &cfg.mpc_config(),
            budget,
            Some(out),
        )
        .episode_err()?;
    // convenience copy of the final policy in the exchange format
    save_checkpoint(&out.join("policy_final.f32"), &trainer.net).episode_err()?;
    let last = trainer.curve.last();
    println!(
        "trained {} env steps over {} updates; final mean return {:.3}{}",
        trainer.global_step,
        trainer.update_index,
        last.map(|p| p.mean_return).unwrap_or(0.0),
        last.and_then(|p| p.eval_ape)
            .map(|a| format!(", eval APE {a:.3} m"))
            .unwrap_or_default()
    );
    println!("checkpoint: {}", out.join("ckpt_final").display());
    Ok(())
}

fn run(
    scene: &str,
    controller: &str,
    seed: u64,
    out: &Path,
    steps: Option<usize>,
    cfg: &Config,
) -> Result<(), Failure> {
    let resolved = resolve_scene(scene, cfg).config_err()?;
    let kind = ControllerKind::parse(controller, cfg).config_err()?;
    let ctrl = Controller::new(kind, cfg).config_err()?;
    let steps = steps.unwrap_or(cfg.episode_steps);

    std::fs::create_dir_all(out).episode_err()?;
    let result = run_episode(&resolved, &ctrl, seed, &cfg.env_config(), steps).episode_err()?;

    write_episode_csv(&out.join("episode.csv"), &result).episode_err()?;
    write_metrics_json(&out.join("metrics.json"), scene, controller, seed, &result)
        .episode_err()?;
    if let Some(samples) = &result.initial_samples {
        samples
            .write_csv(&out.join("uncertainty_initial.csv"))
            .episode_err()?;
    }
    save_tum(&out.join("estimate.tum"), &result.est_traj).episode_err()?;
    save_tum(&out.join("ground_truth.tum"), &result.gt_traj).episode_err()?;
    emit_plots(&result, &out.join("plots")).episode_err()?;

    println!(
        "{} steps, APE {} m, mean r_exp {:.3}, degenerate {}",
        result.records.len(),
        result
            .ape
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "n/a".into()),
        result.mean_r_exp,
        result.degenerate_steps
    );
    if result.failed {
        return Err(Failure::Episode(anyhow!(
            "episode marked failed ({} of {} steps degenerate)",
            result.degenerate_steps,
            result.records.len()
        )));
    }
    Ok(())
}

fn benchmark(
    out: &Path,
    scenes: Option<String>,
    controllers: Option<String>,
    seeds: Option<String>,
    steps: Option<usize>,
    mut cfg: Config,
) -> Result<(), Failure> {
    if let Some(s) = scenes {
        cfg.scenes = s.split(',').map(|x| x.trim().to_string()).collect();
    }
    if let Some(c) = controllers {
        cfg.controllers = c.split(',').map(|x| x.trim().to_string()).collect();
    }
    if let Some(s) = seeds {
        cfg.seeds = s
            .split(',')
            .map(|x| x.trim().parse::<u64>().context("bad seed list"))
            .collect::<Result<_>>()
            .config_err()?;
    }
    if let Some(s) = steps {
        cfg.episode_steps = s;
    }
    // fail controller parsing before any episode runs
    for c in &cfg.controllers {
        ControllerKind::parse(c, &cfg).config_err()?;
    }
    let scenes = cfg.scenes.clone();
    let controllers = cfg.controllers.clone();
    let seeds = cfg.seeds.clone();
    let result = run_benchmark(&scenes, &controllers, &seeds, &cfg, out).episode_err()?;
    let failures = result.cells.iter().filter(|c| c.failed).count();
    println!(
        "benchmark complete: {} cells, {} failed; results in {}",
        result.cells.len(),
        failures,
        out.display()
    );
    Ok(())
}

fn plot(episode_csv: &Path, out: &Path) -> Result<(), Failure> {
    let result = episode::read_episode_csv(episode_csv).config_err()?;
    emit_plots(&result, out).episode_err()?;
    println!("plots written to {}", out.display());
    Ok(())
}

fn ape(est: &Path, truth: &Path, no_align: bool, out: Option<&Path>) -> Result<(), Failure> {
    let est_traj = load_tum::<f64>(est).config_err()?;
    let truth_traj = load_tum::<f64>(truth).config_err()?;
    let result = compute_ape(&est_traj, &truth_traj, !no_align).episode_err()?;
    let json = serde_json::json!({
        "ape_rmse_m": result.rmse,
        "ape_mean_m": result.mean,
        "ape_max_m": result.max,
        "matched_poses": result.matched,
        "alignment": if no_align { "none" } else { "umeyama-no-scale" },
    });
    let text = serde_json::to_string_pretty(&json).unwrap();
    match out {
        Some(p) => std::fs::write(p, text).episode_err()?,
        None => println!("{text}"),
    }
    Ok(())
}
