//! Evaluation harness: configuration, baseline controllers, the episode
//! runner, the benchmark matrix, and plot/metric export.

pub mod benchmark;
pub mod config;
pub mod controller;
pub mod episode;
pub mod plots;
pub mod scene;

pub use benchmark::{run_benchmark, BenchmarkCell, BenchmarkResult};
pub use config::Config;
pub use controller::{Controller, ControllerKind, Decision};
pub use episode::{run_episode, write_episode_csv, write_metrics_json, EpisodeResult, StepRecord};
pub use plots::emit_plots;
pub use scene::resolve_scene;
