//! Scene resolution: named synthetic scenes through the generator, or a
//! user-supplied `map.ply+trajectory.tum` pair.

use crate::config::Config;
use anyhow::{anyhow, Context, Result};
use scanctl::geometry::load_ply;
use scanctl::rl::Scene;
use scanctl::scansim::{generate_synthetic_scene, load_tum, SceneKind, WorldMap};
use std::path::Path;

/// Resolves a `--scene` argument. Synthetic names use the configured scene
/// parameters and seed; a `<ply>+<tum>` pair loads the files, estimating
/// normals when the PLY carries none.
pub fn resolve_scene(spec: &str, cfg: &Config) -> Result<Scene<f64>> {
    if let Some((ply, tum)) = spec.split_once('+') {
        let cloud = load_ply::<f64>(Path::new(ply))
            .with_context(|| format!("loading map {ply}"))?;
        let map = match cloud.normals {
            Some(normals) => WorldMap::with_normals(
                cloud.points,
                normals,
                cfg.cell_size,
                cfg.scene.pitch / 2.0,
            )?,
            None => WorldMap::from_points(
                cloud.points,
                cfg.cell_size,
                cfg.scene.pitch / 2.0,
                cfg.map_knn,
            )?,
        };
        let traj = load_tum::<f64>(Path::new(tum))
            .with_context(|| format!("loading trajectory {tum}"))?;
        let name = Path::new(ply)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        return Ok(Scene { name, map, traj });
    }

    let kind: SceneKind = spec
        .parse()
        .map_err(|_| anyhow!("unknown scene {spec:?} (tunnel | room | forest | <ply>+<tum>)"))?;
    let (map, traj) = generate_synthetic_scene(kind, cfg.scene_seed, &cfg.scene)?;
    Ok(Scene {
        name: spec.to_string(),
        map,
        traj,
    })
}
