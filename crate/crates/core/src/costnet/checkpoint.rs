//! Parameter checkpoints: a flat little-endian 32-bit float vector plus a
//! JSON sidecar describing the architecture, seed and bounds. Reload is
//! bit-exact because in-memory parameters are kept f32-representable.

use super::{AngleMode, CostNet, HeadBounds, HorizonConditioning, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Vec<usize>,
    pub seed: u64,
    pub q_min: f64,
    pub q_max: f64,
    pub lin_bound: f64,
    pub angle_mode: String,
    pub conditioning: String,
    pub param_count: usize,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Writes `<path>` (raw f32 little-endian parameters) and `<path>.json`.
pub fn save_checkpoint<T: Real>(path: &Path, net: &CostNet<T>) -> Result<()> {
    let meta = CheckpointMeta {
        architecture: net.mlp.sizes().to_vec(),
        seed: net.seed,
        q_min: net.bounds.q_min.to_f64_lossy(),
        q_max: net.bounds.q_max.to_f64_lossy(),
        lin_bound: net.bounds.lin_bound.to_f64_lossy(),
        angle_mode: match net.angle_mode {
            AngleMode::Wrapped => "wrapped".into(),
            AngleMode::Raw => "raw".into(),
        },
        conditioning: match net.conditioning {
            HorizonConditioning::PerStepIndex => "per_step".into(),
            HorizonConditioning::Constant => "constant".into(),
        },
        param_count: net.param_count(),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in net.params() {
        f.write_all(&(p.to_f64_lossy() as f32).to_le_bytes())?;
    }
    f.flush()?;
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Parse(format!("sidecar encode: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Rebuilds the network from `<path>` and `<path>.json`.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<CostNet<T>> {
    let meta: CheckpointMeta = serde_json::from_str(
        &std::fs::read_to_string(sidecar_path(path))?,
    )
    .map_err(|e| Error::Parse(format!("sidecar decode: {e}")))?;

    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != meta.param_count * 4 {
        return Err(Error::Parse(format!(
            "checkpoint holds {} bytes, expected {}",
            bytes.len(),
            meta.param_count * 4
        )));
    }
    let params: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();

    let mut mlp = Mlp::new(&meta.architecture, meta.seed);
    if mlp.param_count() != meta.param_count {
        return Err(Error::Parse("architecture/param count mismatch".into()));
    }
    mlp.set_flat_params(&params);
    let angle_mode = match meta.angle_mode.as_str() {
        "wrapped" => AngleMode::Wrapped,
        "raw" => AngleMode::Raw,
        other => return Err(Error::Parse(format!("unknown angle mode {other}"))),
    };
    let conditioning = match meta.conditioning.as_str() {
        "per_step" => HorizonConditioning::PerStepIndex,
        "constant" => HorizonConditioning::Constant,
        other => return Err(Error::Parse(format!("unknown conditioning {other}"))),
    };
    Ok(CostNet {
        mlp,
        bounds: HeadBounds {
            q_min: T::of(meta.q_min),
            q_max: T::of(meta.q_max),
            lin_bound: T::of(meta.lin_bound),
        },
        angle_mode,
        conditioning,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("scanctl_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.f32");

        let net = CostNet::<f64>::with_architecture(
            6,
            &[8, 8],
            3,
            HeadBounds::default(),
            AngleMode::Wrapped,
            HorizonConditioning::PerStepIndex,
        );
        save_checkpoint(&path, &net).unwrap();
        let loaded: CostNet<f64> = load_checkpoint(&path).unwrap();
        let a = net.params();
        let b = loaded.params();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // saving the loaded net reproduces the file byte for byte
        let path2 = dir.join("p2.f32");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = std::env::temp_dir().join("scanctl_ckpt_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.f32");
        let net = CostNet::<f64>::with_architecture(
            4,
            &[4],
            1,
            HeadBounds::default(),
            AngleMode::Raw,
            HorizonConditioning::Constant,
        );
        save_checkpoint(&path, &net).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_checkpoint::<f64>(&path).is_err());
    }
}
