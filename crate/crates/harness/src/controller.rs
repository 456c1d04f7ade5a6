//! Scanning controllers under evaluation: fixed-rate, random, the
//! uncertainty-only MPC, and the hybrid learned variants.

use crate::config::Config;
use anyhow::{anyhow, Result};
use scanctl::costnet::{load_checkpoint, CostNet, QuadCostParams};
use scanctl::mpc::{solve, MpcConfig};
use scanctl::rl::Env;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone)]
pub enum ControllerKind {
    FixedRate(f64),
    Random,
    /// analytic uncertainty cost only
    MpcOnly,
    /// learned cost plus the uncertainty cost
    Hybrid { checkpoint: PathBuf },
    /// learned cost with the uncertainty term disabled
    HybridNoUnc { checkpoint: PathBuf },
}

impl ControllerKind {
    /// Parses controller names: `fixed-slow`, `fixed-fast`, `fixed:<rad_s>`,
    /// `random`, `mpc`, `hybrid:<checkpoint>`, `hybrid-no-unc:<checkpoint>`.
    pub fn parse(s: &str, cfg: &Config) -> Result<Self> {
        if s == "fixed-slow" {
            return Ok(Self::FixedRate(cfg.fixed_slow));
        }
        if s == "fixed-fast" {
            return Ok(Self::FixedRate(cfg.fixed_fast));
        }
        if let Some(rate) = s.strip_prefix("fixed:") {
            return Ok(Self::FixedRate(rate.parse()?));
        }
        match s {
            "random" => Ok(Self::Random),
            "mpc" => Ok(Self::MpcOnly),
            _ => {
                if let Some(path) = s.strip_prefix("hybrid-no-unc:") {
                    Ok(Self::HybridNoUnc {
                        checkpoint: path.into(),
                    })
                } else if let Some(path) = s.strip_prefix("hybrid:") {
                    Ok(Self::Hybrid {
                        checkpoint: path.into(),
                    })
                } else {
                    Err(anyhow!(
                        "unknown controller {s:?} (fixed-slow | fixed-fast | fixed:<rad_s> | random | mpc | hybrid:<ckpt> | hybrid-no-unc:<ckpt>)"
                    ))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::FixedRate(w) => format!("fixed-{w:.1}"),
            Self::Random => "random".into(),
            Self::MpcOnly => "mpc".into(),
            Self::Hybrid { .. } => "hybrid".into(),
            Self::HybridNoUnc { .. } => "hybrid-no-unc".into(),
        }
    }
}

/// One per-tick decision with its diagnostics.
pub struct Decision {
    pub omega_cmd: f64,
    /// wall time of the decision itself (network forward + solve)
    pub latency_us: u64,
    pub mpc_objective: Option<f64>,
    pub mpc_residual: Option<f64>,
    pub mpc_iterations: Option<usize>,
    pub u_fingerprint: Option<u64>,
}

/// A controller instance bound to a configuration (and a loaded policy for
/// the hybrid variants).
pub struct Controller {
    pub kind: ControllerKind,
    pub mpc: MpcConfig<f64>,
    net: Option<CostNet<f64>>,
}

impl Controller {
    pub fn new(kind: ControllerKind, cfg: &Config) -> Result<Self> {
        let net = match &kind {
            ControllerKind::Hybrid { checkpoint } | ControllerKind::HybridNoUnc { checkpoint } => {
                Some(load_checkpoint(checkpoint).map_err(|e| {
                    anyhow!("loading checkpoint {}: {e}", checkpoint.display())
                })?)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            mpc: cfg.mpc_config(),
            net,
        })
    }

    /// Wraps an in-memory policy as the hybrid controller, used right
    /// after training.
    pub fn hybrid_from_net(net: CostNet<f64>, cfg: &Config, use_uncertainty: bool) -> Self {
        let kind = if use_uncertainty {
            ControllerKind::Hybrid {
                checkpoint: PathBuf::new(),
            }
        } else {
            ControllerKind::HybridNoUnc {
                checkpoint: PathBuf::new(),
            }
        };
        Self {
            kind,
            mpc: cfg.mpc_config(),
            net: Some(net),
        }
    }

    pub fn decide(&self, env: &mut Env<f64>) -> Result<Decision> {
        match &self.kind {
            ControllerKind::FixedRate(w) => Ok(Decision {
                omega_cmd: *w,
                latency_us: 0,
                mpc_objective: None,
                mpc_residual: None,
                mpc_iterations: None,
                u_fingerprint: None,
            }),
            ControllerKind::Random => Ok(Decision {
                omega_cmd: env.random_command(),
                latency_us: 0,
                mpc_objective: None,
                mpc_residual: None,
                mpc_iterations: None,
                u_fingerprint: None,
            }),
            ControllerKind::MpcOnly => {
                let samples = env.uncertainty();
                let fp = samples.fingerprint();
                let zero = vec![QuadCostParams::zero(); self.mpc.horizon + 1];
                let t0 = Instant::now();
                let sol = solve(&self.mpc.problem(env.theta(), Some(samples), zero))?;
                let latency_us = t0.elapsed().as_micros() as u64;
                Ok(Decision {
                    omega_cmd: sol.omega[0],
                    latency_us,
                    mpc_objective: Some(sol.objective),
                    mpc_residual: Some(sol.residual),
                    mpc_iterations: Some(sol.iterations),
                    u_fingerprint: Some(fp),
                })
            }
            ControllerKind::Hybrid { .. } | ControllerKind::HybridNoUnc { .. } => {
                let net = self.net.as_ref().expect("hybrid controller holds a net");
                let with_unc = matches!(self.kind, ControllerKind::Hybrid { .. });
                let (obs, samples) = if with_unc {
                    let (o, s) = env.observe_with_uncertainty()?;
                    (o, Some(s))
                } else {
                    (env.observe()?, None)
                };
                let fp = samples.as_ref().map(|s| s.fingerprint());
                // the decision itself: network forward plus the solve
                let t0 = Instant::now();
                let params = net.forward(&obs, self.mpc.horizon)?;
                let sol = solve(&self.mpc.problem(env.theta(), samples, params))?;
                let latency_us = t0.elapsed().as_micros() as u64;
                Ok(Decision {
                    omega_cmd: sol.omega[0],
                    latency_us,
                    mpc_objective: Some(sol.objective),
                    mpc_residual: Some(sol.residual),
                    mpc_iterations: Some(sol.iterations),
                    u_fingerprint: fp,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds() {
        let cfg = Config::default();
        assert!(matches!(
            ControllerKind::parse("fixed-slow", &cfg).unwrap(),
            ControllerKind::FixedRate(w) if w == 1.0
        ));
        assert!(matches!(
            ControllerKind::parse("fixed-fast", &cfg).unwrap(),
            ControllerKind::FixedRate(w) if w == 8.0
        ));
        assert!(matches!(
            ControllerKind::parse("fixed:2.5", &cfg).unwrap(),
            ControllerKind::FixedRate(w) if w == 2.5
        ));
        assert!(matches!(
            ControllerKind::parse("random", &cfg).unwrap(),
            ControllerKind::Random
        ));
        assert!(matches!(
            ControllerKind::parse("mpc", &cfg).unwrap(),
            ControllerKind::MpcOnly
        ));
        assert!(matches!(
            ControllerKind::parse("hybrid:x.f32", &cfg).unwrap(),
            ControllerKind::Hybrid { .. }
        ));
        assert!(matches!(
            ControllerKind::parse("hybrid-no-unc:x.f32", &cfg).unwrap(),
            ControllerKind::HybridNoUnc { .. }
        ));
        assert!(ControllerKind::parse("bogus", &cfg).is_err());
    }
}
