//! Active LiDAR scanning control testbed: point-cloud simulation, a
//! simplified scan-to-map odometry backend, observability analysis over
//! candidate scan directions, a learned quadratic cost map, a differentiable
//! MPC layer, and PPO training that routes gradients through the controller.

pub mod costnet;
pub mod error;
pub mod geometry;
pub mod rl;
pub mod scalar;
pub mod mpc;
pub mod odometry;
pub mod scansim;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Real;

// Concrete f64 aliases for the main domain types; the numeric core is
// generic over `Real` (f32 or f64).
pub type Pose64 = geometry::Pose<f64>;
pub type PointCloud64 = geometry::PointCloud<f64>;
pub type PanoDepthMap64 = geometry::PanoDepthMap<f64>;
pub type FrameChain64 = geometry::FrameChain<f64>;
pub type WorldMap64 = scansim::WorldMap<f64>;
pub type SensorModel64 = scansim::SensorModel<f64>;
pub type ScannerState64 = scansim::ScannerState<f64>;
pub type Trajectory64 = scansim::Trajectory<f64>;
pub type VoxelCoverage64 = scansim::VoxelCoverage<f64>;
pub type SceneParams64 = scansim::SceneParams<f64>;
