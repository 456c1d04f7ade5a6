//! Point-cloud world model, raycast scan synthesis, trajectory playback
//! with rotor dynamics and control delay, and voxel coverage tracking.

pub mod coverage;
pub mod map;
pub mod raycast;
pub mod scanner;
pub mod scene;
pub mod trajectory;
pub mod voxel;

pub use coverage::VoxelCoverage;
pub use map::WorldMap;
pub use raycast::{raycast_scan, SensorModel};
pub use scanner::{step_scanner, ScannerState};
pub use scene::{box_room_points, generate_synthetic_scene, SceneKind, SceneParams};
pub use trajectory::{load_tum, save_tum, Trajectory};
pub use voxel::{voxel_key, VoxelGrid, VoxelKey};
