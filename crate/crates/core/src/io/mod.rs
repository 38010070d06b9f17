//! File formats and persistence: checkpoints, P6 images, run configs,
//! CSV logs and reports.

pub mod checkpoint;
pub mod csvio;
pub mod ppm;
pub mod runconfig;

pub use checkpoint::{Checkpoint, CkptEntry, CONFIG_ENTRY};
pub use runconfig::RunConfig;
