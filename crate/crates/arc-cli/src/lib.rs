//! Front-end for the adversarially robust vehicle-following pipeline:
//! run configuration, artifact persistence (checkpoints, datasets, logs),
//! threaded execution drivers, and report emission. The `arc` binary is a
//! thin argument parser over [`pipeline`].

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod logs;
pub mod pipeline;
pub mod plot;
pub mod store;
