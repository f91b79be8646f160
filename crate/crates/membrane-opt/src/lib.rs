//! Configuration, file formats, and run orchestration for the membrane
//! design CLI. The numerics live in `membrane-core`; this crate owns
//! everything that touches the filesystem.

pub mod config;
pub mod io;
pub mod run;
