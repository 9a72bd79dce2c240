//! Command-line front end of `hsfmo`: configuration files, benchmark
//! presets, solver dispatch and result export.

pub mod cli_io;
