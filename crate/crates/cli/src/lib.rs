//! File formats, configuration and subcommands of the `gsedit` tool.

pub mod commands;
pub mod config;
pub mod imageio;
pub mod mesh_io;
pub mod ply;
