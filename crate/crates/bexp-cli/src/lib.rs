//! Implementation of the `bexp` command-line tool: file formats, image
//! renderers and subcommand logic. The binary in `main.rs` is a thin
//! wrapper so integration tests can drive the same code paths directly.

pub mod commands;
pub mod error;
pub mod formats;
pub mod render;
