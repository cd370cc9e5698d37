//! Command-line companion to the core crate: data generators for the
//! worked examples, file formats, and a small experiment runner.

pub mod io;
pub mod run;
pub mod synth;
