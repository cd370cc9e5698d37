#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bounds;
pub mod condind;
pub mod copulamix;
pub mod cowsls;
pub mod dists;
pub mod error;
pub mod grid;
pub mod infer;
pub mod linalg;
pub mod mixture;
pub mod nmf;
pub mod optweight;
pub mod otsignal;
pub mod smooth;
pub mod special;
pub mod stream;
pub mod sweights;

pub use error::{Error, Result};
pub use grid::{Grid2D, GridDensity, Support, DEFAULT_GRID, EPS_FLOOR};
pub use linalg::Matrix;
pub use mixture::MixtureModel;
pub use stream::SeedStream;
