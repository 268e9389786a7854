pub mod bbox;
pub mod error;
pub mod eval;
pub mod features;
pub mod grouping;
pub mod imgproc;
pub mod pipeline;
pub mod proposals;
pub mod spectral;
pub mod synth;

pub use bbox::BBox;
pub use error::{Error, Result};
