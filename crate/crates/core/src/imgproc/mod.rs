//! Image representation, gradients and saliency.

mod gradient;
mod image;
mod saliency;

pub use self::gradient::{gradients, GradientField};
pub use self::image::{Image, IntegralImage};
pub use self::saliency::{box_saliency, compute_saliency, SaliencyMap};
