mod attention;
mod conv;
mod elementwise;
mod linear;
mod norm;
mod reduce;
mod shape;

pub use conv::{col2im, conv_out_size, im2col, ConvGeometry};
pub use shape::permute_indices;
