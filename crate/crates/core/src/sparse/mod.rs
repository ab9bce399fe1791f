//! Sparse tensors over occupied voxels, kernel maps, and sparse
//! convolution with hand-written backward passes.

mod conv;
mod kernel_map;
mod ops;
mod tensor;

pub use conv::{sparse_conv, sparse_conv_backward, ConvGrad, ConvSpec};
pub use kernel_map::{build_kernel_map, kernel_offsets, KernelMap, MapCache};
pub use ops::{
    add, add_backward, concat_channels, concat_backward, gather_rows, gather_rows_backward, relu,
    relu_backward, replace_rows, replace_rows_backward,
};
pub use tensor::SparseTensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("coordinate sets of operands differ")]
    Alignment,
    #[error("invalid kernel: size {size}, dilation {dilation}")]
    Kernel { size: usize, dilation: u32 },
    #[error("row index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },
}
