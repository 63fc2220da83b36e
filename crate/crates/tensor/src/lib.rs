//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! The op set is fixed and small: channel-wise linear maps, zero-padded 3×3
//! convolution, SiLU, modulated group/layer normalization, 2× average
//! pooling and nearest upsampling, channel concatenation, region
//! scatter/gather, elementwise add/sub/scale and weighted square reductions.
//! That is exactly what a conditional convolutional denoiser needs, and no
//! more.
//!
//! ```
//! use lam_tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::new(&[1, 1], vec![3.0]).unwrap());
//! let loss = tape.weighted_sq_mean(x, &[1.0]).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

pub mod container;
mod error;
pub mod gradcheck;
mod kernels;
pub mod params;
mod real;
mod region;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, op_suite, GradCheckReport, Probe};
pub use params::{read_checkpoint, write_checkpoint, Param, ParamStore};
pub use real::{gemm, Real};
pub use region::RegionIndex;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
