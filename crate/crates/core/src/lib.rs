//! Numerically exact simulation of the unbiased spin-boson model at zero
//! temperature.
//!
//! The reduced spin dynamics is obtained from the discretized influence
//! functional propagated as a tensor network with SVD compression, and the
//! fidelity out-of-time-order correlator is read off from a modified reduced
//! density matrix built by a weak probe insertion. Small discretized baths
//! evolved by exact state-vector propagation serve as independent references.
//!
//! The numerical core is generic over the floating-point scalar through
//! [`scalar::RealScalar`]; concrete `f64` aliases are exported at the crate
//! root.

extern crate blas_src;

pub mod bath;
pub mod engine;
pub mod oracle;
pub mod probe;
pub mod quad;
pub mod scalar;
pub mod tensor;

pub use scalar::RealScalar;

/// Default-precision complex scalar.
pub type C64 = num_complex::Complex<f64>;

// pub type ModelParams64 = bath::ModelParams<f64>;
// pub type GridParams64 = bath::GridParams<f64>;
// pub type Mps64 = tensor::Mps<f64>;
// pub type Mpo64 = tensor::Mpo<f64>;
// pub type TimeSeries64 = engine::TimeSeries<f64>;
