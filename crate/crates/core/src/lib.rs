//! Secret key generation rates for a QPSK coherent-state CV-QKD protocol over
//! a pure-loss wiretap channel, with Bob using either a state-discrimination
//! receiver (pretty good measurement, phase-optimized GUS receiver,
//! displacement feed-forward cascade) or heterodyne detection.
//!
//! The receiver algebra and entropy code are generic over [`Scalar`]; the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! optimizer, quadrature and reporting layers use.

pub mod constellation;
pub mod error;
pub mod feedforward;
pub mod heterodyne;
pub mod infotheory;
pub mod optimizer;
pub mod phase_space;
pub mod receivers;
pub mod report;
pub mod scalar;
pub mod selftest;

pub use error::{Error, Result};
pub use infotheory::{KgrPoint, RateTerms, ReceiverKind};
pub use scalar::Scalar;

pub type Constellation = constellation::Constellation<f64>;
pub type Channel = constellation::Channel<f64>;
pub type GramMatrix = constellation::GramMatrix<f64>;
pub type ReceiverSpec = receivers::ReceiverSpec<f64>;
pub type ReceiverMatrix = receivers::ReceiverMatrix<f64>;
pub type ProbabilityKernel = receivers::ProbabilityKernel<f64>;
pub type FockVector = receivers::FockVector<f64>;
pub type CascadeSpec = feedforward::CascadeSpec<f64>;

pub type Constellation32 = constellation::Constellation<f32>;
pub type GramMatrix32 = constellation::GramMatrix<f32>;
pub type ReceiverSpec32 = receivers::ReceiverSpec<f32>;
pub type ProbabilityKernel32 = receivers::ProbabilityKernel<f32>;
