//! Coarse-ID control for unknown linear systems.
//!
//! The pipeline runs in three stages. First, estimate `(A, B)` from
//! independent rollouts by least squares and attach operator-norm error
//! radii, either from a theoretical bound, a data-dependent bound, or a
//! parametric bootstrap. Next, synthesize a controller that is robust to
//! every system inside those radii using system-level synthesis. Finally,
//! certify the result with a small-gain test and bound its cost on the
//! true system.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature only
//! turns on runtime SIMD dispatch in the dense factorizations. The
//! `parallel` feature runs rollouts and bootstrap trials on rayon; results
//! are identical because every rollout and trial draws from its own RNG
//! stream.

#![no_std]

extern crate alloc;

pub mod bootstrap;
mod error;
pub mod linalg;
pub mod lti;
pub mod rng;
pub mod sdp;
pub mod synthesis;
pub mod sysid;
pub mod systems;

pub use error::{Error, Result};

/// Items every module needs regardless of whether `std` is linked.
#[allow(unused_imports)]
pub(crate) mod prelude {
    pub use alloc::boxed::Box;
    pub use alloc::format;
    pub use alloc::string::{String, ToString};
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    pub use num_traits::Float;
}
