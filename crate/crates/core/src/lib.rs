//! Likelihood-free inference from instrumented simulators.
//!
//! Simulators in this crate do not only emit observations `x ~ p(x|θ)`: while
//! running they accumulate the *joint score* `∇θ log p(x,z|θ)` and the *joint
//! log-likelihood ratio* `log p(x,z|θ0) − log p(x,z|θ1)` along their latent
//! trace `z`. Both quantities are cheap to extract, and regressing on them
//! yields surrogates for the intractable `p(x|θ)` and `r(x|θ0,θ1)`.
//!
//! Layout:
//!
//! * [`galton`] and [`lotka`]: the two instrumented simulators.
//! * [`netcore`]: a small dense-network engine with reverse-mode weight
//!   gradients, forward-mode θ-gradients and exact weight gradients of
//!   θ-gradient penalties.
//! * [`methods`]: the loss functions, training loop and ratio read-outs of
//!   CARL, NDE, ROLR, RASCAL, CASCAL, SCANDAL, SALLY and SALLINO.
//! * [`eval`]: MSE reports, augmentation diagnostics, confidence regions and
//!   ensemble references.
//! * [`data`], [`config`] and [`pipeline`]: file formats and the commands
//!   behind the `goldmine` binary.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod galton;
pub mod lotka;
pub mod methods;
pub mod netcore;
pub mod parallel;
pub mod param;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
pub use param::ParamPoint;
