//! Fault detection and controller reconfiguration for feedback loops, driven
//! by online estimates of passivity indices.
//!
//! A plant `G` runs in a negative-feedback loop with a controller `C`. The
//! ratios `∫ e y / ∫ y²` and `∫ e y / ∫ e²` of the plant's input `e` and
//! output `y` bound its OFP and IFP indices from above. When one drops below a
//! threshold, a 2x2 wrapper [`mmatrix::MMatrix`] is synthesized around `C` so
//! that the loop's index sums stay positive.
//!
//! Modules from the bottom up: [`linsys`] (transfer functions, realizations,
//! frequency-sweep oracles), [`simcore`] (fixed-step loop stepper),
//! [`plants`] (benchmark plants and fault schedules), [`passivity`]
//! (estimator and verdicts), [`mmatrix`] (wrapper synthesis and
//! certification), [`reconfig`] (detection state machine), [`scenario`]
//! (configs, runs, reports) and [`cli`].

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod linsys;
pub mod mmatrix;
pub mod passivity;
pub mod plants;
pub mod reconfig;
pub mod scenario;
pub mod simcore;

pub use error::{Error, Result};
