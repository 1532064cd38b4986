//! Adaptive energy-detection spectrum sensing.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: Gaussian tail function `Q` and its inverse.
//! * [`signals`]: hypothesis-conditioned sample blocks, noise uncertainty
//!   and synthetic IQ fixtures.
//! * [`detector`]: the generalized energy statistic and the threshold test.
//! * [`estimator`]: noise-power and SNR estimation from received samples.
//! * [`adaptive`]: closed-form detection probabilities, CFAR thresholds,
//!   the sample-count solver and the iterative sensing loop.
//! * [`montecarlo`]: empirical Pd/Pf, ROC sweeps and samples-vs-SNR tables.
//! * [`scanner`]: IQ file IO, Welch periodograms and band scanning.
//! * [`cli`]: the `sensecore` command-line front end.

pub mod adaptive;
pub mod cli;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod montecarlo;
pub mod numerics;
pub mod scanner;
pub mod signals;

pub use error::{Error, Result};
