//! Stochastic mortality modelling with a fractional Ornstein–Uhlenbeck
//! log-hazard residual: exact fractional Gaussian noise, Hurst and
//! quadratic-variation estimators, Monte Carlo forecasts and survival
//! probabilities.

pub mod data;
pub mod error;
pub mod fgn;
pub mod fou;
pub mod hurst;
pub mod mortality;
pub mod qgv;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/fgn.md")]
    mod fgn {}
    #[doc = include_str!("../../../book/src/fou.md")]
    mod fou {}
    #[doc = include_str!("../../../book/src/hurst.md")]
    mod hurst {}
    #[doc = include_str!("../../../book/src/qgv.md")]
    mod qgv {}
    #[doc = include_str!("../../../book/src/mortality.md")]
    mod mortality {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
