//! Characteristic and integrally strictly positive definite kernels on
//! Euclidean spaces, `L^p(λ)` function spaces, metric spaces of strong
//! negative type and spaces of finitely supported measures, together with
//! the MMD, kernel scores and permutation two-sample tests built on them.
//!
//! ```
//! use kernmetric::{kernels, phi::PhiProfile, spaces::{DiscreteMeasure, PointSpace}, stats};
//!
//! let k = kernels::make_radial_hilbert(PhiProfile::gaussian(0.5)?, PointSpace::euclidean(1)?)?;
//! let p = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5])?;
//! let q = DiscreteMeasure::on_line(&[0.5, 1.5], vec![0.5, 0.5])?;
//! let gamma = stats::mmd(&k, &p, &q)?;
//! let d = stats::divergence(&k, &p, &q)?;
//! assert!((d - 0.5 * gamma * gamma).abs() < 1e-12);
//! # Ok::<(), kernmetric::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod io;
pub mod kernels;
pub mod phi;
pub mod sampling;
pub mod selfcheck;
pub mod spaces;
pub mod stats;

pub use error::{Error, Result};
