//! Volumetric lung CT analysis and random-weighted multitask training.
//!
//! The crate covers the full path from a CT volume to task predictions and
//! feature statistics:
//!
//! - [`volume`]: volumes, masks, isotropic resampling and the raw+JSON file format
//! - [`seg`]: threshold/connectivity lung masks and active-contour refinement
//! - [`metrics`]: Dice, Jaccard, MCC and precision
//! - [`radiomics`]: first-order, GLCM, GLRLM, GLSZM and coif1 wavelet features
//! - [`shift3d`]: random circular shift augmentation
//! - [`mtl`]: Dirichlet task weights, baseline losses and a toy multitask network
//! - [`analysis`]: z-scores and Welch's ANOVA significance tables
//! - [`phantom`]: synthetic CT cohorts with exact ground truth
//! - [`pipeline`]: the staged, config-driven runner behind the `lungmtl` binary

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod radiomics;
pub mod mtl;
pub mod phantom;
pub mod pipeline;
pub mod seed;
pub mod seg;
pub mod shift3d;
pub mod table;
pub mod volume;

pub use error::{Error, Result};
