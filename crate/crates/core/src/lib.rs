//! Screening of fundus autofluorescence images from ETDRS sector
//! statistics with a kernel support vector machine.
//!
//! The pipeline: [`image`] decodes a grayscale raster, [`grid`] turns it
//! into 18 sectoral statistics, [`svm`] trains and applies the classifier,
//! [`mccv`] evaluates it over repeated stratified splits, and
//! [`separation`] measures class separation through signed distances and
//! Hellinger dissimilarity. [`synth`] produces labelled synthetic cohorts
//! and [`io`] persists feature tables and manifests.

pub mod dataset;
pub mod grid;
pub mod image;
pub mod io;
pub mod mccv;
pub mod numfmt;
pub mod separation;
pub mod svm;
pub mod synth;
