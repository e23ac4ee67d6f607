//! Hidden Markov random field segmentation with Gaussian-mixture emissions.
//!
//! The pipeline is: k-means gives an initial labeling, the label parameters are
//! seeded from it, and then an EM loop alternates ICM MAP labeling, per-site
//! posteriors with a Potts neighborhood prior, and weighted GMM refits.
//! Grayscale images, color images and 3D volumes share one code path; only the
//! observation dimension and the neighborhood system change.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blur;
pub mod cli;
pub mod emission;
pub mod error;
pub mod gmm_fit;
pub mod hmrf_em;
pub mod io;
pub mod kmeans;
pub mod lattice;
pub mod map_icm;
pub mod metrics;
pub mod observation;
pub mod synth;

pub use emission::{Component, Gaussian1D, LabelModel, ModelSet, MvGaussian, WeightedComponent};
pub use error::{Error, Result};
pub use gmm_fit::{fit_gmm, responsibilities, FitConfig};
pub use hmrf_em::{run_hmrf_em, EmConfig, PosteriorField, SegmentationResult};
pub use kmeans::{kmeans, KmeansResult};
pub use lattice::{GridShape, Lattice, NeighborhoodKind, SiteIndex};
pub use map_icm::{map_estimate, EnergyRecord, EnergyTrace, LabelField, MapConfig};
pub use observation::ObservationField;
