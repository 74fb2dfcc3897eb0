//! Adversarial patch detection from a CNN's shallow feature map.
//!
//! A feature map is binarized at every threshold of a saliency ensemble, each
//! binary map is clustered with DBSCAN, and the per-threshold clustering
//! statistics form a small multi-channel curve that a 1D convolutional
//! detector scores in `(0, 1)`.
//!
//! ```no_run
//! use patchspan::{adnet, ensemble, featurize, fmap_io, gridclust};
//!
//! let map = fmap_io::load_feature_map("sample.npy").unwrap();
//! let thresholds = ensemble::ThresholdSet::equidistant(20).unwrap();
//! let curves = featurize::featurize_sample(
//!     &map,
//!     &thresholds,
//!     &gridclust::ClusterParams::default(),
//!     featurize::ChannelMask::ALL,
//! )
//! .unwrap();
//! let model = adnet::load_model("ad.bin").unwrap();
//! println!("score = {}", model.score(&curves).unwrap());
//! ```

pub mod adnet;
pub mod baselines;
pub mod ensemble;
mod error;
pub mod explain;
pub mod featurize;
pub mod fmap_io;
pub mod gridclust;
pub mod metrics;
pub mod synthgen;

pub use error::{Error, Result};
pub use fmap_io::FeatureMap;
