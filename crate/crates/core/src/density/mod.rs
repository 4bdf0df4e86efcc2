//! Gaussian kernel density estimation, conditional and linearly constrained
//! sampling, and the SVD reduction used to model leader futures.

mod bandwidth;
mod future;
mod kde;
mod svd;

pub use bandwidth::{silverman_bandwidth, silverman_factor, BandwidthMatrix};
pub use future::{sample_future_given_initial, FutureModel, FutureSampler};
pub use kde::{
    kde_sample_conditional, ConditionalSampler, ConstrainedSampler, KdeModel, Standardization,
};
pub use svd::{fit_svd_basis, ConstraintSpec, ReducedBasis};
