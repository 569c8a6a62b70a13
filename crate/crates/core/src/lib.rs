//! Attention as MAP inference in a Gaussian mixture over queries and values.
//!
//! Each memory unit `j` owns a key `ξ_j` (precision `α_j`) and an expected
//! value `μ_j` (precision `β_j`). Responsibilities of units for a query are
//! the attention weights; under the magnitude prior with shared precisions
//! and `β → 0` the MAP value is dot-product attention. Online EM updates adapt
//! keys from unlabeled queries and propagate externally fixed values.
//!
//! The [`playground`] module applies the model to interactive binary
//! segmentation with one unit per pixel.

pub mod adaptation;
pub mod attention;
pub mod container;
mod error;
mod matrix;
mod model;
pub mod numeric;
pub mod playground;
pub mod position;
mod scoring;

pub use adaptation::{
    adapt, adapt_alphas, adapt_keys, propagate_values, update_betas, update_priors, AdaptationConfig, Adapted,
    Anchor, BetaDimFactor, FixedValues, FlagKind, Step, UnitFlag,
};
pub use attention::{
    em_value_inference, magnitude_prior, mixture_readout, query_log_likelihood, query_marginal_log_likelihood,
    responsibilities, standard_attention, value_log_likelihood, EmResult,
};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    AttentionWeights, GridDistancePrior, MixtureModel, PositionPrior, PriorSpec, QueryBatch, ValueBatch,
};
pub use position::{
    axial_attention, axial_stack, pe_attention, pe_attention_general, pe_prior_logits, pe_query_log_likelihood,
    AxialConfig, Axis, GridShape, PeLayout, PeTable, RelativePE,
};
