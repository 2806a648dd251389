//! Discrete norms, boundary and volume inner products, and fits of stability constants.

mod fit;
mod norms;
mod weights;

pub use fit::{fit_holder, fit_line, fit_log_modulus, fit_power, FitModel, FitResult};
pub use norms::{cell_value_edges, cell_value_faces, hcurl_norm_e, hcurl_norm_pair, lp_norm, norm, Field, NormKind};
pub use weights::{build_norm_weights, NormWeights, MAX_PATCH_DOFS};
