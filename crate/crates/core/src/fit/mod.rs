//! Conditional fit-and-generate methods.

pub mod cart;
mod generate;
pub mod logistic;
mod method;
pub mod ols;

pub use cart::{fit_cart, CartFit, SplitRule};
pub use generate::{
    bandwidth, cart_generate, empirical_sample, generate_categorical, generate_norm, generate_normrank,
    FittedGenerator, Params,
};
pub use logistic::{fit_logit, fit_polyreg, CategoricalFit};
pub use method::{CartControls, MethodKind, MethodSpec, Response};
pub use ols::{fit_ols, LinearFit};
