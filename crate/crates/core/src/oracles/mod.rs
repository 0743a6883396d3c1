//! Analytic copulas used as ground truth and baselines.

mod gaussian;
mod mixture_t;

pub use gaussian::{gaussian_copula_logpdf, gaussian_copula_sample, GaussianCopula};
pub use mixture_t::{
    mixture_t_build, mixture_t_copula_logpdf, mixture_t_sample, MarginalTable, MixtureTCopula, DEFAULT_DF,
    DEFAULT_WEIGHTS,
};
