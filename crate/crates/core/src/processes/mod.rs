//! Dependence-forgetting forward processes.

mod correlation;
mod ou;
mod reflection;

pub use correlation::{build_correlation, nearest_correlation, CorrelationMatrix, CorrelationSource, MAX_ABS_CORR};
pub use ou::{ou_coefficients, ou_forward, ou_forward_with_noise, ou_step_row};
pub use reflection::{reflect, reflect_1d, reflect_position, reflection_forward, VelocityState};
