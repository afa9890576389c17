//! Numerical laboratory for the weakly coupled system of a wave equation and a
//! damped Klein–Gordon equation with time-derivative nonlinearities,
//!
//! ```text
//! u_tt - u_xx + b u_t + m^2 u = |v_t|^p
//! v_tt - v_xx             = |u_t|^q
//! ```
//!
//! Modules, bottom-up:
//!
//! - [`special_fn`]: `I0`, `I1`, `J0`, `J1` and the ratios `I1(z)/z`, `J1(z)/z`.
//! - [`kernel_ops`]: exact one-dimensional solution operator of the damped
//!   Klein–Gordon equation by quadrature.
//! - [`fd_sim`]: leapfrog simulation of the coupled system with blow-up detection.
//! - [`iteration`]: slicing sequences, lower-bound envelopes and lifespan bounds.
//! - [`experiments`]: sweeps, scaling fits, verification suites and reports.

pub mod experiments;
pub mod fd_sim;
pub mod iteration;
pub mod kernel_ops;
pub mod quadrature;
pub mod special_fn;
