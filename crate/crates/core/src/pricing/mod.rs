//! Locally risk-minimizing prices and hedge ratios through the evolution
//! system of the auxiliary log-normal process and the Duhamel form of the
//! pricing equation.

mod betas;
mod evolution;
mod grid;
mod kernel;
mod payoff;
mod surface;

pub use betas::{compute_betas, jump_operator_bound, BetaCoefficients};
pub use evolution::{evolution_apply, jump_operator, layer_from_fn};
pub use grid::{interp_row, Grid, GridSpec, Layer};
pub use kernel::{kernel_params, lognormal_expect, lognormal_expect_kinked, KernelParams};
pub use payoff::PayoffSpec;
pub use surface::{hedge_ratio, solve_price, Method, PriceSurface};

pub(crate) use evolution::{apply_jump, JumpOps};
pub(crate) use surface::warn_arbitrage;
