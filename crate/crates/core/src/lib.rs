#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Achievable rates of iterative LMMSE detection in uplink MU-MIMO / NOMA.
//!
//! The pieces, bottom up:
//!
//! * [`scenario`]: channel scenarios, the effective channel `H diag(w)` and
//!   its Gram matrix, gamma profiles.
//! * [`transfer`]: LMMSE posterior variances, extrinsic SINRs, variance tracks
//!   and the matched decoder transfer curve.
//! * [`rates`]: per-user rates along a gamma profile, sum capacity, SIC
//!   corners, the two-user closed form and region sweeps.
//! * [`sim`]: state evolution and a seeded Monte Carlo check of the predicted
//!   extrinsic error statistics.
//! * [`export`]: CSV writers.
//!
//! Rates are in nats unless stated otherwise.

pub mod error;
pub mod export;
pub mod linalg;
pub mod quadrature;
pub mod rates;
pub mod scenario;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};
pub use rates::{RatePoint, RateUnit};
pub use scenario::{effective_channel, load_scenario, ChannelScenario, EffectiveChannel, FieldKind, GammaProfile};
pub use sim::{EvolutionTrace, SimReport};
pub use transfer::{TransferCurve, VarianceState};
