//! Energy-aware coordination of a robot fleet sharing one charging station.
//!
//! Each robot runs a safety filter that keeps its battery above a moving
//! setpoint `E_min` (an energy barrier) while negotiating `E_min` with its
//! neighbours so that predicted arrivals at the station are spaced by at
//! least `delta_t` (a coordination barrier). [`capacity`] answers how many
//! robots one station can serve; [`sim`] runs the closed loop.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod cbf;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod mission;
pub mod msg;
pub mod params;
pub mod qp;
pub mod sim;
pub mod state;

pub use error::Error;
pub use msg::{BroadcastMsg, ConstraintRow};
pub use params::{CbfGains, EnergyParams, WorldParams};
pub use state::{Mode, RobotState};

pub type Result<T, E = Error> = std::result::Result<T, E>;
