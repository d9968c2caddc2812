//! Deterministic simulation library for dual-oscillator ("virtual
//! high-resolution time") timekeeping.
//!
//! A low-frequency crystal stays on through deep sleep while a high-frequency
//! one provides resolution on demand. This crate models both oscillators with
//! skew, per-edge jitter and wander, emulates the timer capture/compare
//! hardware they feed, and implements three timestamping schemes on top:
//!
//! - [`original`]: the classic dual-timer timestamp formula, including its
//!   race condition and a census that separates race errors from jitter;
//! - [`naive`]: offset-only resynchronization on wakeup, immune to slow-clock
//!   jitter while awake but defeated by the skew difference of the crystals;
//! - [`node`]: the complete scheme, which slaves the fast clock to the slow
//!   one with a discrete-time feedback controller ([`controller`]) and keeps
//!   a monotone rate-corrected virtual clock across deep sleep.
//!
//! Everything is a pure function of (scenario, seed): replays are
//! bit-identical.

pub mod controller;
pub mod events;
pub mod naive;
pub mod node;
pub mod original;
pub mod oscillator;
pub mod rng;
pub mod stats;
pub mod time;
pub mod timer;

pub use controller::{ControllerDesign, DiscreteController};
pub use events::EventQueue;
pub use node::{CompleteVht, NodeMode, NodeParams};
pub use original::{OriginalVhtSim, VhtConfig};
pub use oscillator::{Oscillator, OscillatorSpec, SkewProfile};
pub use rng::{CounterRng, RngKey};
pub use time::SimTime;
