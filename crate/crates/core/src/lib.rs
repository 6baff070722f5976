//! Orthogonal unimodular polyphase code pairs with jointly optimised
//! minimum-ISL mismatched filters, their delay-Doppler analysis, and an
//! alternating-code pulsed radar simulation for second-trip suppression.

pub mod ambiguity;
pub mod error;
pub mod optimizer;
pub mod solver;
pub mod trip;
pub mod waveform;

pub use error::{Error, Result};
