//! Fermionic completely positive maps induced by linear mode transformations,
//! their Heisenberg action on normally ordered monomials, closed moment
//! hierarchies and a brute-force Fock-space oracle.

pub mod channel;
pub mod cli;
pub mod environment;
pub mod error;
pub mod fock_oracle;
pub mod gksl;
pub mod linalg;
pub mod multiindex;
pub mod poly;
pub mod postselect;
pub mod sampling;
pub mod secondquant;

pub use error::{Error, Result};

/// Fixed 17-significant-digit rendering used in every CSV output; `-0` prints as `0`.
pub fn format_real(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}
