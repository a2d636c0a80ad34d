//! Pseudospectral laboratory for the Popowicz system, the interacting
//! Camassa-Holm / Degasperis-Procesi pair
//!
//! ```text
//! m_t + (2u + v) m_x + 3 (2u_x + v_x) m = 0,
//! n_t + (2u + v) n_x + 2 (2u_x + v_x) n = 0,    m = u - u_xx,  n = v - v_xx,
//! ```
//!
//! on a periodic box, together with the Littlewood-Paley machinery used to
//! measure it and the diagnostics that track its conserved and sign-definite
//! quantities.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod lagrangian;
pub mod littlewood_paley;
pub mod picard;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
