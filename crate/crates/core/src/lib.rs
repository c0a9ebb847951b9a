pub mod error;
pub mod specialfun;

pub use error::{EscatError, Result};
pub mod wavefields;
pub mod curves;
pub mod bie;
pub mod neldermead;
pub mod cloak;
pub mod esc;
pub mod msr;
