pub mod bridge;
pub mod error;
pub mod gig_closed;
pub mod lrb;
pub mod multiline;
pub mod prior;
pub mod quad;
pub mod reserve;
pub mod sim;
pub mod specfun;
pub mod stable;
pub mod timechange;

pub use error::{Error, Result};
