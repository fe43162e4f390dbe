pub mod channel;
pub mod config;
pub mod contour;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod model;
pub mod numrange;
pub mod oracle;
pub mod pipeline;
pub mod quadrature;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result};
