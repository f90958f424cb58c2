pub mod contact_process;
pub mod error;
pub mod estimators;
pub mod meanfield;
pub mod replicate;
pub mod topology;

pub use error::{Error, Result};
