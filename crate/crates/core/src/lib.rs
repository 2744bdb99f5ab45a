pub mod engine;
pub mod error;
pub mod field;
pub mod jobs;
pub mod objectives;
pub mod oracle;
pub mod par;
pub mod prox;
pub mod reducible;
pub mod sample;
pub mod spd;

pub use error::{Error, Result};
