pub mod assets;
pub mod descriptor;
pub mod energy;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod pipeline;
pub mod scenes;
pub mod shapes;
pub mod solids;
pub mod spectral;

pub use error::{Error, Result};
