pub mod crystal;
pub mod elements;
pub mod error;
pub mod figures;
pub mod fourier;
pub mod grid;
pub mod oracle;
pub mod spectrum;
pub mod thick;
pub mod thin;

pub use error::{Error, Result};

// The guide's listings run as doc-tests, one module per chapter so a failure
// points at the chapter it came from.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids-and-kernels.md")]
    mod grids_and_kernels {}
    #[doc = include_str!("../../../book/src/thin-crystal.md")]
    mod thin_crystal {}
    #[doc = include_str!("../../../book/src/thick-crystal.md")]
    mod thick_crystal {}
}
