//! The guide's chapters, compiled as doc-tests so every snippet stays in
//! step with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}

#[doc = include_str!("../../../book/src/conditional.md")]
pub mod conditional {}

#[doc = include_str!("../../../book/src/mcmc.md")]
pub mod mcmc {}

#[doc = include_str!("../../../book/src/testing.md")]
pub mod testing {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
