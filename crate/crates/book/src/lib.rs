//! The guide in `book/src`, compiled so that its listings run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid {}
#[doc = include_str!("../../../book/src/kernel.md")]
pub mod kernel {}
#[doc = include_str!("../../../book/src/scheme.md")]
pub mod scheme {}
#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
