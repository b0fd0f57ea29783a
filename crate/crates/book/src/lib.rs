//! Guide chapters compiled as doctests.

#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}

#[doc = include_str!("../../../book/src/hum.md")]
pub mod hum {}

#[doc = include_str!("../../../book/src/fixpoint.md")]
pub mod fixpoint {}

#[doc = include_str!("../../../book/src/observability.md")]
pub mod observability {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
