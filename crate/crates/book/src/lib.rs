//! Runs the code listings of the guide in `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/fuzzy-logic.md")]
pub mod fuzzy_logic {}
#[doc = include_str!("../../../book/src/grounding.md")]
pub mod grounding {}
#[doc = include_str!("../../../book/src/inference.md")]
pub mod inference {}
#[doc = include_str!("../../../book/src/hierarchy.md")]
pub mod hierarchy {}
#[doc = include_str!("../../../book/src/learning.md")]
pub mod learning {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
