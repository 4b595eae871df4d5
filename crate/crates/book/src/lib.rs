//! The guide in `book/` compiled as doc-tests, one module per chapter, so
//! `cargo test` fails when a snippet drifts from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}
#[doc = include_str!("../../../book/src/flow.md")]
pub mod flow {}
#[doc = include_str!("../../../book/src/autoencoder.md")]
pub mod autoencoder {}
#[doc = include_str!("../../../book/src/ranking.md")]
pub mod ranking {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("../../../book/src/config.md")]
pub mod config {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
