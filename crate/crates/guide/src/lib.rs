//! Book chapters, included here so `cargo test` runs their snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpora.md")]
pub mod corpora {}
#[doc = include_str!("../../../book/src/keywords.md")]
pub mod keywords {}
#[doc = include_str!("../../../book/src/recnn.md")]
pub mod recnn {}
#[doc = include_str!("../../../book/src/selective.md")]
pub mod selective {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/containers.md")]
pub mod containers {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/http-api.md")]
pub mod http_api {}
