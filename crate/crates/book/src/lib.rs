// mdbook cannot run listings that depend on a local crate, so each chapter
// is included here as a module doc and `cargo test` checks it as a doc-test.
// One module per chapter keeps failures traceable to their file.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/channel.md")]
pub mod channel {}
#[doc = include_str!("../../../book/src/compression.md")]
pub mod compression {}
#[doc = include_str!("../../../book/src/capacity.md")]
pub mod capacity {}
#[doc = include_str!("../../../book/src/downlink.md")]
pub mod downlink {}
#[doc = include_str!("../../../book/src/uplink.md")]
pub mod uplink {}
#[doc = include_str!("../../../book/src/learner.md")]
pub mod learner {}
#[doc = include_str!("../../../book/src/bound.md")]
pub mod bound {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
