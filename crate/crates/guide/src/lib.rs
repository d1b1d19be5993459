//! The book under `book/` compiled as documentation, so `cargo test`
//! runs every snippet in it.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/slots.md")]
pub mod slots {}

#[doc = include_str!("../../../book/src/backend.md")]
pub mod backend {}

#[doc = include_str!("../../../book/src/gates.md")]
pub mod gates {}

#[doc = include_str!("../../../book/src/queries.md")]
pub mod queries {}

#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}

#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
