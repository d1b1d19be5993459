//! Privacy-preserving identity verification over batched homomorphic
//! encryption.
//!
//! A central server encrypts each user's demographic and biometric data
//! into two ciphertext vectors held by an untrusted third-party server.
//! Service providers send encrypted queries to that server, which
//! evaluates them blind; the central server decrypts the result and
//! applies one fixed check, whatever the query was.

pub mod corpus;
pub mod encoding;
pub mod gates;
pub mod he;
pub mod protocol;
pub mod queries;
pub mod setup;
