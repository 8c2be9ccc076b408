//! k-ish nearest neighbor classification over homomorphically encrypted
//! queries.
//!
//! The server holds a labeled database in the clear and receives a query
//! encrypted under the client's key. It evaluates a fixed arithmetic circuit
//! whose depth does not depend on the database size: encrypted L1 distances,
//! a coin-sum estimate of their mean and standard deviation, a threshold
//! `μ + Φ⁻¹(k/n)·σ`, and a vote among the points below it. The client
//! decrypts one bit per repetition and takes the majority.
//!
//! Ciphertexts come from a mock backend ([`he`]) that hides values behind a
//! key id and meters multiplicative depth and gate counts. It offers no
//! cryptographic security.

pub mod circuit;
pub mod classifier;
pub mod error;
pub mod he;
pub mod interp;
pub mod primitives;
pub mod protocol;
pub mod ring;
pub mod seed;

pub use circuit::Circuit;
pub use classifier::{
    classify_with_majority, kappa_of_run, server_classify, server_respond, LabeledDatabase,
    ProtocolParams, SigmaDigits,
};
pub use error::{Error, Result};
pub use he::{keygen, Cipher, EvalMetrics, Evaluator, KeyPair, PublicKey, SecretKey};
pub use interp::{eval_poly_ps, is_smaller, named_tables, NamedTables, PolyTable, TableKind};
pub use primitives::{coin_toss, compute_dist_l1, prob_avg, CoinFn, CoinSpec};
pub use protocol::{decode_message, encode_message, run_client, run_server, ClientConfig, Message};
pub use ring::{select_ring_params, RingParams};
