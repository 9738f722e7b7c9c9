//! Leveled RNS-CKKS over `Z_q[X]/(X^N + 1)` and packed encrypted-vector
//! algebra on top of it.
//!
//! Ring arithmetic is exact and RNS-only: primes stay below 2^62 and every
//! product goes through a 128-bit intermediate. The slot-level API
//! ([`tensor`]) is generic over the plaintext scalar via [`Real`].

pub mod arith;
pub mod cipher;
pub mod codec;
pub mod context;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod keys;
pub mod ntt;
pub mod poly;
pub mod primes;
pub mod real;
pub mod sampling;
pub mod tensor;

pub use cipher::{decode, decrypt, encode, encode_constant, encrypt, Ciphertext, Plaintext};
pub use codec::{deserialize_ct, serialize_ct};
pub use context::CkksContext;
pub use error::{CkksError, Result};
pub use keys::{keygen, EvaluationKeys, KeySet, KeySwitchKey, PublicKey, SecretKey};
pub use poly::{Form, RingPoly};
pub use primes::{find_primes, PrimeModulus};
pub use real::Real;
pub use tensor::{CipherVector, PlainMatrix};

/// Double-precision weight matrix.
pub type PlainMatrix64 = PlainMatrix<f64>;
/// Single-precision weight matrix.
pub type PlainMatrix32 = PlainMatrix<f32>;

/// Context with freshly generated primes of the given bit lengths.
pub fn build_context(poly_degree: usize, prime_bits: &[u32], scale_bits: u32) -> Result<CkksContext> {
    CkksContext::new(poly_degree, prime_bits, scale_bits)
}
