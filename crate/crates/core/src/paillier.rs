//! Paillier public-key encryption with `g = n + 1`, plus a signed fixed-point
//! codec that embeds protocol reals into the plaintext space `Z_n`.
//!
//! No constant-time guarantees.

use std::fmt;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prime::random_prime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaillierError {
    #[error("plaintext is not in Z_n")]
    PlaintextOutOfRange,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("ciphertext was produced under key {found:016x}, expected {expected:016x}")]
    WrongKey { expected: u64, found: u64 },
    #[error("invalid key material: {0}")]
    InvalidKey(&'static str),
    #[error("value {value} exceeds the representable magnitude {bound}")]
    MagnitudeOverflow { value: f64, bound: f64 },
    #[error("truncated key encoding")]
    Truncated,
}

/// Stable identifier of a public key (first eight bytes of SHA-256 of `n`).
pub type KeyId = u64;

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    id: KeyId,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits, id {:016x})", self.n.bits(), self.id)
    }
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self, PaillierError> {
        if n < BigUint::from(6u32) || n.is_even() {
            return Err(PaillierError::InvalidKey("modulus must be an odd composite"));
        }
        let digest = Sha256::digest(n.to_bytes_be());
        let id = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        Ok(Self { n_squared: &n * &n, n, id })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> BigUint {
        &self.n + 1u32
    }

    pub fn id(&self) -> KeyId {
        self.id
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// `c = g^m r^n mod n^2` with fresh `r` drawn uniformly from `Z_n^*`.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext, PaillierError> {
        let r = loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_nonce(m, &r)
    }

    /// Deterministic encryption with caller-supplied `r`.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext, PaillierError> {
        if *m >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        if r.is_zero() || *r >= self.n || !r.gcd(&self.n).is_one() {
            return Err(PaillierError::InvalidKey("nonce must lie in Z_n^*"));
        }
        // g^m = (1 + n)^m = 1 + m n  (mod n^2)
        let g_m = (BigUint::one() + m * &self.n) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext { value: (g_m * r_n) % &self.n_squared, key_id: self.id })
    }

    /// Homomorphic addition: decrypts to `m1 + m2 mod n`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext { value: (&a.value * &b.value) % &self.n_squared, key_id: self.id })
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key_id != self.id {
            return Err(PaillierError::WrongKey { expected: self.id, found: c.key_id });
        }
        if c.value.is_zero() || c.value >= self.n_squared || !c.value.gcd(&self.n).is_one() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(())
    }

    /// `u32` big-endian length followed by `n` in big-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_length_prefixed(&self.n)
    }

    /// Inverse of [`PublicKey::to_bytes`]; returns the key and the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), PaillierError> {
        let (n, used) = decode_length_prefixed(bytes)?;
        Ok((Self::from_modulus(n)?, used))
    }
}

pub(crate) fn encode_length_prefixed(v: &BigUint) -> Vec<u8> {
    let body = v.to_bytes_be();
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub(crate) fn decode_length_prefixed(bytes: &[u8]) -> Result<(BigUint, usize), PaillierError> {
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or(PaillierError::Truncated)?.try_into().expect("4 bytes");
    let len = u32::from_be_bytes(len_bytes) as usize;
    let body = bytes.get(4..4 + len).ok_or(PaillierError::Truncated)?;
    Ok((BigUint::from_bytes_be(body), 4 + len))
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl PrivateKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keypair {
    pub public: PublicKey,
    private: PrivateKey,
    pub bit_length: u64,
}

impl Keypair {
    /// Key with two random primes of `bit_length / 2` bits each.
    pub fn generate<R: Rng + ?Sized>(bit_length: u64, rng: &mut R) -> Result<Self, PaillierError> {
        if bit_length < 16 || bit_length % 2 != 0 {
            return Err(PaillierError::InvalidKey("bit length must be even and at least 16"));
        }
        loop {
            let p = random_prime(bit_length / 2, rng);
            let q = random_prime(bit_length / 2, rng);
            if let Ok(kp) = Self::from_primes(&p, &q) {
                return Ok(kp);
            }
        }
    }

    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidKey("primes must be distinct"));
        }
        let n = p * q;
        let lambda = (p - 1u32) * (q - 1u32);
        if !n.gcd(&lambda).is_one() {
            return Err(PaillierError::InvalidKey("gcd(n, lambda) != 1"));
        }
        let mu = mod_inverse(&lambda, &n).ok_or(PaillierError::InvalidKey("lambda not invertible mod n"))?;
        let bit_length = n.bits();
        Ok(Self { public: PublicKey::from_modulus(n)?, private: PrivateKey { lambda, mu }, bit_length })
    }

    pub fn private(&self) -> &PrivateKey {
        &self.private
    }

    /// `m = L(c^lambda mod n^2) * mu mod n` with `L(u) = (u - 1) / n`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        let pk = &self.public;
        pk.check(c)?;
        let u = c.value.modpow(&self.private.lambda, &pk.n_squared);
        let l = (u - 1u32) / &pk.n;
        Ok((l * &self.private.mu) % &pk.n)
    }
}

fn mod_inverse(a: &BigUint, modulus: &BigUint) -> Option<BigUint> {
    let m = BigInt::from(modulus.clone());
    let e = BigInt::from(a.clone()).extended_gcd(&m);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m).to_biguint()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub value: BigUint,
    pub key_id: KeyId,
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_length_prefixed(&self.value)
    }

    pub fn from_bytes(bytes: &[u8], key_id: KeyId) -> Result<(Self, usize), PaillierError> {
        let (value, used) = decode_length_prefixed(bytes)?;
        Ok((Self { value, key_id }, used))
    }
}

/// Phase-A weights may exceed one in magnitude, so any quantization error on
/// a share is amplified over the first rounds. With 64 bits every `f64` of
/// magnitude at least `2^-11` encodes exactly, and encrypted runs reproduce
/// plaintext runs share for share.
pub const DEFAULT_FRACTIONAL_BITS: u32 = 64;

/// Signed fixed-point embedding of reals into `Z_n`: `round(v 2^f)`, with
/// negative values stored as `n - |.|` and decoded as negative above `n / 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointCodec {
    fractional_bits: u32,
    modulus: BigUint,
}

impl FixedPointCodec {
    pub fn new(modulus: &BigUint, fractional_bits: u32) -> Self {
        Self { fractional_bits, modulus: modulus.clone() }
    }

    pub fn for_key(key: &PublicKey) -> Self {
        Self::new(key.n(), DEFAULT_FRACTIONAL_BITS)
    }

    pub fn fractional_bits(&self) -> u32 {
        self.fractional_bits
    }

    /// Largest encodable magnitude, `2^(bits(n) - 2 - f)` (exclusive).
    pub fn bound(&self) -> f64 {
        let exp = self.modulus.bits() as i64 - 2 - self.fractional_bits as i64;
        2f64.powi(exp as i32)
    }

    fn scale(&self) -> f64 {
        2f64.powi(self.fractional_bits as i32)
    }

    pub fn encode(&self, v: f64) -> Result<BigUint, PaillierError> {
        if !v.is_finite() || v.abs() >= self.bound() {
            return Err(PaillierError::MagnitudeOverflow { value: v, bound: self.bound() });
        }
        let scaled = (v * self.scale()).round();
        let magnitude = BigUint::from_f64(scaled.abs()).expect("finite");
        if scaled < 0.0 && !magnitude.is_zero() {
            Ok(&self.modulus - magnitude)
        } else {
            Ok(magnitude)
        }
    }

    pub fn decode(&self, e: &BigUint) -> f64 {
        let half = &self.modulus >> 1u32;
        let signed = if *e > half {
            BigInt::from_biguint(Sign::Minus, &self.modulus - e)
        } else {
            BigInt::from(e.clone())
        };
        signed.to_f64().expect("finite") / self.scale()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::experiment_rng;
    use proptest::prelude::*;

    fn toy() -> Keypair {
        Keypair::from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).unwrap()
    }

    #[test]
    fn toy_key_matches_hand_computation() {
        // brute-force inverse of lambda mod n
        let mu = (1u32..35).find(|m| (24 * m) % 35 == 1).unwrap();
        assert_eq!(mu, 19);
        let kp = toy();
        assert_eq!(*kp.public.n(), BigUint::from(35u32));
        assert_eq!(kp.public.g(), BigUint::from(36u32));
        assert_eq!(*kp.private().lambda(), BigUint::from(24u32));
        assert_eq!(*kp.private().mu(), BigUint::from(mu));
    }

    #[test]
    fn toy_encryption_with_fixed_nonce() {
        // oracle: naive repeated multiplication mod n^2 with the full generator
        let nn = 1225u64;
        let mut expected = 1u64;
        for _ in 0..3 {
            expected = expected * 36 % nn;
        }
        for _ in 0..35 {
            expected = expected * 2 % nn;
        }
        let kp = toy();
        let c = kp.public.encrypt_with_nonce(&BigUint::from(3u32), &BigUint::from(2u32)).unwrap();
        assert_eq!(c.value, BigUint::from(expected));
        assert_eq!(kp.decrypt(&c).unwrap(), BigUint::from(3u32));
    }

    #[test]
    fn toy_roundtrip_all_plaintexts() {
        let kp = toy();
        let mut rng = experiment_rng(5);
        for m in 0u32..35 {
            let c = kp.public.encrypt(&BigUint::from(m), &mut rng).unwrap();
            assert_eq!(kp.decrypt(&c).unwrap(), BigUint::from(m));
        }
    }

    #[test]
    fn generated_key_invariants() {
        let mut rng = experiment_rng(6);
        let kp = Keypair::generate(256, &mut rng).unwrap();
        let n = kp.public.n();
        assert!(n.bits() == 256 || n.bits() == 255);
        assert!(n.gcd(kp.private().lambda()).is_one());
        assert!(((kp.private().mu() * kp.private().lambda()) % n).is_one());
        assert_eq!(kp.public.g(), n + 1u32);
    }

    #[test]
    fn probabilistic_and_homomorphic() {
        let mut rng = experiment_rng(7);
        let kp = Keypair::generate(128, &mut rng).unwrap();
        let one = BigUint::one();
        let a = kp.public.encrypt(&one, &mut rng).unwrap();
        let b = kp.public.encrypt(&one, &mut rng).unwrap();
        assert_ne!(a, b);
        let sum = kp.public.add(&a, &b).unwrap();
        assert_eq!(kp.decrypt(&sum).unwrap(), BigUint::from(2u32));
        assert_eq!(kp.decrypt(&kp.public.encrypt(&BigUint::zero(), &mut rng).unwrap()).unwrap(), BigUint::zero());
    }

    #[test]
    fn errors() {
        let kp = toy();
        let mut rng = experiment_rng(8);
        assert_eq!(kp.public.encrypt(&BigUint::from(35u32), &mut rng), Err(PaillierError::PlaintextOutOfRange));
        let bad = Ciphertext { value: BigUint::from(70u32), key_id: kp.public.id() };
        assert_eq!(kp.decrypt(&bad), Err(PaillierError::MalformedCiphertext));
        let other = Keypair::from_primes(&BigUint::from(11u32), &BigUint::from(13u32)).unwrap();
        let c = other.public.encrypt(&BigUint::one(), &mut rng).unwrap();
        assert!(matches!(kp.decrypt(&c), Err(PaillierError::WrongKey { .. })));
        assert!(Keypair::from_primes(&BigUint::from(7u32), &BigUint::from(7u32)).is_err());
    }

    #[test]
    fn public_key_bytes() {
        let kp = toy();
        let bytes = kp.public.to_bytes();
        assert_eq!(bytes, vec![0, 0, 0, 1, 35]);
        let (back, used) = PublicKey::from_bytes(&bytes).unwrap();
        assert_eq!(back, kp.public);
        assert_eq!(used, 5);
        assert_eq!(PublicKey::from_bytes(&bytes[..3]), Err(PaillierError::Truncated));
    }

    #[test]
    fn codec_examples() {
        let mut rng = experiment_rng(9);
        let kp = Keypair::generate(256, &mut rng).unwrap();
        let codec = FixedPointCodec::new(kp.public.n(), 32);
        assert_eq!(codec.encode(0.0).unwrap(), BigUint::zero());
        assert_eq!(codec.decode(&BigUint::zero()), 0.0);
        let e = codec.encode(-1.5).unwrap();
        assert_eq!(e, kp.public.n() - BigUint::from(6_442_450_944u64));
        assert_eq!(codec.decode(&e), -1.5);
        assert!(matches!(codec.encode(2f64.powi(222)), Err(PaillierError::MagnitudeOverflow { .. })));
        assert!(codec.encode(f64::NAN).is_err());
    }

    #[test]
    fn codec_is_monotone_after_unfolding() {
        let codec = FixedPointCodec::new(&(BigUint::one() << 200u32), 32);
        let values = [-1e6, -3.5, -1e-9, 0.0, 2e-10, 1.0, 7.25, 1e9];
        let decoded: Vec<f64> = values.iter().map(|&v| codec.decode(&codec.encode(v).unwrap())).collect();
        assert!(decoded.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn codec_roundtrip_error(v in -1e3f64..1e3) {
            let codec = FixedPointCodec::new(&(BigUint::one() << 255u32), 32);
            let back = codec.decode(&codec.encode(v).unwrap());
            prop_assert!((back - v).abs() <= 2f64.powi(-33));
        }

        #[test]
        fn toy_homomorphism(m1 in 0u32..35, m2 in 0u32..35, seed in any::<u64>()) {
            let kp = toy();
            let mut rng = experiment_rng(seed);
            let a = kp.public.encrypt(&BigUint::from(m1), &mut rng).unwrap();
            let b = kp.public.encrypt(&BigUint::from(m2), &mut rng).unwrap();
            let sum = kp.decrypt(&kp.public.add(&a, &b).unwrap()).unwrap();
            prop_assert_eq!(sum, BigUint::from((m1 + m2) % 35));
        }
    }
}
