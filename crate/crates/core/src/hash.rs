//! Fixed-width digests used across both chains and the audit.

use std::fmt;
use std::str::FromStr;

use md5::Md5;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HexError {
    #[error("expected {expected} hex characters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid hex: {0}")]
    Invalid(String),
}

macro_rules! digest_type {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;
            pub const ZERO: $name = $name([0u8; $len]);

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            /// Lowercase hex, no prefix.
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, HexError> {
                if s.len() != $len * 2 {
                    return Err(HexError::Length {
                        expected: $len * 2,
                        got: s.len(),
                    });
                }
                let mut out = [0u8; $len];
                hex::decode_to_slice(s, &mut out).map_err(|e| HexError::Invalid(e.to_string()))?;
                Ok($name(out))
            }

            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                <[u8; $len]>::try_from(bytes).ok().map($name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = HexError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

digest_type!(Hash256, 32);
digest_type!(Hash128, 16);

/// SHA-256 (FIPS 180-4).
pub fn digest_sha256(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// MD5 (RFC 1321). Only used for replica checksums, never for integrity against an adversary.
pub fn digest_md5(data: &[u8]) -> Hash128 {
    Hash128(Md5::digest(data).into())
}

/// Incremental MD5 over a sequence of byte strings, equal to `digest_md5` of their concatenation.
#[derive(Default, Clone)]
pub struct Md5Stream(Md5);

impl Md5Stream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn finish(self) -> Hash128 {
        Hash128(self.0.finalize().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_fips_vectors() {
        assert_eq!(
            digest_sha256(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            digest_sha256(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            digest_sha256(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq").to_hex(),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
        );
    }

    #[test]
    fn md5_rfc1321_vectors() {
        assert_eq!(digest_md5(b"").to_hex(), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(digest_md5(b"a").to_hex(), "0cc175b9c0f1b6a831c399e269772661");
        assert_eq!(digest_md5(b"abc").to_hex(), "900150983cd24fb0d6963f7d28e17f72");
        assert_eq!(
            digest_md5(b"message digest").to_hex(),
            "f96b697d7cb7938d525a2f31aaf161d0"
        );
    }

    #[test]
    fn md5_stream_matches_concatenation() {
        let mut s = Md5Stream::new();
        s.update(b"mess");
        s.update(b"age digest");
        assert_eq!(s.finish(), digest_md5(b"message digest"));
    }

    #[test]
    fn hex_rendering_is_lowercase_fixed_width() {
        let h = digest_sha256(b"x");
        let s = h.to_hex();
        assert_eq!(s.len(), 64);
        assert!(s.chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)));
        assert_eq!(Hash256::from_hex(&s).unwrap(), h);
        assert_eq!(digest_md5(b"x").to_hex().len(), 32);
        assert!(matches!(
            Hash128::from_hex("abc"),
            Err(HexError::Length { expected: 32, got: 3 })
        ));
    }

    #[test]
    fn sampled_suffix_changes_digest() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let len = rng.gen_range(0..64);
            let x: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let mut y = x.clone();
            y.push(0);
            assert_eq!(digest_sha256(&x), digest_sha256(&x));
            assert_ne!(digest_sha256(&x), digest_sha256(&y));
            assert_eq!(digest_md5(&x), digest_md5(&x));
            assert_ne!(digest_md5(&x), digest_md5(&y));
        }
    }
}
