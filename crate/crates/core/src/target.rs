//! 256-bit proof-of-work threshold.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hash::Hash256;

/// Unsigned 256-bit threshold, big-endian. A header is sealed when its hash,
/// read as a big-endian integer, is `<=` the target.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Target(pub [u8; 32]);

impl Target {
    pub const MAX: Target = Target([0xff; 32]);
    pub const ZERO: Target = Target([0; 32]);

    /// `floor(2^256 / difficulty)`, saturating at `2^256 - 1` for difficulty 1.
    pub fn from_difficulty(difficulty: u64) -> Option<Target> {
        if difficulty == 0 {
            return None;
        }
        if difficulty == 1 {
            return Some(Target::MAX);
        }
        // long division of the 33-byte numerator 0x01 00..00 by difficulty
        let mut numerator = [0u8; 33];
        numerator[0] = 1;
        let mut quotient = [0u8; 33];
        let mut rem: u128 = 0;
        for (i, byte) in numerator.iter().enumerate() {
            let cur = (rem << 8) | u128::from(*byte);
            quotient[i] = (cur / u128::from(difficulty)) as u8;
            rem = cur % u128::from(difficulty);
        }
        debug_assert_eq!(quotient[0], 0);
        let mut out = [0u8; 32];
        out.copy_from_slice(&quotient[1..]);
        Some(Target(out))
    }

    /// `2^exp` for `exp < 256`.
    pub fn pow2(exp: u32) -> Target {
        assert!(exp < 256, "2^{exp} does not fit in 256 bits");
        let mut out = [0u8; 32];
        out[31 - (exp / 8) as usize] = 1 << (exp % 8);
        Target(out)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 32]
    }

    pub fn is_met_by(&self, hash: &Hash256) -> bool {
        hash.0 <= self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Target> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        let bytes = hex::decode(format!("{s:0>64}")).ok()?;
        bytes.try_into().ok().map(Target)
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target(0x{})", self.to_hex())
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Target::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad target hex"))
    }
}
