//! Serde adapter for fixed-size byte arrays encoded as lowercase hex strings.

use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

pub(crate) fn serialize<S, const N: usize>(bytes: &[u8; N], ser: S) -> Result<S::Ok, S::Error>
where
    S: Serializer,
{
    ser.serialize_str(&hex::encode(bytes))
}

pub(crate) fn deserialize<'de, D, const N: usize>(de: D) -> Result<[u8; N], D::Error>
where
    D: Deserializer<'de>,
{
    let s = String::deserialize(de)?;
    decode_lower(&s)
        .ok_or_else(|| D::Error::custom(format!("expected {} lowercase hex characters", N * 2)))
}

/// Strict decoder: exact length, lowercase digits only.
pub(crate) fn decode_lower<const N: usize>(s: &str) -> Option<[u8; N]> {
    if s.len() != N * 2 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return None;
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).ok()?;
    Some(out)
}
