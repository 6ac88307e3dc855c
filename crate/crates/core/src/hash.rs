//! Provenance hashing: FNV-1a over canonical JSON.

use serde::Serialize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Compact JSON with object keys sorted recursively.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json's default map is a BTreeMap, so a round trip through Value sorts keys.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

/// FNV-1a of [`canonical_json`].
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<u64> {
    Ok(fnv1a64(canonical_json(value)?.as_bytes()))
}

/// Lowercase 16-digit hex rendering used in reports and CSV headers.
pub fn hex(h: u64) -> String {
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn canonical_form_ignores_key_order_and_whitespace() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": {"y": 2, "x": [1, 2]}}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":{"x":[1,2],"y":2},"b":1}"#).unwrap();
        assert_eq!(canonical_json(&a).unwrap(), r#"{"a":{"x":[1,2],"y":2},"b":1}"#);
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
