//! Content digests and stable seed derivation.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Digest of a value's canonical JSON form.
///
/// Object keys are emitted in sorted order, so the digest does not depend on
/// the key order of the document the value was read from.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    sha256_hex(serde_json::to_string(&v).expect("json value").as_bytes())
}

/// Derives a per-stage seed from a top-level seed and a stage name.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn canonical_hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":{"y":2,"x":3}}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":{"x":3,"y":2},"b":1}"#).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        let mut m = HashMap::new();
        m.insert("k", 1);
        assert_eq!(canonical_hash(&m).len(), 64);
    }

    #[test]
    fn stage_seeds_differ_by_stage() {
        assert_ne!(stage_seed(7, "probes"), stage_seed(7, "codebook"));
        assert_eq!(stage_seed(7, "probes"), stage_seed(7, "probes"));
    }
}
