use sha2::{Digest, Sha256};

/// Stage seed from the global seed and a label, so that rerunning or
/// reconfiguring one stage never shifts another stage's random stream.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
