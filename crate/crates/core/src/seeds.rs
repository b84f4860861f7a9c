//! Episode seed namespaces. Training seeds have the top bit clear and
//! evaluation seeds have it set, so the two sets never intersect.

pub const EVAL_BIT: u64 = 1 << 63;

pub fn training_seed(raw: u64) -> u64 {
    raw & !EVAL_BIT
}

pub fn eval_seed(raw: u64) -> u64 {
    raw | EVAL_BIT
}

pub fn is_eval_seed(seed: u64) -> bool {
    seed & EVAL_BIT != 0
}

/// Deterministic 64-bit mix (splitmix64 finalizer) for deriving seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
