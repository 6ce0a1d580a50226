use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible random stream for `(seed, stream)`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids, one per consumer so that changing one does not shift another.
pub(crate) const STREAM_SPLIT: u64 = 1;
pub(crate) const STREAM_SUBBATCH: u64 = 2;
pub(crate) const STREAM_ADMIX_BENIGN: u64 = 3;
pub(crate) const STREAM_ADMIX_ADVERSARIAL: u64 = 4;
pub(crate) const STREAM_BATCH_SIZE: u64 = 5;
pub(crate) const STREAM_BLOB_CENTERS: u64 = 6;
pub(crate) const STREAM_BLOB_SAMPLES: u64 = 7;
pub(crate) const STREAM_MODEL_INIT: u64 = 8;
pub(crate) const STREAM_BOUNDARY: u64 = 9;

/// Mixes a per-item index into a base seed (SplitMix64 finaliser).
pub(crate) fn derive_seed(seed: u64, item: u64) -> u64 {
    let mut z = seed ^ item.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
