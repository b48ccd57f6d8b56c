use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible PRNG stream `stream` derived from `seed`.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, kept in one place so the simulator, the RMIT coin,
/// pairing and the bootstrap never share a stream. Per-instance streams add
/// the instance id (< 2^20) to their base.
pub(crate) mod streams {
    pub const PAIRING: u64 = 3;
    pub const RMIT_BASE: u64 = 1 << 20;
    pub const SIM_BASE: u64 = 2 << 20;
    pub const BOOTSTRAP_BASE: u64 = 3 << 20;
    pub const SWEEP_BASE: u64 = 4 << 20;
}
