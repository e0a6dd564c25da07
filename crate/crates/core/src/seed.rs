use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream for task `tag` under the run seed.
pub(crate) fn task_rng(seed: u64, tag: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    for &t in tag {
        state = splitmix(state ^ splitmix(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(splitmix(state))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
