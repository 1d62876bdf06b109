//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a stream addressed by
//! `(master seed, module tag, grid index, replica index)`. Two runs with the
//! same key see the same numbers no matter how replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Tag {
    Capacity = 1,
    Harmonic = 2,
    Walk = 3,
    Window = 4,
    Confined = 5,
    Interlace = 6,
    Bernoulli = 7,
    Vacancy = 8,
    Obstacle = 9,
    Lln = 10,
    Sweep = 11,
    Pilot = 12,
    Test = 13,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for one task. The ChaCha key comes from the seed and tag, the
/// 64-bit stream id from the grid and replica indices.
pub fn stream(seed: u64, tag: Tag, grid: u32, replica: u32) -> Rng {
    let mut key = [0u8; 32];
    let mut s = splitmix(seed ^ splitmix(tag as u64));
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((grid as u64) << 32) | replica as u64);
    rng
}

/// Derive a child seed, used when a task needs its own family of streams.
pub fn child_seed(seed: u64, tag: Tag, grid: u32, replica: u32) -> u64 {
    splitmix(splitmix(seed ^ (tag as u64).rotate_left(17)) ^ (((grid as u64) << 32) | replica as u64))
}
