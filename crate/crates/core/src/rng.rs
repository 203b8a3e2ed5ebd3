//! Counter-based randomness addressed by `(seed, path, generation, stream, index)`.
//!
//! Every offspring count `ξ_{n,j}` of path `p` is a pure function of
//! `(seed, p, n, j)`. Two processes that read the same `(n, j)` therefore see
//! the same value, which is what makes the truncated and shifted processes
//! literally coupled to the base process, and what makes paths independent of
//! the order or thread in which they are simulated.
//!
//! The mixing function is the SplitMix64 finalizer. A `(seed, path, generation,
//! stream)` tuple is absorbed into a 64-bit key; the `j`-th word of that key is
//! `mix64(key + (j + 1) * GOLDEN_GAMMA)`, i.e. the `j`-th output of a SplitMix64
//! generator started at `key`.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline(always)]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ mix64(word.wrapping_add(GOLDEN_GAMMA)))
}

/// Converts 64 random bits to a uniform double in `[0, 1)`.
#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent sub-streams of one `(path, generation)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Per-individual offspring draws `ξ_{n,j}`.
    Individuals,
    /// Whole-generation progeny sums drawn from a closed-form law.
    Closure,
    /// Gaussian limit sampling.
    Gaussian,
    /// Anything else a caller needs; distinct tags give distinct streams.
    Aux(u32),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Individuals => 0,
            Stream::Closure => 1,
            Stream::Gaussian => 2,
            Stream::Aux(t) => 0x1_0000_0000 | t as u64,
        }
    }
}

/// Seeded, stateless source of addressed random words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomnessSource {
    seed: u64,
}

impl RandomnessSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An unrelated source for a sub-experiment identified by `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: absorb(mix64(self.seed), tag ^ 0x6465_7269_7665),
        }
    }

    fn key(&self, path: u64, generation: u64, stream: Stream) -> u64 {
        let k = absorb(mix64(self.seed ^ 0x6272_616e_6368_6c61), path);
        let k = absorb(k, generation);
        absorb(k, stream.tag())
    }

    /// The raw random word behind `ξ_{generation, j}` of `path` (`j` is 1-based).
    pub fn individual(&self, path: u64, generation: u64, j: u64) -> u64 {
        self.individuals(path, generation).word(j)
    }

    /// Random access to all individual words of one generation.
    pub fn individuals(&self, path: u64, generation: u64) -> IndexedWords {
        IndexedWords {
            key: self.key(path, generation, Stream::Individuals),
        }
    }

    /// A sequential handle over one stream. For [`Stream::Individuals`] the
    /// `j`-th call to `next_u64` returns `individual(path, generation, j)`.
    pub fn handle(&self, path: u64, generation: u64, stream: Stream) -> DrawHandle {
        DrawHandle {
            key: self.key(path, generation, stream),
            counter: 0,
        }
    }
}

/// Random access into one keyed stream.
#[derive(Debug, Clone, Copy)]
pub struct IndexedWords {
    key: u64,
}

impl IndexedWords {
    /// Word at 1-based index `j`.
    #[inline(always)]
    pub fn word(&self, j: u64) -> u64 {
        mix64(self.key.wrapping_add(j.wrapping_mul(GOLDEN_GAMMA)))
    }
}

/// Sequential generator over one keyed stream. Its output is fully determined
/// by the key and the counter, so cloning a handle replays the same draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawHandle {
    key: u64,
    counter: u64,
}

impl DrawHandle {
    /// A handle keyed directly by a 64-bit value, outside any path addressing.
    pub fn from_key(key: u64) -> Self {
        Self {
            key: mix64(key ^ 0x5eed_5eed_5eed_5eed),
            counter: 0,
        }
    }

    /// Number of words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl RngCore for DrawHandle {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand::rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
