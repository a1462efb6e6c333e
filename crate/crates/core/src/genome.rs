//! Fixed-length bit-string genomes and the variation/selection operators.
//!
//! Every operator draws randomness through [`rand_core::RngCore`] only, with
//! a fixed mapping from raw 64-bit words to decisions, so the same generator
//! state always produces the same outcome on every platform:
//!
//! * random bits: successive `next_u64` words, least significant bit first;
//! * an index in `0..n`: `(next_u64() * n) >> 64` computed in 128 bits;
//! * a Bernoulli(p) trial: `next_u64() < p * 2^64` (always true for `p == 1`);
//! * a crossover mask: one `next_u64` word per 64 genome bits, a set bit
//!   takes the second parent's value.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::Error;

const WORD: usize = 64;

/// A fixed-length string of bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    words: Vec<u64>,
    len: usize,
}

impl Genome {
    /// All-zero genome of `len` bits.
    pub fn zeros(len: usize) -> Result<Self, Error> {
        if len == 0 {
            return Err(Error::InvalidArgument("genome length must be at least 1"));
        }
        Ok(Self {
            words: vec![0; len.div_ceil(WORD)],
            len,
        })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, Error> {
        let mut g = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            g.set(i, b);
        }
        Ok(g)
    }

    /// Number of bits.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; genomes have at least one bit.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits in `start..start + width`, `width <= 64`.
    pub fn count_ones_in(&self, start: usize, width: usize) -> u32 {
        debug_assert!(width <= WORD && start + width <= self.len);
        if width == 0 {
            return 0;
        }
        let word = start / WORD;
        let offset = start % WORD;
        let mut chunk = self.words[word] >> offset;
        if offset + width > WORD {
            chunk |= self.words[word + 1] << (WORD - offset);
        }
        let mask = if width == WORD {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        (chunk & mask).count_ones()
    }

    /// Bitwise complement.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.clear_tail();
        out
    }

    /// Parses an ASCII string of `0` and `1`, first character is bit 0.
    pub fn parse_bits(s: &str) -> Result<Self, Error> {
        let mut g = Self::zeros(s.len())?;
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => g.set(i, true),
                _ => return Err(Error::Parse("genome must contain only '0' and '1'")),
            }
        }
        Ok(g)
    }

    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({})", self.to_bit_string())
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A genome and, once evaluated, its fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Self {
            genome,
            fitness: None,
        }
    }

    pub fn evaluated(genome: Genome, fitness: f64) -> Self {
        Self {
            genome,
            fitness: Some(fitness),
        }
    }

    /// Fitness, or an invalid-state error if the individual was never evaluated.
    pub fn fitness(&self) -> Result<f64, Error> {
        self.fitness
            .ok_or(Error::InvalidState("individual has not been evaluated"))
    }
}

/// Seeded random stream used by every stochastic step.
///
/// The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`). A
/// 64-bit seed is expanded with SplitMix64 into the 256-bit key, and the
/// ChaCha stream id separates independent streams sharing one seed, so a
/// node's stream is a pure function of `(seed, stream id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(expand_seed(seed));
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream for `(repetition, node)` of an experiment seeded with `seed`.
    pub fn for_node(seed: u64, repetition: u32, node: u32) -> Self {
        Self::with_stream(seed, (u64::from(repetition) << 32) | u64::from(node))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn expand_seed(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = seed;
    for chunk in out.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
    }
    out
}

/// Uniform index in `0..n`, `n >= 1`.
pub fn sample_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Bernoulli trial with probability `p` in `[0, 1]`.
pub fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    BernoulliThreshold::new(p).sample(rng)
}

#[derive(Clone, Copy, Debug)]
struct BernoulliThreshold {
    threshold: u64,
    always: bool,
}

impl BernoulliThreshold {
    fn new(p: f64) -> Self {
        if p >= 1.0 {
            Self {
                threshold: u64::MAX,
                always: true,
            }
        } else {
            // 2^64 * p, p < 1 so this stays below 2^64
            let threshold = (p * 18_446_744_073_709_551_616.0) as u64;
            Self {
                threshold,
                always: false,
            }
        }
    }

    #[inline]
    fn sample<R: RngCore + ?Sized>(self, rng: &mut R) -> bool {
        let draw = rng.next_u64();
        self.always || draw < self.threshold
    }
}

fn check_rate(rate: f64) -> Result<(), Error> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("mutation rate must lie in [0, 1]"))
    }
}

pub fn random_genome<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Result<Genome, Error> {
    let mut g = Genome::zeros(len)?;
    for w in &mut g.words {
        *w = rng.next_u64();
    }
    g.clear_tail();
    Ok(g)
}

pub fn hamming(a: &Genome, b: &Genome) -> Result<usize, Error> {
    if a.len != b.len {
        return Err(Error::InvalidArgument("genome lengths differ"));
    }
    Ok(hamming_words(&a.words, &b.words))
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

/// Returns a copy of `g` with each bit flipped independently with
/// probability `rate`. One draw is consumed per bit.
pub fn bit_flip_mutation<R: RngCore + ?Sized>(
    g: &Genome,
    rate: f64,
    rng: &mut R,
) -> Result<Genome, Error> {
    let mut out = g.clone();
    mutate_in_place(&mut out, rate, rng)?;
    Ok(out)
}

pub(crate) fn mutate_in_place<R: RngCore + ?Sized>(
    g: &mut Genome,
    rate: f64,
    rng: &mut R,
) -> Result<(), Error> {
    check_rate(rate)?;
    let trial = BernoulliThreshold::new(rate);
    for i in 0..g.len {
        if trial.sample(rng) {
            g.words[i / WORD] ^= 1u64 << (i % WORD);
        }
    }
    Ok(())
}

/// One child; each bit comes from `a` or `b` with probability 1/2.
pub fn uniform_crossover<R: RngCore + ?Sized>(
    a: &Genome,
    b: &Genome,
    rng: &mut R,
) -> Result<Genome, Error> {
    if a.len != b.len {
        return Err(Error::InvalidArgument("parent lengths differ"));
    }
    let mut child = a.clone();
    for ((c, &x), &y) in child.words.iter_mut().zip(&a.words).zip(&b.words) {
        let mask = rng.next_u64();
        *c = (x & !mask) | (y & mask);
    }
    Ok(child)
}

/// k-tournament with replacement over an evaluated population.
///
/// Ties between equally fit sampled candidates go to the lowest index.
pub fn tournament_select<R: RngCore + ?Sized>(
    population: &[Individual],
    k: usize,
    rng: &mut R,
) -> Result<usize, Error> {
    if population.is_empty() {
        return Err(Error::InvalidState(
            "cannot select from an empty population",
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("tournament size must be at least 1"));
    }
    let mut best = sample_index(rng, population.len());
    let mut best_fit = population[best].fitness()?;
    for _ in 1..k {
        let idx = sample_index(rng, population.len());
        let fit = population[idx].fitness()?;
        if fit > best_fit || (fit == best_fit && idx < best) {
            best = idx;
            best_fit = fit;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a fixed list of words, cycling.
    struct Script {
        words: Vec<u64>,
        pos: usize,
    }

    impl Script {
        fn new(words: &[u64]) -> Self {
            Self {
                words: words.to_vec(),
                pos: 0,
            }
        }
    }

    impl RngCore for Script {
        fn next_u32(&mut self) -> u32 {
            self.next_u64() as u32
        }
        fn next_u64(&mut self) -> u64 {
            let w = self.words[self.pos % self.words.len()];
            self.pos += 1;
            w
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            for b in dst {
                *b = self.next_u64() as u8;
            }
        }
    }

    fn bits(s: &str) -> Genome {
        Genome::parse_bits(s).unwrap()
    }

    /// A word that `sample_index(_, n)` maps to `i`.
    fn index_word(i: usize, n: usize) -> u64 {
        ((((i as u128) << 64) + (1u128 << 63)) / n as u128) as u64
    }

    #[test]
    fn random_genome_has_requested_length() {
        let mut rng = RngStream::new(1);
        let g = random_genome(8, &mut rng).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|b| b || !b));
        assert_eq!(g.words()[0] >> 8, 0);
    }

    #[test]
    fn random_genome_is_deterministic() {
        let a = random_genome(4, &mut RngStream::new(99)).unwrap();
        let b = random_genome(4, &mut RngStream::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_genome_bit_mean_near_half() {
        let g = random_genome(10_000, &mut RngStream::new(2024)).unwrap();
        let mean = g.count_ones() as f64 / 10_000.0;
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
    }

    #[test]
    fn zero_length_rejected() {
        assert!(matches!(
            random_genome(0, &mut RngStream::new(0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&bits("1010"), &bits("1010")).unwrap(), 0);
        assert_eq!(hamming(&bits("0000"), &bits("1111")).unwrap(), 4);
        assert_eq!(hamming(&bits("110010"), &bits("101010")).unwrap(), 2);
        assert!(hamming(&bits("10"), &bits("101")).is_err());
    }

    #[test]
    fn mutation_rate_zero_and_one() {
        let g = random_genome(100, &mut RngStream::new(5)).unwrap();
        let mut rng = RngStream::new(6);
        assert_eq!(bit_flip_mutation(&g, 0.0, &mut rng).unwrap(), g);
        assert_eq!(
            bit_flip_mutation(&g, 1.0, &mut rng).unwrap(),
            g.complement()
        );
    }

    #[test]
    fn mutation_rejects_bad_rates() {
        let g = bits("0101");
        let mut rng = RngStream::new(0);
        assert!(bit_flip_mutation(&g, -0.1, &mut rng).is_err());
        assert!(bit_flip_mutation(&g, 1.5, &mut rng).is_err());
        assert!(bit_flip_mutation(&g, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn mutation_flip_count_within_binomial_bounds() {
        // Binomial(10000, 0.01): mean 100, sigma ~9.95, +-4 sigma -> [60, 140].
        let g = Genome::zeros(10_000).unwrap();
        for seed in 0..20 {
            let m = bit_flip_mutation(&g, 0.01, &mut RngStream::new(seed)).unwrap();
            let flips = m.count_ones();
            assert!((60..=140).contains(&flips), "seed {seed}: {flips} flips");
        }
    }

    #[test]
    fn crossover_examples() {
        let a = bits("10110");
        let mut rng = RngStream::new(3);
        assert_eq!(uniform_crossover(&a, &a, &mut rng).unwrap(), a);

        let b = bits("01001");
        let mut always_a = Script::new(&[0]);
        assert_eq!(uniform_crossover(&a, &b, &mut always_a).unwrap(), a);
        let mut always_b = Script::new(&[u64::MAX]);
        assert_eq!(uniform_crossover(&a, &b, &mut always_b).unwrap(), b);

        assert!(uniform_crossover(&a, &bits("1"), &mut rng).is_err());
    }

    #[test]
    fn crossover_reaches_all_children_of_complements() {
        let zero = bits("0000");
        let one = bits("1111");
        let mut seen = [false; 16];
        let mut rng = RngStream::new(11);
        for _ in 0..1000 {
            let c = uniform_crossover(&zero, &one, &mut rng).unwrap();
            let v = (0..4).fold(0usize, |acc, i| acc | (usize::from(c.get(i)) << i));
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    fn pop_with(fitness: &[f64]) -> Vec<Individual> {
        fitness
            .iter()
            .map(|&f| Individual::evaluated(bits("0"), f))
            .collect()
    }

    #[test]
    fn tournament_single_candidate() {
        let pop = pop_with(&[0.3]);
        assert_eq!(
            tournament_select(&pop, 3, &mut RngStream::new(1)).unwrap(),
            0
        );
    }

    #[test]
    fn tournament_scripted_sample_picks_best() {
        let pop = pop_with(&[0.1, 0.9, 0.5, 0.2]);
        let n = pop.len();
        let mut rng = Script::new(&[index_word(1, n), index_word(2, n), index_word(3, n)]);
        assert_eq!(tournament_select(&pop, 3, &mut rng).unwrap(), 1);
        let mut rng = Script::new(&[index_word(3, n), index_word(0, n), index_word(1, n)]);
        assert_eq!(tournament_select(&pop, 3, &mut rng).unwrap(), 1);
    }

    #[test]
    fn tournament_ties_go_to_lowest_index() {
        let pop = pop_with(&[0.5, 0.5, 0.5]);
        let mut rng = Script::new(&[index_word(2, 3), index_word(1, 3), index_word(2, 3)]);
        assert_eq!(tournament_select(&pop, 3, &mut rng).unwrap(), 1);
    }

    #[test]
    fn tournament_errors() {
        let mut rng = RngStream::new(0);
        assert!(matches!(
            tournament_select(&[], 3, &mut rng),
            Err(Error::InvalidState(_))
        ));
        let pop = vec![Individual::new(bits("01"))];
        assert!(matches!(
            tournament_select(&pop, 3, &mut rng),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn tournament_top_selection_probability() {
        // P(top of 100 wins a 3-tournament with replacement) = 1 - (99/100)^3.
        let pop: Vec<Individual> = (0..100)
            .map(|i| Individual::evaluated(bits("0"), i as f64))
            .collect();
        let expected = 1.0 - (0.99f64).powi(3);
        let mut rng = RngStream::new(77);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| tournament_select(&pop, 3, &mut rng).unwrap() == 99)
            .count();
        let p = hits as f64 / trials as f64;
        assert!(
            (p - expected).abs() <= 0.005,
            "p = {p}, expected {expected}"
        );
    }

    #[test]
    fn node_streams_differ() {
        let mut a = RngStream::for_node(1, 0, 0);
        let mut b = RngStream::for_node(1, 0, 1);
        let mut c = RngStream::for_node(1, 1, 0);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn count_ones_in_spans_words() {
        let mut g = Genome::zeros(130).unwrap();
        for i in 60..70 {
            g.set(i, true);
        }
        assert_eq!(g.count_ones_in(60, 6), 6);
        assert_eq!(g.count_ones_in(62, 6), 6);
        assert_eq!(g.count_ones_in(66, 6), 4);
        assert_eq!(g.count_ones_in(0, 64), 4);
        assert_eq!(g.count_ones_in(64, 64), 6);
    }

    #[test]
    fn bit_string_round_trip() {
        let g = bits("0110100111");
        assert_eq!(g.to_bit_string(), "0110100111");
        assert!(Genome::parse_bits("01a").is_err());
        assert!(Genome::parse_bits("").is_err());
    }
}
