//! Benchmark landscapes: the P-Peaks generator and the massively multimodal
//! deceptive problem (MMDP).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::genome::{hamming_words, random_genome, Genome, RngStream};
use crate::Error;

/// Slack used when comparing a fitness against the known optimum.
pub const OPTIMUM_EPSILON: f64 = 1e-9;

/// Bits per MMDP subproblem.
pub const MMDP_BLOCK: usize = 6;

/// Subproblem fitness indexed by unitation (number of ones in the block).
pub const UNITATION_TABLE: [f64; 7] = [1.0, 0.0, 0.360384, 0.640576, 0.360384, 0.0, 1.0];

pub fn unitation_fitness(u: usize) -> Result<f64, Error> {
    UNITATION_TABLE
        .get(u)
        .copied()
        .ok_or(Error::InvalidArgument("unitation must lie in 0..=6"))
}

/// `P` random `N`-bit peaks. Fitness is the fraction of bits shared with the
/// nearest peak.
#[derive(Clone, Debug, PartialEq)]
pub struct PPeaksInstance {
    peaks: Vec<Genome>,
    bits: usize,
    seed: u64,
}

impl PPeaksInstance {
    pub fn new(peak_count: usize, bits: usize, seed: u64) -> Result<Self, Error> {
        if peak_count == 0 {
            return Err(Error::InvalidArgument("P-Peaks needs at least one peak"));
        }
        if bits == 0 {
            return Err(Error::InvalidArgument(
                "P-Peaks peaks need at least one bit",
            ));
        }
        let mut rng = RngStream::new(seed);
        let peaks = (0..peak_count)
            .map(|_| random_genome(bits, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { peaks, bits, seed })
    }

    /// Instance with explicit peaks, all of the same length.
    pub fn from_peaks(peaks: Vec<Genome>) -> Result<Self, Error> {
        let bits = peaks
            .first()
            .map(Genome::len)
            .ok_or(Error::InvalidArgument("P-Peaks needs at least one peak"))?;
        if peaks.iter().any(|p| p.len() != bits) {
            return Err(Error::InvalidArgument(
                "all peaks must have the same length",
            ));
        }
        Ok(Self {
            peaks,
            bits,
            seed: 0,
        })
    }

    pub fn peaks(&self) -> &[Genome] {
        &self.peaks
    }

    pub fn peak_count(&self) -> usize {
        self.peaks.len()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn evaluate(&self, g: &Genome) -> Result<f64, Error> {
        if g.len() != self.bits {
            return Err(Error::InvalidArgument("genome length does not match N"));
        }
        let nearest = self
            .peaks
            .iter()
            .map(|p| hamming_words(g.words(), p.words()))
            .min()
            .unwrap_or(self.bits);
        Ok((self.bits - nearest) as f64 / self.bits as f64)
    }
}

/// `k` concatenated 6-bit deceptive subproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MmdpInstance {
    blocks: usize,
}

impl MmdpInstance {
    pub fn new(blocks: usize) -> Result<Self, Error> {
        if blocks == 0 {
            return Err(Error::InvalidArgument("MMDP needs at least one block"));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn genome_len(&self) -> usize {
        self.blocks * MMDP_BLOCK
    }

    /// Sum of per-block unitation fitness, blocks taken left to right.
    pub fn evaluate(&self, g: &Genome) -> Result<f64, Error> {
        if g.len() != self.genome_len() {
            return Err(Error::InvalidArgument("genome length must be 6k"));
        }
        Ok((0..self.blocks)
            .map(|i| UNITATION_TABLE[g.count_ones_in(i * MMDP_BLOCK, MMDP_BLOCK) as usize])
            .sum())
    }
}

/// Serializable description of a problem: kind, parameters and seed.
/// Peaks are regenerated from the seed, never stored.
///
/// Text form: `ppeaks:P=100,N=64,seed=7` or `mmdp:k=20`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemSpec {
    PPeaks {
        peaks: usize,
        bits: usize,
        seed: u64,
    },
    Mmdp {
        blocks: usize,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ProblemInstance, Error> {
        match *self {
            ProblemSpec::PPeaks { peaks, bits, seed } => {
                PPeaksInstance::new(peaks, bits, seed).map(ProblemInstance::PPeaks)
            }
            ProblemSpec::Mmdp { blocks } => MmdpInstance::new(blocks).map(ProblemInstance::Mmdp),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::PPeaks { peaks, bits, seed } => {
                write!(f, "ppeaks:P={peaks},N={bits},seed={seed}")
            }
            ProblemSpec::Mmdp { blocks } => write!(f, "mmdp:k={blocks}"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut peaks = None;
        let mut bits = None;
        let mut seed = None;
        let mut blocks = None;
        for pair in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or(Error::Parse("problem parameters must be key=value"))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse("problem parameter is not an integer"))?;
            let slot = match (kind, key.trim()) {
                ("ppeaks", "P") => &mut peaks,
                ("ppeaks", "N") => &mut bits,
                ("ppeaks", "seed") => &mut seed,
                ("mmdp", "k") => &mut blocks,
                _ => return Err(Error::Parse("unknown problem parameter")),
            };
            *slot = Some(value);
        }
        let spec = match kind {
            "ppeaks" => ProblemSpec::PPeaks {
                peaks: peaks.unwrap_or(100) as usize,
                bits: bits.unwrap_or(64) as usize,
                seed: seed.unwrap_or(0),
            },
            "mmdp" => ProblemSpec::Mmdp {
                blocks: blocks.unwrap_or(20) as usize,
            },
            _ => return Err(Error::Parse("problem kind must be ppeaks or mmdp")),
        };
        Ok(spec)
    }
}

/// A fitness landscape with a known optimum.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemInstance {
    PPeaks(PPeaksInstance),
    Mmdp(MmdpInstance),
}

impl ProblemInstance {
    pub fn genome_len(&self) -> usize {
        match self {
            ProblemInstance::PPeaks(p) => p.bits(),
            ProblemInstance::Mmdp(m) => m.genome_len(),
        }
    }

    /// 1.0 for P-Peaks, `k` for MMDP.
    pub fn optimum_fitness(&self) -> f64 {
        match self {
            ProblemInstance::PPeaks(_) => 1.0,
            ProblemInstance::Mmdp(m) => m.blocks() as f64,
        }
    }

    pub fn evaluate(&self, g: &Genome) -> Result<f64, Error> {
        match self {
            ProblemInstance::PPeaks(p) => p.evaluate(g),
            ProblemInstance::Mmdp(m) => m.evaluate(g),
        }
    }

    pub fn is_solved(&self, fitness: f64) -> bool {
        fitness >= self.optimum_fitness() - OPTIMUM_EPSILON
    }

    pub fn spec(&self) -> ProblemSpec {
        match self {
            ProblemInstance::PPeaks(p) => ProblemSpec::PPeaks {
                peaks: p.peak_count(),
                bits: p.bits(),
                seed: p.seed(),
            },
            ProblemInstance::Mmdp(m) => ProblemSpec::Mmdp { blocks: m.blocks() },
        }
    }

    pub fn describe(&self) -> String {
        format!("{}", self.spec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bits(s: &str) -> Genome {
        Genome::parse_bits(s).unwrap()
    }

    #[test]
    fn make_ppeaks_shapes() {
        let inst = PPeaksInstance::new(100, 64, 7).unwrap();
        assert_eq!(inst.peak_count(), 100);
        assert!(inst.peaks().iter().all(|p| p.len() == 64));
        let one = PPeaksInstance::new(1, 4, 7).unwrap();
        assert_eq!(one.peak_count(), 1);
        assert_eq!(one.peaks()[0].len(), 4);
        assert_eq!(PPeaksInstance::new(100, 64, 7).unwrap(), inst);
        assert!(PPeaksInstance::new(0, 4, 1).is_err());
        assert!(PPeaksInstance::new(4, 0, 1).is_err());
    }

    #[test]
    fn ppeaks_examples() {
        let inst = PPeaksInstance::new(5, 16, 3).unwrap();
        for p in inst.peaks() {
            assert_eq!(inst.evaluate(p).unwrap(), 1.0);
        }
        let single = PPeaksInstance::new(1, 10, 9).unwrap();
        let far = single.peaks()[0].complement();
        assert_eq!(single.evaluate(&far).unwrap(), 0.0);

        let two = PPeaksInstance::from_peaks(vec![bits("1100"), bits("0011")]).unwrap();
        assert_eq!(two.evaluate(&bits("1111")).unwrap(), 0.5);
        assert!(two.evaluate(&bits("111")).is_err());
    }

    #[test]
    fn unitation_table_values() {
        assert_eq!(unitation_fitness(0).unwrap(), 1.0);
        assert_eq!(unitation_fitness(6).unwrap(), 1.0);
        assert_eq!(unitation_fitness(1).unwrap(), 0.0);
        assert_eq!(unitation_fitness(5).unwrap(), 0.0);
        assert_eq!(unitation_fitness(3).unwrap(), 0.640576);
        assert_eq!(unitation_fitness(2).unwrap(), 0.360384);
        assert_eq!(unitation_fitness(4).unwrap(), 0.360384);
        assert!(unitation_fitness(7).is_err());
    }

    #[test]
    fn mmdp_examples() {
        let one = MmdpInstance::new(1).unwrap();
        assert_eq!(one.evaluate(&bits("000000")).unwrap(), 1.0);
        assert_eq!(one.evaluate(&bits("111000")).unwrap(), 0.640576);
        let two = MmdpInstance::new(2).unwrap();
        assert_eq!(two.evaluate(&bits("111111000000")).unwrap(), 2.0);
        assert!(two.evaluate(&bits("111111")).is_err());
        assert!(MmdpInstance::new(0).is_err());
    }

    #[test]
    fn solved_detection() {
        let pp = ProblemInstance::PPeaks(PPeaksInstance::new(3, 8, 1).unwrap());
        assert!(pp.is_solved(1.0));
        assert!(!pp.is_solved(0.875));
        let mmdp = ProblemInstance::Mmdp(MmdpInstance::new(20).unwrap());
        assert!(mmdp.is_solved(20.0));
        assert!(!mmdp.is_solved(19.640576));
    }

    #[test]
    fn mmdp_k2_has_four_global_optima() {
        let inst = MmdpInstance::new(2).unwrap();
        let mut optima = Vec::new();
        for v in 0u32..4096 {
            let g =
                Genome::from_bits(&(0..12).map(|i| (v >> i) & 1 == 1).collect::<Vec<_>>()).unwrap();
            if inst.evaluate(&g).unwrap() == 2.0 {
                optima.push(v);
            }
        }
        optima.sort_unstable();
        assert_eq!(optima, vec![0x000, 0x03f, 0xfc0, 0xfff]);
    }

    #[test]
    fn problem_spec_text_round_trip() {
        for text in ["ppeaks:P=100,N=64,seed=7", "mmdp:k=20"] {
            let spec: ProblemSpec = text.parse().unwrap();
            assert_eq!(format!("{spec}"), text);
        }
        assert!("tsp:n=5".parse::<ProblemSpec>().is_err());
        assert!("mmdp:k=x".parse::<ProblemSpec>().is_err());
        assert!("mmdp:P=3".parse::<ProblemSpec>().is_err());
        assert!("mmdp:k=0".parse::<ProblemSpec>().unwrap().build().is_err());
    }
}
