use std::cell::RefCell;
use std::collections::BTreeMap;

use poolea_core::genome::sample_index;
use poolea_core::problems::UNITATION_TABLE;
use poolea_core::store::{check_put, StoreError};
use poolea_core::*;
use proptest::prelude::*;
use rand_core::RngCore;

fn genome_strategy(len: std::ops::Range<usize>) -> impl Strategy<Value = Genome> {
    len.prop_flat_map(|n| proptest::collection::vec(any::<bool>(), n))
        .prop_map(|bits| Genome::from_bits(&bits).unwrap())
}

fn pair_strategy() -> impl Strategy<Value = (Genome, Genome)> {
    (1usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(a, b)| {
                (
                    Genome::from_bits(&a).unwrap(),
                    Genome::from_bits(&b).unwrap(),
                )
            })
    })
}

/// Independent reimplementation: max over peaks of matching bits, divided by N.
fn ppeaks_oracle(peaks: &[Genome], g: &Genome) -> f64 {
    let n = g.len();
    let best = peaks
        .iter()
        .map(|p| (0..n).filter(|&i| p.get(i) == g.get(i)).count())
        .max()
        .unwrap();
    best as f64 / n as f64
}

fn mmdp_oracle(g: &Genome) -> f64 {
    let bits: Vec<bool> = g.iter().collect();
    bits.chunks(6)
        .map(|block| UNITATION_TABLE[block.iter().filter(|&&b| b).count()])
        .sum()
}

proptest! {
    #[test]
    fn operators_preserve_length((a, b) in pair_strategy(), seed in any::<u64>(), rate in 0.0f64..=1.0) {
        let mut rng = RngStream::new(seed);
        prop_assert_eq!(bit_flip_mutation(&a, rate, &mut rng).unwrap().len(), a.len());
        prop_assert_eq!(uniform_crossover(&a, &b, &mut rng).unwrap().len(), a.len());
        prop_assert_eq!(random_genome(a.len(), &mut rng).unwrap().len(), a.len());
    }

    #[test]
    fn crossover_bits_come_from_a_parent((a, b) in pair_strategy(), seed in any::<u64>()) {
        let child = uniform_crossover(&a, &b, &mut RngStream::new(seed)).unwrap();
        for i in 0..a.len() {
            prop_assert!(child.get(i) == a.get(i) || child.get(i) == b.get(i));
        }
    }

    #[test]
    fn hamming_is_a_metric((a, b) in pair_strategy()) {
        let d = hamming(&a, &b).unwrap();
        prop_assert_eq!(d, hamming(&b, &a).unwrap());
        prop_assert!(d <= a.len());
        prop_assert_eq!(hamming(&a, &a).unwrap(), 0);
        prop_assert_eq!(hamming(&a, &a.complement()).unwrap(), a.len());
    }

    #[test]
    fn operators_are_deterministic((a, b) in pair_strategy(), seed in any::<u64>()) {
        let run = |s| {
            let mut rng = RngStream::new(s);
            let c = uniform_crossover(&a, &b, &mut rng).unwrap();
            bit_flip_mutation(&c, 0.1, &mut rng).unwrap()
        };
        prop_assert_eq!(run(seed), run(seed));
    }

    #[test]
    fn tournament_winner_not_worse_than_sample(
        fits in proptest::collection::vec(0.0f64..10.0, 1..50),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let g = Genome::zeros(1).unwrap();
        let pop: Vec<Individual> = fits.iter().map(|&f| Individual::evaluated(g.clone(), f)).collect();
        // Replay the same draws to recover the sampled candidates.
        let mut replay = RngStream::new(seed);
        let sampled: Vec<usize> = (0..k).map(|_| sample_index(&mut replay, pop.len())).collect();
        let winner = tournament_select(&pop, k, &mut RngStream::new(seed)).unwrap();
        prop_assert!(sampled.contains(&winner));
        let best = sampled.iter().map(|&i| fits[i]).fold(f64::MIN, f64::max);
        prop_assert_eq!(fits[winner], best);
        let lowest_best = sampled.iter().copied().filter(|&i| fits[i] == best).min().unwrap();
        prop_assert_eq!(winner, lowest_best);
    }

    #[test]
    fn ppeaks_matches_oracle_and_bounds(
        p in 1usize..8, n in 1usize..80, seed in any::<u64>(), gseed in any::<u64>()
    ) {
        let inst = PPeaksInstance::new(p, n, seed).unwrap();
        let g = random_genome(n, &mut RngStream::new(gseed)).unwrap();
        let f = inst.evaluate(&g).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - ppeaks_oracle(inst.peaks(), &g)).abs() <= 1e-12);
    }

    #[test]
    fn mmdp_bounds_and_symmetries(k in 1usize..25, seed in any::<u64>(), flip in any::<u64>(), swap in any::<(usize, usize)>()) {
        let inst = MmdpInstance::new(k).unwrap();
        let g = random_genome(6 * k, &mut RngStream::new(seed)).unwrap();
        let f = inst.evaluate(&g).unwrap();
        prop_assert!(f >= 0.0 && f <= k as f64);
        prop_assert!((f - mmdp_oracle(&g)).abs() <= 1e-12);

        // Complementing any subset of blocks leaves fitness unchanged.
        let mut h = g.clone();
        for block in 0..k {
            if (flip >> (block % 64)) & 1 == 1 {
                for i in 6 * block..6 * block + 6 {
                    h.flip(i);
                }
            }
        }
        prop_assert!((inst.evaluate(&h).unwrap() - f).abs() <= 1e-12);

        // Swapping two whole blocks leaves fitness unchanged.
        let (x, y) = (swap.0 % k, swap.1 % k);
        let mut s = g.clone();
        for i in 0..6 {
            s.set(6 * x + i, g.get(6 * y + i));
            s.set(6 * y + i, g.get(6 * x + i));
        }
        prop_assert!((inst.evaluate(&s).unwrap() - f).abs() <= 1e-12);
    }

    #[test]
    fn pool_records_round_trip(
        node in "[A-Za-z0-9_]{1,16}",
        seq in any::<u64>(),
        fitness in 0.0f64..1e6,
        ts in any::<u64>(),
        genome in genome_strategy(1..150),
        random in any::<bool>(),
    ) {
        let e = PoolEntry {
            node_id: node,
            sequence: seq,
            kind: if random { EntryKind::Random } else { EntryKind::Best },
            genome,
            fitness,
            timestamp_ms: ts,
        };
        let text = e.encode();
        prop_assert_eq!(text.matches('\n').count(), 1);
        prop_assert_eq!(PoolEntry::decode(text.as_bytes()).unwrap(), e);
    }

    #[test]
    fn receive_never_returns_own_entries(
        entries in proptest::collection::vec((0usize..4, 0.0f64..1.0, 0u64..100), 0..40),
        me in 0usize..4,
    ) {
        let nodes = ["n0", "n1", "n2", "n3"];
        let store = Mem::default();
        let mut seqs = [0u64; 4];
        for (node, fitness, ts) in &entries {
            let e = PoolEntry {
                node_id: nodes[*node].into(),
                sequence: seqs[*node],
                kind: EntryKind::Best,
                genome: Genome::zeros(6).unwrap(),
                fitness: *fitness,
                timestamp_ms: *ts,
            };
            seqs[*node] += 1;
            store.put(&e.object_name(), e.encode().as_bytes()).unwrap();
        }
        let mut client = PoolClient::new(&store, nodes[me]).unwrap();
        let got = client.receive_migrant().unwrap();
        let foreign: Vec<_> = entries.iter().filter(|(n, _, _)| *n != me).collect();
        match got {
            None => prop_assert!(foreign.is_empty()),
            Some(e) => {
                prop_assert_ne!(e.node_id.as_str(), nodes[me]);
                let best = foreign.iter().map(|(_, f, _)| *f).fold(f64::MIN, f64::max);
                prop_assert_eq!(e.fitness, best);
            }
        }
    }
}

#[derive(Default)]
struct Mem(RefCell<BTreeMap<String, Vec<u8>>>);

impl SharedStore for Mem {
    fn put(&self, name: &str, payload: &[u8]) -> Result<(), StoreError> {
        check_put(name, payload)?;
        let mut map = self.0.borrow_mut();
        if map.contains_key(name) {
            return Err(StoreError::Conflict(name.into()));
        }
        map.insert(name.into(), payload.to_vec());
        Ok(())
    }
    fn list(&self, prefix: &str) -> Result<Vec<String>, StoreError> {
        Ok(self
            .0
            .borrow()
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect())
    }
    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        self.0
            .borrow()
            .get(name)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(name.into()))
    }
}

#[test]
fn ppeaks_optimum_iff_peak_exhaustive() {
    for (p, n, seed) in [(1, 4, 1), (3, 8, 2), (8, 12, 3), (5, 10, 4), (8, 11, 5)] {
        let inst = PPeaksInstance::new(p, n, seed).unwrap();
        for v in 0u32..(1 << n) {
            let g =
                Genome::from_bits(&(0..n).map(|i| (v >> i) & 1 == 1).collect::<Vec<_>>()).unwrap();
            let f = inst.evaluate(&g).unwrap();
            assert_eq!(f == 1.0, inst.peaks().contains(&g), "P={p} N={n} v={v:b}");
            assert!((f - ppeaks_oracle(inst.peaks(), &g)).abs() <= 1e-12);
        }
    }
}

#[test]
fn mutation_flip_counts_follow_binomial() {
    // Chi-square over 2000 mutations of a 100-bit genome at rate 0.05,
    // bins {<=2, 3, 4, 5, 6, 7, >=8} against Binomial(100, 0.05).
    let n = 100u64;
    let p = 0.05f64;
    let pmf = |k: u64| {
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    };
    let mut expected = [0.0f64; 7];
    for k in 0..=n {
        let bin = (k.clamp(2, 8) - 2) as usize;
        expected[bin] += pmf(k);
    }
    let trials = 2000;
    let mut observed = [0u64; 7];
    let g = Genome::zeros(n as usize).unwrap();
    let mut rng = RngStream::new(31337);
    for _ in 0..trials {
        let flips = bit_flip_mutation(&g, p, &mut rng).unwrap().count_ones() as u64;
        observed[(flips.clamp(2, 8) - 2) as usize] += 1;
    }
    let chi2: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, e)| {
            let e = e * trials as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    // 6 degrees of freedom, 99.9th percentile = 22.46.
    assert!(chi2 < 22.46, "chi2 = {chi2}, observed {observed:?}");
}

#[test]
fn rng_stream_is_stable() {
    // Frozen first outputs; a change here breaks reproducibility of stored runs.
    let mut rng = RngStream::new(42);
    let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
    assert_eq!(
        first,
        [0xd7bd76ef198efc5a, 0x29e5411dd6c99517, 0x72363c73027b046e]
    );
    let mut other = RngStream::with_stream(42, 1);
    assert_ne!(other.next_u64(), first[0]);
}
