//! Synthetic Chinese-like corpus: a word-level Markov chain over words of
//! one to three CJK characters, so masked tokens are predictable from
//! context and whole-word segmentation has a lexicon to work with.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SyntheticCorpus {
    pub words: Vec<String>,
    successors: Vec<[usize; 4]>,
    weights: [f64; 4],
}

const SUCCESSOR_WEIGHTS: [f64; 4] = [0.55, 0.25, 0.15, 0.05];

impl SyntheticCorpus {
    pub fn new(chars: usize, words: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet: Vec<char> = (0..chars as u32).map(|i| char::from_u32(0x4E00 + i).unwrap()).collect();
        let mut seen = std::collections::BTreeSet::new();
        let mut list = Vec::with_capacity(words);
        while list.len() < words {
            let len = rng.gen_range(1..=3);
            let w: String = (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
            if seen.insert(w.clone()) {
                list.push(w);
            }
        }
        let successors = (0..words)
            .map(|_| [0; 4].map(|_| rng.gen_range(0..words)))
            .collect();
        SyntheticCorpus { words: list, successors, weights: SUCCESSOR_WEIGHTS }
    }

    pub fn with_weights(mut self, w: [f64; 4]) -> Self {
        self.weights = w;
        self
    }

    fn next(&self, w: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, p) in self.weights.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.successors[w][k];
            }
        }
        self.successors[w][3]
    }

    /// One document per line; sentences end with `。`.
    pub fn generate(&self, bytes: usize, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = String::with_capacity(bytes + 1024);
        while out.len() < bytes {
            for _ in 0..rng.gen_range(3..9) {
                let mut w = rng.gen_range(0..self.words.len());
                for _ in 0..rng.gen_range(8..20) {
                    out.push_str(&self.words[w]);
                    w = self.next(w, &mut rng);
                }
                out.push('。');
            }
            out.push('\n');
        }
        out
    }

    pub fn write_lexicon(&self, path: &Path) {
        let mut s = String::new();
        for w in &self.words {
            writeln!(s, "{w}").unwrap();
        }
        std::fs::write(path, s).unwrap();
    }
}
