//! Mixing bitext with synthetic (back-translated) pairs at a fixed ratio.
//!
//! The relatively smaller side is upsampled: whole copies of the corpus,
//! then a seeded sample without replacement for the remainder. The combined
//! corpus is shuffled with the same generator.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{Sentence, SentencePair};
use crate::error::{Error, Result};

/// Generator used for every seeded draw in this crate.
pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng::seed_from_u64";

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `synthetic:bitext`, counted in sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MixRatio {
    pub synthetic: u64,
    pub bitext: u64,
}

impl Default for MixRatio {
    fn default() -> Self {
        MixRatio {
            synthetic: 1,
            bitext: 1,
        }
    }
}

impl std::str::FromStr for MixRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("ratio must look like 1:1 with both parts >= 1, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let synthetic: u64 = a.trim().parse().map_err(|_| bad())?;
        let bitext: u64 = b.trim().parse().map_err(|_| bad())?;
        if synthetic == 0 || bitext == 0 {
            return Err(bad());
        }
        Ok(MixRatio { synthetic, bitext })
    }
}

impl TryFrom<String> for MixRatio {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MixRatio> for String {
    fn from(r: MixRatio) -> String {
        r.to_string()
    }
}

impl std::fmt::Display for MixRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.synthetic, self.bitext)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub ratio: MixRatio,
    pub seed: u64,
    pub shuffle: bool,
    /// Prefix added to the source side of synthetic pairs.
    pub mark_synthetic: Option<String>,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            ratio: MixRatio::default(),
            seed: 17,
            shuffle: true,
            mark_synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub schema_version: u32,
    pub ratio: MixRatio,
    pub seed: u64,
    pub generator: String,
    pub shuffle: bool,
    pub bitext_input: u64,
    pub synthetic_input: u64,
    pub bitext_output: u64,
    pub synthetic_output: u64,
    /// synthetic_output / bitext_output, when both are non-zero.
    pub achieved_ratio: Option<f64>,
    pub degenerate: Option<String>,
}

/// Output sizes `(synthetic, bitext)` for the given input sizes.
pub fn target_counts(synthetic: u64, bitext: u64, ratio: MixRatio) -> (u64, u64) {
    if synthetic == 0 || bitext == 0 {
        return (synthetic, bitext);
    }
    let (s, b) = (ratio.synthetic as u128, ratio.bitext as u128);
    let (sy, bi) = (synthetic as u128, bitext as u128);
    // round(x / d) = (2x + d) / 2d
    if sy * b >= bi * s {
        (synthetic, ((2 * sy * b + s) / (2 * s)) as u64)
    } else {
        (((2 * bi * s + b) / (2 * b)) as u64, bitext)
    }
}

/// Indices of `n` items upsampled to `target`: whole repetitions followed by
/// a sorted sample without replacement.
fn upsample_indices(n: usize, target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(target);
    for _ in 0..target / n {
        out.extend(0..n);
    }
    let mut rest = index::sample(rng, n, target % n).into_vec();
    rest.sort_unstable();
    out.extend(rest);
    out
}

pub fn mix(
    bitext: &[SentencePair],
    synthetic: &[SentencePair],
    cfg: &MixConfig,
) -> Result<(Vec<SentencePair>, MixReport)> {
    if bitext.is_empty() && synthetic.is_empty() {
        return Err(Error::Config("both bitext and synthetic inputs are empty".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let (syn_out, bi_out) = target_counts(synthetic.len() as u64, bitext.len() as u64, cfg.ratio);

    let syn_idx = if synthetic.is_empty() {
        Vec::new()
    } else {
        upsample_indices(synthetic.len(), syn_out as usize, &mut rng)
    };
    let bi_idx = if bitext.is_empty() {
        Vec::new()
    } else {
        upsample_indices(bitext.len(), bi_out as usize, &mut rng)
    };

    let mark = |p: &SentencePair| -> Result<SentencePair> {
        let mut p = p.clone();
        if let Some(tag) = &cfg.mark_synthetic {
            p.source = Sentence::new(format!("{tag} {}", p.source.text()))?;
        }
        Ok(p)
    };
    let mut out: Vec<SentencePair> = Vec::with_capacity(syn_idx.len() + bi_idx.len());
    for i in syn_idx {
        out.push(mark(&synthetic[i])?);
    }
    out.extend(bi_idx.into_iter().map(|i| bitext[i].clone()));
    if cfg.shuffle {
        out.shuffle(&mut rng);
    }
    for (i, p) in out.iter_mut().enumerate() {
        p.line_index = i;
    }

    let degenerate = if synthetic.is_empty() {
        Some("synthetic input is empty; output is the bitext".to_string())
    } else if bitext.is_empty() {
        Some("bitext input is empty; output is the synthetic data".to_string())
    } else {
        None
    };
    let report = MixReport {
        schema_version: crate::REPORT_SCHEMA_VERSION,
        ratio: cfg.ratio,
        seed: cfg.seed,
        generator: GENERATOR.to_string(),
        shuffle: cfg.shuffle,
        bitext_input: bitext.len() as u64,
        synthetic_input: synthetic.len() as u64,
        bitext_output: bi_out,
        synthetic_output: syn_out,
        achieved_ratio: (bi_out > 0 && syn_out > 0).then(|| syn_out as f64 / bi_out as f64),
        degenerate,
    };
    Ok((out, report))
}
