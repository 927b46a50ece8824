//! Seeded generation of planted corpora.
//!
//! Constituents are ordered by descending start entropy. Because every
//! constituent's entropy is non-increasing along its positions and all of
//! them end at the same entropy level, the boundary shifts then form a
//! non-increasing sequence and the largest shift of any fully masked
//! remainder sits at its nearest planted boundary.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::entropy_of;
use crate::error::{Error, Result};
use crate::state::TokenId;

use super::backend::SynthBackend;
use super::spec::{Constituent, PlantedCorpusSpec, Realization, MAX_BRANCHES, MAX_GEN_LEN};

/// Largest branch count of a branching constituent in the standard style;
/// its minority group splits 15 weight units one way or more.
pub const MAX_STANDARD_BRANCHES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum CorpusStyle {
    /// Uniform realizations that differ only in their first token.
    Planted,
    /// A mix of branching, trap and hedged constituents that all end at the
    /// same entropy; see the README for their construction.
    Standard { trap_rate: f64, hedged_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub gen_len: usize,
    pub vocab_size: u32,
    pub min_len: usize,
    pub max_len: usize,
    pub min_branches: usize,
    pub max_branches: usize,
    pub style: CorpusStyle,
    pub seed: u64,
}

impl GenerateParams {
    pub fn planted(seed: u64) -> Self {
        Self {
            gen_len: 512,
            vocab_size: 64,
            min_len: 3,
            max_len: 12,
            min_branches: 4,
            max_branches: 16,
            style: CorpusStyle::Planted,
            seed,
        }
    }

    pub fn standard(seed: u64) -> Self {
        Self {
            gen_len: 512,
            vocab_size: 64,
            min_len: 10,
            max_len: 20,
            min_branches: 3,
            max_branches: 6,
            style: CorpusStyle::Standard { trap_rate: 0.3, hedged_rate: 0.3 },
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Uniform,
    Branching,
    Trap,
    Hedged,
}

pub fn generate_spec(params: &GenerateParams) -> Result<PlantedCorpusSpec> {
    check(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lengths = tile_lengths(&mut rng, params.gen_len, params.min_len, params.max_len)?;
    let content = params.vocab_size as usize - 1;

    let mut constituents = Vec::with_capacity(lengths.len());
    for len in lengths {
        let kind = match params.style {
            CorpusStyle::Planted => Kind::Uniform,
            CorpusStyle::Standard { trap_rate, hedged_rate } => {
                let u: f64 = rng.gen();
                if u < trap_rate {
                    Kind::Trap
                } else if u < trap_rate + hedged_rate && len >= 3 {
                    Kind::Hedged
                } else {
                    Kind::Branching
                }
            }
        };
        let c = match kind {
            Kind::Uniform => {
                let b = rng.gen_range(params.min_branches..=params.max_branches);
                uniform(&mut rng, content, len, b)
            }
            Kind::Branching => {
                let b = rng.gen_range(params.min_branches.max(3)..=params.max_branches);
                branching(&mut rng, content, len, b)
            }
            Kind::Trap => trap(&mut rng, content, len),
            Kind::Hedged => hedged(&mut rng, content, len),
        };
        constituents.push(c);
    }

    let spec = PlantedCorpusSpec {
        vocab_size: params.vocab_size,
        mask_id: 0,
        prompt: vec![1],
        seed: params.seed,
        constituents,
    };
    let spec = sort_by_start_entropy(spec)?;
    spec.validate()?;
    Ok(spec)
}

fn check(p: &GenerateParams) -> Result<()> {
    if p.gen_len == 0 || p.gen_len > MAX_GEN_LEN {
        return Err(Error::config(format!("gen_len {} outside 1..={MAX_GEN_LEN}", p.gen_len)));
    }
    if p.min_len == 0 || p.min_len > p.max_len {
        return Err(Error::config(format!("length range {}..={} is empty", p.min_len, p.max_len)));
    }
    if p.min_branches == 0 || p.min_branches > p.max_branches || p.max_branches > MAX_BRANCHES {
        return Err(Error::config(format!(
            "branch range {}..={} must be non-empty within 1..={MAX_BRANCHES}",
            p.min_branches, p.max_branches
        )));
    }
    let widest = match p.style {
        CorpusStyle::Planted => p.max_branches,
        CorpusStyle::Standard { trap_rate, hedged_rate } => {
            if !(trap_rate >= 0.0 && hedged_rate >= 0.0 && trap_rate + hedged_rate <= 1.0) {
                return Err(Error::config("trap and hedged rates must be non-negative and sum to at most 1"));
            }
            if p.min_len < 2 {
                return Err(Error::config("standard constituents need length >= 2"));
            }
            if p.max_branches < 3 || p.max_branches > MAX_STANDARD_BRANCHES {
                return Err(Error::config(format!(
                    "standard branch range must reach 3 and stay within {MAX_STANDARD_BRANCHES}"
                )));
            }
            p.max_branches.max(4)
        }
    };
    if (p.vocab_size as usize) < widest + 2 {
        return Err(Error::config(format!(
            "vocab size {} too small for {widest} distinct tokens per position",
            p.vocab_size
        )));
    }
    if !feasible(p.gen_len, p.min_len, p.max_len) {
        return Err(Error::config(format!("{} cannot be tiled with lengths {}..={}", p.gen_len, p.min_len, p.max_len)));
    }
    Ok(())
}

/// Whether `total` is a sum of lengths in `min..=max`.
fn feasible(total: usize, min: usize, max: usize) -> bool {
    total == 0 || total.div_ceil(max) <= total / min
}

/// Random lengths in `min..=max` summing to `total` exactly.
fn tile_lengths<R: Rng>(rng: &mut R, total: usize, min: usize, max: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let options: Vec<usize> = (min..=max.min(left)).filter(|&l| feasible(left - l, min, max)).collect();
        if options.is_empty() {
            return Err(Error::config(format!("cannot tile {left} with lengths {min}..={max}")));
        }
        let l = options[rng.gen_range(0..options.len())];
        out.push(l);
        left -= l;
    }
    Ok(out)
}

/// `n` distinct content tokens (ids `1..=content`).
fn distinct<R: Rng>(rng: &mut R, content: usize, n: usize) -> Vec<TokenId> {
    sample(rng, content, n).into_iter().map(|i| i as TokenId + 1).collect()
}

fn uniform<R: Rng>(rng: &mut R, content: usize, len: usize, b: usize) -> Constituent {
    let firsts = distinct(rng, content, b);
    let interior: Vec<TokenId> = (1..len).map(|_| distinct(rng, content, 1)[0]).collect();
    Constituent {
        realizations: firsts
            .into_iter()
            .map(|f| {
                let mut tokens = vec![f];
                tokens.extend_from_slice(&interior);
                Realization { tokens, weight: 1 }
            })
            .collect(),
    }
}

/// Distinct tokens per realization everywhere but the last position, where
/// the likeliest two (60 + 25) share one token against the rest (15).
fn branching<R: Rng>(rng: &mut R, content: usize, len: usize, b: usize) -> Constituent {
    let minority = b - 2;
    let mut weights = vec![60, 25];
    weights.extend((0..minority).map(|i| (15 / minority + usize::from(i < 15 % minority)) as u64));
    let mut tokens = vec![Vec::with_capacity(len); b];
    for _ in 0..len - 1 {
        for (r, t) in distinct(rng, content, b).into_iter().enumerate() {
            tokens[r].push(t);
        }
    }
    let last = distinct(rng, content, 2);
    for (r, seq) in tokens.iter_mut().enumerate() {
        seq.push(if r < 2 { last[0] } else { last[1] });
    }
    Constituent {
        realizations: tokens.into_iter().zip(weights).map(|(tokens, weight)| Realization { tokens, weight }).collect(),
    }
}

/// Three realizations weighted 46 / 39 / 15. The last position favors the
/// first two, every earlier position favors the last two; committing an
/// earlier position first therefore loses the most likely realization.
fn trap<R: Rng>(rng: &mut R, content: usize, len: usize) -> Constituent {
    let mut r1 = Vec::with_capacity(len);
    let mut r23 = Vec::with_capacity(len);
    for _ in 0..len - 1 {
        let t = distinct(rng, content, 2);
        r1.push(t[0]);
        r23.push(t[1]);
    }
    let last = distinct(rng, content, 2);
    let mut r2 = r23.clone();
    let mut r3 = r23;
    r1.push(last[0]);
    r2.push(last[0]);
    r3.push(last[1]);
    Constituent {
        realizations: vec![
            Realization { tokens: r1, weight: 46 },
            Realization { tokens: r2, weight: 39 },
            Realization { tokens: r3, weight: 15 },
        ],
    }
}

/// A 55-weight realization and three 15-weight decoys. All decoys disagree
/// with it on a leading segment, two on a middle segment, one on the tail.
fn hedged<R: Rng>(rng: &mut R, content: usize, len: usize) -> Constituent {
    // segment lengths n3, n2, n1 >= 1
    let cut1 = rng.gen_range(1..len - 1);
    let cut2 = rng.gen_range(cut1 + 1..len);
    let mut seqs: Vec<Vec<TokenId>> = (0..4).map(|_| Vec::with_capacity(len)).collect();
    for j in 0..len {
        let disagree = if j < cut1 {
            3
        } else if j < cut2 {
            2
        } else {
            1
        };
        let t = distinct(rng, content, 1 + disagree);
        seqs[0].push(t[0]);
        for d in 1..=3 {
            // decoy d disagrees once the segment admits it
            let own = d > 3 - disagree;
            seqs[d].push(if own { t[d - (3 - disagree)] } else { t[0] });
        }
    }
    let weights = [55, 15, 15, 15];
    Constituent {
        realizations: seqs.into_iter().zip(weights).map(|(tokens, weight)| Realization { tokens, weight }).collect(),
    }
}

fn sort_by_start_entropy(mut spec: PlantedCorpusSpec) -> Result<PlantedCorpusSpec> {
    let model = SynthBackend::new(spec.clone())?;
    let starts: Vec<f64> = spec.offsets().iter().map(|&o| entropy_of(&model.prior_marginal(o))).collect();
    let mut order: Vec<usize> = (0..spec.constituents.len()).collect();
    order.sort_by(|&a, &b| starts[b].total_cmp(&starts[a]));
    let mut taken: Vec<Option<Constituent>> = spec.constituents.drain(..).map(Some).collect();
    spec.constituents = order.into_iter().map(|i| taken[i].take().expect("each index once")).collect();
    Ok(spec)
}
