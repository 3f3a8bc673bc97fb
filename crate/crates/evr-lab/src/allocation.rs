//! Executable data-allocation procedures: uniform splitting into residue
//! classes, seeded egalitarian subsampling, and realized-overlap
//! accounting with the correlation bound ω_ij/√(r_i r_j).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deterministic stream derivation for reproducible draws.
///
/// Every random draw in this crate is a pure function of a 64-bit master
/// seed and an integer path (study id, replication index, purpose tag).
/// Seeds are combined with the SplitMix64 finalizer, then expanded into a
/// ChaCha8 stream, so draws are identical across platforms, processes,
/// and worker counts.
pub mod seeding {
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    /// SplitMix64 finalizer.
    pub fn mix64(mut z: u64) -> u64 {
        z ^= z >> 30;
        z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z ^= z >> 27;
        z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        z
    }

    /// Derives a stream seed from a master seed and an integer path.
    /// Order-sensitive: `[a, b]` and `[b, a]` yield unrelated streams.
    pub fn stream_seed(master: u64, path: &[u64]) -> u64 {
        let mut state = mix64(master ^ GOLDEN);
        for &part in path {
            state = mix64(state.wrapping_add(GOLDEN) ^ mix64(part.wrapping_add(GOLDEN)));
        }
        state
    }

    /// ChaCha8 generator on the derived stream.
    pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(stream_seed(master, path))
    }
}

/// Errors from allocation procedures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    /// More studies than observations.
    #[error("cannot split {n_total} observations into {num_studies} non-empty blocks")]
    SplitInfeasible { n_total: usize, num_studies: usize },
    /// Requested subsample larger than the population.
    #[error("subsample of {n_sub} exceeds population {n_total}")]
    DrawInfeasible { n_total: usize, n_sub: usize },
    /// Index materialization only supports populations addressable by u32.
    #[error("population {n_total} too large for index materialization")]
    PopulationTooLarge { n_total: usize },
    /// An observation index at or beyond the population size.
    #[error("index {index} out of range for population {n_total}")]
    IndexOutOfRange { index: u32, n_total: usize },
    /// The same observation listed twice in one study.
    #[error("duplicate index {index} in study {study}")]
    DuplicateIndex { index: u32, study: usize },
    /// Malformed newline-delimited index text.
    #[error("line {line}: cannot parse {token:?} as an index")]
    ParseIndex { line: usize, token: String },
}

/// Layout of a deterministic partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStyle {
    /// Block i holds the indices congruent to i modulo C (the canonical rule).
    Residue,
    /// Block i holds a contiguous run; matches worked-example layouts.
    Contiguous,
}

/// A partition of {0, …, N−1} into C pairwise disjoint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    n_total: usize,
    num_studies: usize,
    style: SplitStyle,
    assignment: Vec<Vec<u32>>,
}

impl SplitPlan {
    /// Population size N.
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Number of blocks C.
    pub fn num_studies(&self) -> usize {
        self.num_studies
    }

    /// Partition layout.
    pub fn style(&self) -> SplitStyle {
        self.style
    }

    /// Sorted observation indices of block `study`.
    pub fn block(&self, study: usize) -> &[u32] {
        &self.assignment[study]
    }

    /// All blocks, in study order.
    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.assignment
    }

    /// Block sizes as fractions of N.
    pub fn rates(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .map(|b| b.len() as f64 / self.n_total as f64)
            .collect()
    }
}

/// Residue-class split of N observations into C blocks.
///
/// When C does not divide N the leftover observations land in the
/// lowest-index blocks, so block sizes differ by at most one.
pub fn split_uniform(n_total: usize, num_studies: usize) -> Result<SplitPlan, AllocError> {
    split_uniform_styled(n_total, num_studies, SplitStyle::Residue)
}

/// Split with an explicit layout choice.
pub fn split_uniform_styled(
    n_total: usize,
    num_studies: usize,
    style: SplitStyle,
) -> Result<SplitPlan, AllocError> {
    if num_studies == 0 || num_studies > n_total {
        return Err(AllocError::SplitInfeasible { n_total, num_studies });
    }
    if n_total > u32::MAX as usize {
        return Err(AllocError::PopulationTooLarge { n_total });
    }
    let mut assignment = vec![Vec::new(); num_studies];
    match style {
        SplitStyle::Residue => {
            for block in assignment.iter_mut() {
                block.reserve(n_total / num_studies + 1);
            }
            for idx in 0..n_total {
                assignment[idx % num_studies].push(idx as u32);
            }
        }
        SplitStyle::Contiguous => {
            let base = n_total / num_studies;
            let extra = n_total % num_studies;
            let mut start = 0usize;
            for (i, block) in assignment.iter_mut().enumerate() {
                let len = base + usize::from(i < extra);
                block.extend((start..start + len).map(|v| v as u32));
                start += len;
            }
        }
    }
    Ok(SplitPlan { n_total, num_studies, style, assignment })
}

/// One study's realized subsample, with full seed provenance.
///
/// Regenerating with the same `(n_total, n_sub, seed, study_id)` yields an
/// identical index list; this is what makes a published seed verifiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    /// Population size N.
    pub n_total: usize,
    /// Subsample size n.
    pub n_sub: usize,
    /// Master seed the draw was derived from.
    pub seed: u64,
    /// Study identifier mixed into the stream.
    pub study_id: u64,
    /// Sorted, distinct observation indices.
    pub indices: Vec<u32>,
}

impl SubsampleDraw {
    /// Newline-delimited decimal rendering of the index list.
    pub fn indices_text(&self) -> String {
        let mut out = String::with_capacity(self.indices.len() * 7);
        for idx in &self.indices {
            out.push_str(&idx.to_string());
            out.push('\n');
        }
        out
    }
}

/// Parses a newline-delimited decimal index list.
pub fn parse_indices_text(text: &str) -> Result<Vec<u32>, AllocError> {
    let mut indices = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let idx: u32 = token.parse().map_err(|_| AllocError::ParseIndex {
            line: line_no,
            token: token.to_string(),
        })?;
        indices.push(idx);
    }
    Ok(indices)
}

// Floyd's algorithm stays O(n_sub) in memory for sparse draws; the partial
// Fisher-Yates pass is faster once the subsample is a sizable fraction of
// the population (and its O(N) scratch is then at most 64x the output).
const DENSE_CUTOVER: usize = 64;

/// Uniform without-replacement sample of `n_sub` indices from {0, …, N−1},
/// deterministic in `(n_total, n_sub, seed, study_id)`.
pub fn egalitarian_draw(
    n_total: usize,
    n_sub: usize,
    seed: u64,
    study_id: u64,
) -> Result<SubsampleDraw, AllocError> {
    if n_sub > n_total {
        return Err(AllocError::DrawInfeasible { n_total, n_sub });
    }
    if n_total > u32::MAX as usize {
        return Err(AllocError::PopulationTooLarge { n_total });
    }
    let mut rng = seeding::stream_rng(seed, &[study_id]);
    let mut indices = sample_without_replacement(&mut rng, n_total as u32, n_sub);
    indices.sort_unstable();
    Ok(SubsampleDraw { n_total, n_sub, seed, study_id, indices })
}

/// Unsorted uniform sample of `n_sub` distinct values from 0..n_total.
pub(crate) fn sample_without_replacement(
    rng: &mut impl rand::Rng,
    n_total: u32,
    n_sub: usize,
) -> Vec<u32> {
    if n_sub == 0 {
        return Vec::new();
    }
    if n_sub.saturating_mul(DENSE_CUTOVER) > n_total as usize {
        // Partial Fisher-Yates over a scratch index array.
        let mut pool: Vec<u32> = (0..n_total).collect();
        for i in 0..n_sub {
            let j = rng.random_range(i as u32..n_total);
            pool.swap(i, j as usize);
        }
        pool.truncate(n_sub);
        pool
    } else {
        // Floyd's algorithm.
        let mut chosen: HashSet<u32> = HashSet::with_capacity(n_sub * 2);
        let mut out = Vec::with_capacity(n_sub);
        for j in (n_total - n_sub as u32)..n_total {
            let t = rng.random_range(0..=j);
            if chosen.insert(t) {
                out.push(t);
            } else {
                chosen.insert(j);
                out.push(j);
            }
        }
        out
    }
}

/// Pairwise overlap fractions and the induced correlation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    num_sets: usize,
    omega: Vec<f64>,
    rates: Vec<f64>,
    corr_bound: Vec<f64>,
}

impl OverlapMatrix {
    /// Number of studies C.
    pub fn num_sets(&self) -> usize {
        self.num_sets
    }

    /// ω_ij = |D_i ∩ D_j| / N (so ω_ii = r_i).
    pub fn omega(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.num_sets + j]
    }

    /// r_i = |D_i| / N.
    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    /// All rates.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// ω_ij / √(r_i r_j): the upper bound on the statistic correlation.
    pub fn corr_bound(&self, i: usize, j: usize) -> f64 {
        self.corr_bound[i * self.num_sets + j]
    }

    /// Row-major correlation-bound entries.
    pub fn corr_bound_entries(&self) -> &[f64] {
        &self.corr_bound
    }
}

/// Exact overlap accounting for a family of index sets.
pub fn overlap_stats(sets: &[Vec<u32>], n_total: usize) -> Result<OverlapMatrix, AllocError> {
    let num_sets = sets.len();
    let mut sorted: Vec<Vec<u32>> = Vec::with_capacity(num_sets);
    for (study, set) in sets.iter().enumerate() {
        let mut copy = set.clone();
        copy.sort_unstable();
        for pair in copy.windows(2) {
            if pair[0] == pair[1] {
                return Err(AllocError::DuplicateIndex { index: pair[0], study });
            }
        }
        if let Some(&max) = copy.last() {
            if max as usize >= n_total {
                return Err(AllocError::IndexOutOfRange { index: max, n_total });
            }
        }
        sorted.push(copy);
    }
    let n = n_total as f64;
    let rates: Vec<f64> = sorted.iter().map(|s| s.len() as f64 / n).collect();
    let mut omega = vec![0.0; num_sets * num_sets];
    let mut corr_bound = vec![0.0; num_sets * num_sets];
    for i in 0..num_sets {
        omega[i * num_sets + i] = rates[i];
        corr_bound[i * num_sets + i] = 1.0;
        for j in (i + 1)..num_sets {
            let shared = sorted_intersection_size(&sorted[i], &sorted[j]) as f64 / n;
            omega[i * num_sets + j] = shared;
            omega[j * num_sets + i] = shared;
            let denom = (rates[i] * rates[j]).sqrt();
            let bound = if denom > 0.0 { shared / denom } else { 0.0 };
            corr_bound[i * num_sets + j] = bound;
            corr_bound[j * num_sets + i] = bound;
        }
    }
    Ok(OverlapMatrix { num_sets, omega, rates, corr_bound })
}

pub(crate) fn sorted_intersection_size(a: &[u32], b: &[u32]) -> usize {
    let mut count = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Maximin asymptotic relative efficiency realized by an allocation:
/// the smallest per-study data fraction. A C-block partition attains 1/C.
pub fn splitting_are(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    rates.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0)
}
