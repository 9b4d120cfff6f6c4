use std::collections::HashMap;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest feature count for which all `2^d` coalitions are enumerated.
pub const EXACT_LIMIT: usize = 20;

/// A subset of feature indices, stored as a bitset of length `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    dim: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            words: vec![0; dim.div_ceil(64)],
        }
    }

    pub fn full(dim: usize) -> Self {
        let mut c = Self::empty(dim);
        for i in 0..dim {
            c.insert(i);
        }
        c
    }

    /// Coalition whose bit `i` is bit `i` of `mask`.
    pub fn from_mask(dim: usize, mask: u64) -> Self {
        assert!(
            dim >= 64 || mask >> dim == 0,
            "mask {mask:#x} has bits beyond {dim} features"
        );
        let mut c = Self::empty(dim);
        if dim > 0 {
            c.words[0] = mask;
        }
        c
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::empty(dim);
        for i in indices {
            c.insert(i);
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.dim);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.dim, "feature {i} out of range for {} features", self.dim);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn size(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.size() == self.dim
    }

    pub fn complement(&self) -> Self {
        let mut c = Self::empty(self.dim);
        for i in (0..self.dim).filter(|&i| !self.contains(i)) {
            c.insert(i);
        }
        c
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).filter(|&i| self.contains(i))
    }
}

/// Shapley-kernel weight; the empty and grand coalitions get an infinite
/// weight and are handled as constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWeight {
    Finite(f64),
    Infinite,
}

impl KernelWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelWeight::Finite(w) => Some(w),
            KernelWeight::Infinite => None,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(M - 1) / (C(M, s) * s * (M - s))`.
pub fn shapley_kernel_weight(m: usize, s: usize) -> KernelWeight {
    assert!(
        m >= 2 && s <= m,
        "kernel weight needs M >= 2 and s <= M (M = {m}, s = {s})"
    );
    if s == 0 || s == m {
        return KernelWeight::Infinite;
    }
    KernelWeight::Finite((m - 1) as f64 / (binomial(m, s).round() * s as f64 * (m - s) as f64))
}

/// Total kernel weight of all coalitions of size `s`.
fn size_mass(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (s as f64 * (m - s) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCoalition {
    pub coalition: Coalition,
    pub weight: KernelWeight,
}

/// All `2^d` coalitions in ascending mask order.
pub fn enumerate_coalitions(d: usize) -> Result<Vec<Coalition>> {
    if d > EXACT_LIMIT {
        return Err(Error::TooManyFeatures {
            features: d,
            limit: EXACT_LIMIT,
        });
    }
    Ok((0..1u64 << d).map(|mask| Coalition::from_mask(d, mask)).collect())
}

/// Exact-mode coalitions with their kernel weights.
pub fn enumerate_weighted(d: usize) -> Result<Vec<WeightedCoalition>> {
    Ok(enumerate_coalitions(d)?
        .into_iter()
        .map(|coalition| {
            let weight = shapley_kernel_weight(d, coalition.size());
            WeightedCoalition { coalition, weight }
        })
        .collect())
}

/// Accumulates weights of repeated coalitions while keeping first-seen order.
#[derive(Default)]
struct Accumulator {
    index: HashMap<Coalition, usize>,
    items: Vec<WeightedCoalition>,
}

impl Accumulator {
    fn add(&mut self, coalition: Coalition, weight: KernelWeight) {
        if let Some(&i) = self.index.get(&coalition) {
            if let (KernelWeight::Finite(acc), KernelWeight::Finite(w)) = (&mut self.items[i].weight, weight) {
                *acc += w;
            }
            return;
        }
        self.index.insert(coalition.clone(), self.items.len());
        self.items.push(WeightedCoalition { coalition, weight });
    }
}

/// Draws roughly `budget` coalitions for `d` features.
///
/// Sizes are visited in complementary pairs `(s, d - s)` from the outside in.
/// A pair is enumerated completely, with exact kernel weights, whenever the
/// budget still covers it and its share of the remaining kernel mass would
/// allot it at least that many samples (or the budget covers every remaining
/// coalition). The rest of the budget is spent on random coalitions whose
/// sizes are drawn in proportion to the kernel mass, each paired with its
/// complement; every draw carries an equal slice of the remaining mass and
/// repeats are merged by adding weights. The empty and grand coalitions are
/// always first.
pub fn sample_coalitions(d: usize, budget: usize, seed: u64) -> Result<Vec<WeightedCoalition>> {
    if budget < 4 {
        return Err(Error::InvalidArgument(format!(
            "sample budget must be at least 4, got {budget}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidArgument(
            "coalition sampling needs at least 2 features".into(),
        ));
    }
    let mut acc = Accumulator::default();
    acc.add(Coalition::empty(d), KernelWeight::Infinite);
    acc.add(Coalition::full(d), KernelWeight::Infinite);

    let mut left = budget - 2;
    let pairs: Vec<(usize, usize)> = (1..=d / 2).map(|s| (s, d - s)).collect();
    let pair_mass = |&(s, t): &(usize, usize)| if s == t { size_mass(d, s) } else { 2.0 * size_mass(d, s) };
    let pair_count = |&(s, t): &(usize, usize)| if s == t { binomial(d, s) } else { 2.0 * binomial(d, s) };

    let mut first_sampled = pairs.len();
    for (p, pair) in pairs.iter().enumerate() {
        let remaining_mass: f64 = pairs[p..].iter().map(pair_mass).sum();
        let remaining_count: f64 = pairs[p..].iter().map(pair_count).sum();
        let count = pair_count(pair);
        let expected = left as f64 * pair_mass(pair) / remaining_mass;
        let fits = count <= left as f64;
        if fits && (expected >= count - 1e-9 || remaining_count <= left as f64) {
            let (s, t) = *pair;
            for size in if s == t { vec![s] } else { vec![s, t] } {
                let w = shapley_kernel_weight(d, size);
                for idx in SubsetIter::new(d, size) {
                    acc.add(Coalition::from_indices(d, idx), w);
                }
            }
            left -= count as usize;
        } else {
            first_sampled = p;
            break;
        }
    }

    let rest = &pairs[first_sampled..];
    let draws = left / 2;
    if !rest.is_empty() && draws > 0 {
        let masses: Vec<f64> = rest.iter().map(pair_mass).collect();
        let total: f64 = masses.iter().sum();
        let each = KernelWeight::Finite(total / (2 * draws) as f64);
        let mut rng = rng_from_seed(seed);
        for _ in 0..draws {
            let mut u = rng.random::<f64>() * total;
            let mut p = 0;
            while p + 1 < masses.len() && u >= masses[p] {
                u -= masses[p];
                p += 1;
            }
            let (s, t) = rest[p];
            let size = if s != t && rng.random::<bool>() { t } else { s };
            let chosen = Coalition::from_indices(d, index::sample(&mut rng, d, size));
            let complement = chosen.complement();
            acc.add(chosen, each);
            acc.add(complement, each);
        }
    }
    Ok(acc.items)
}

/// Lexicographic k-subsets of `0..n`.
struct SubsetIter {
    n: usize,
    current: Option<Vec<usize>>,
}

impl SubsetIter {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for SubsetIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}
