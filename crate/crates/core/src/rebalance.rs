//! Category pools, exact four-way balancing and incremental sweep schedules.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, LabeledExample, Origin};
use crate::numerics::seeded_rng;

#[derive(Debug, Error, PartialEq)]
pub enum RebalanceError {
    #[error("pool for {0} is empty but its target is positive")]
    EmptyPool(Category),
    #[error("sweep step must be positive")]
    ZeroStep,
    #[error("sweep range {from}..{to} is not divisible by step {step}")]
    Indivisible { from: usize, to: usize, step: usize },
    #[error("sweep for {category} must run {expected} (from {from} to {to})")]
    Direction {
        category: Category,
        expected: &'static str,
        from: usize,
        to: usize,
    },
}

/// Per-category target counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTargets {
    pub toxic_identity: usize,
    pub toxic_non_identity: usize,
    pub non_toxic_identity: usize,
    pub non_toxic_non_identity: usize,
}

impl CategoryTargets {
    pub fn uniform(n: usize) -> Self {
        Self {
            toxic_identity: n,
            toxic_non_identity: n,
            non_toxic_identity: n,
            non_toxic_non_identity: n,
        }
    }

    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::ToxicIdentity => self.toxic_identity,
            Category::ToxicNonIdentity => self.toxic_non_identity,
            Category::NonToxicIdentity => self.non_toxic_identity,
            Category::NonToxicNonIdentity => self.non_toxic_non_identity,
        }
    }

    pub fn set(&mut self, c: Category, n: usize) {
        match c {
            Category::ToxicIdentity => self.toxic_identity = n,
            Category::ToxicNonIdentity => self.toxic_non_identity = n,
            Category::NonToxicIdentity => self.non_toxic_identity = n,
            Category::NonToxicNonIdentity => self.non_toxic_non_identity = n,
        }
    }

    pub fn total(&self) -> usize {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Examples grouped by category, with real/synthetic counts per pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryPools {
    pools: [Vec<LabeledExample>; 4],
}

impl CategoryPools {
    pub fn pool(&self, c: Category) -> &[LabeledExample] {
        &self.pools[c.index()]
    }

    pub fn real_count(&self, c: Category) -> usize {
        self.pool(c).iter().filter(|e| e.origin == Origin::Real).count()
    }

    pub fn synthetic_count(&self, c: Category) -> usize {
        self.pool(c).iter().filter(|e| e.origin == Origin::Synthetic).count()
    }

    pub fn sizes(&self) -> CategoryTargets {
        let mut t = CategoryTargets::default();
        for c in Category::ALL {
            t.set(c, self.pool(c).len());
        }
        t
    }
}

/// Routes annotated examples to their category pool and appends synthetic
/// examples. Unannotated examples come back as the second element.
pub fn build_pools(
    examples: Vec<LabeledExample>,
    synthetic: Vec<LabeledExample>,
) -> (CategoryPools, Vec<LabeledExample>) {
    let mut pools = CategoryPools::default();
    let mut remainder = Vec::new();
    for e in examples.into_iter().chain(synthetic) {
        match e.category {
            Some(c) => pools.pools[c.index()].push(e),
            None => remainder.push(e),
        }
    }
    (pools, remainder)
}

/// How many synthetic examples each generatable category needs for its real
/// pool to reach `targets`.
pub fn synthetic_deficits(real: &CategoryPools, targets: &CategoryTargets) -> Vec<(Category, usize)> {
    crate::textproc::SYNTHESIZABLE
        .iter()
        .map(|&c| (c, targets.get(c).saturating_sub(real.real_count(c))))
        .filter(|&(_, n)| n > 0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebalanceSpec {
    pub targets: CategoryTargets,
    pub seed: u64,
}

/// Draws exactly `targets[c]` examples from every pool, then shuffles.
///
/// A pool at least as large as its target is undersampled without
/// replacement. A smaller pool contributes every member once; the shortfall
/// is filled by drawing real examples with replacement (synthetic ones only
/// if the pool has no real examples).
pub fn sample_balanced(pools: &CategoryPools, spec: &RebalanceSpec) -> Result<Vec<LabeledExample>, RebalanceError> {
    let mut rng = seeded_rng(spec.seed);
    let mut out = Vec::with_capacity(spec.targets.total());
    for c in Category::ALL {
        let target = spec.targets.get(c);
        if target == 0 {
            continue;
        }
        let pool = pools.pool(c);
        if pool.is_empty() {
            return Err(RebalanceError::EmptyPool(c));
        }
        if pool.len() >= target {
            let mut picked = index::sample(&mut rng, pool.len(), target).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| pool[i].clone()));
        } else {
            let real: Vec<&LabeledExample> = pool.iter().filter(|e| e.origin == Origin::Real).collect();
            let source: Vec<&LabeledExample> = if real.is_empty() { pool.iter().collect() } else { real };
            out.extend(pool.iter().cloned());
            for _ in pool.len()..target {
                out.push(source[rng.gen_range(0..source.len())].clone());
            }
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// One category's counts stepped while the other three stay fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSchedule {
    pub category: Category,
    pub points: Vec<usize>,
    pub fixed: CategoryTargets,
}

impl SweepSchedule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn targets_at(&self, i: usize) -> CategoryTargets {
        let mut t = self.fixed;
        t.set(self.category, self.points[i]);
        t
    }
}

/// Builds `[from, from ± step, ..., to]`. Toxic categories must step upward
/// and non-toxic categories downward.
pub fn make_sweep(
    category: Category,
    from: usize,
    to: usize,
    step: usize,
    fixed: CategoryTargets,
) -> Result<SweepSchedule, RebalanceError> {
    if step == 0 {
        return Err(RebalanceError::ZeroStep);
    }
    if category.is_toxic() && to < from {
        return Err(RebalanceError::Direction { category, expected: "upward", from, to });
    }
    if !category.is_toxic() && to > from {
        return Err(RebalanceError::Direction { category, expected: "downward", from, to });
    }
    let span = from.abs_diff(to);
    if !span.is_multiple_of(step) {
        return Err(RebalanceError::Indivisible { from, to, step });
    }
    let points = (0..=span / step)
        .map(|k| if to >= from { from + k * step } else { from - k * step })
        .collect();
    Ok(SweepSchedule { category, points, fixed })
}
