//! Negative sampling.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use super::loss::Membership;
use crate::kg::{ClassId, EntityId, KnowledgeGraph, MembershipSet, Triple};
use crate::linalg::{dot, norm, Matrix};

/// Redraws allowed when a corruption hits a known positive.
pub const MAX_RESAMPLE: usize = 10;

/// `⌈(1 − ε)·n⌉`, at least 1 and at most `n`.
pub fn truncated_pool_size(n: usize, eps: f64) -> usize {
    // the small offset absorbs float error such as (1 − 0.7)·10 = 3.0000000000000004
    let raw = ((1.0 - eps) * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Per-entity pools of the nearest same-graph entities by cosine
/// (the entity itself included). `None` means the whole graph.
#[derive(Debug, Clone)]
pub struct NeighborPools {
    n: usize,
    pools: Option<Vec<Vec<u32>>>,
}

impl NeighborPools {
    pub fn uniform(n: usize) -> Self {
        NeighborPools { n, pools: None }
    }

    /// Builds pools of size `⌈(1 − ε)·n⌉` from the rows of `emb`. Ties break
    /// toward the smaller handle.
    pub fn build(emb: &Matrix, eps: f64) -> Self {
        let n = emb.rows();
        let k = truncated_pool_size(n, eps);
        if k >= n {
            return Self::uniform(n);
        }
        let norms: Vec<f64> = (0..n).map(|r| norm(emb.row(r))).collect();
        let pools = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = emb.row(i);
                let mut sims: Vec<(f64, u32)> = (0..n)
                    .map(|j| {
                        let s = if i == j {
                            f64::INFINITY
                        } else if norms[i] == 0.0 || norms[j] == 0.0 {
                            0.0
                        } else {
                            dot(row, emb.row(j)) / (norms[i] * norms[j])
                        };
                        (s, j as u32)
                    })
                    .collect();
                let by_rank = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
                sims.select_nth_unstable_by(k - 1, by_rank);
                sims.truncate(k);
                sims.sort_unstable_by(by_rank);
                sims.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        NeighborPools {
            n,
            pools: Some(pools),
        }
    }

    pub fn pool_size(&self, e: EntityId) -> usize {
        match &self.pools {
            Some(p) => p[e.index()].len(),
            None => self.n,
        }
    }

    pub fn pool(&self, e: EntityId) -> Option<&[u32]> {
        self.pools.as_ref().map(|p| p[e.index()].as_slice())
    }

    pub fn draw<R: Rng>(&self, e: EntityId, rng: &mut R) -> EntityId {
        match &self.pools {
            Some(p) => {
                let pool = &p[e.index()];
                EntityId(pool[rng.gen_range(0..pool.len())])
            }
            None => EntityId(rng.gen_range(0..self.n as u32)),
        }
    }
}

/// `per_pos` corruptions of each positive. Head or tail is replaced (fair
/// coin) by a draw from the replaced entity's pool; draws that reproduce a
/// triple of `kg` are redrawn up to [`MAX_RESAMPLE`] times.
pub fn sample_neg_triples<R: Rng>(
    positives: &[Triple],
    kg: &KnowledgeGraph,
    pools: &NeighborPools,
    per_pos: usize,
    rng: &mut R,
) -> Vec<(Triple, Triple)> {
    let mut out = Vec::with_capacity(positives.len() * per_pos);
    for &pos in positives {
        for _ in 0..per_pos {
            let corrupt_head = rng.gen_bool(0.5);
            let mut neg = pos;
            for _ in 0..=MAX_RESAMPLE {
                neg = pos;
                if corrupt_head {
                    neg.head = pools.draw(pos.head, rng);
                } else {
                    neg.tail = pools.draw(pos.tail, rng);
                }
                if !kg.contains(&neg) {
                    break;
                }
            }
            out.push((pos, neg));
        }
    }
    out
}

/// Replaces the child or the parent (fair coin) with a uniformly drawn class;
/// redraws on collision with a declared pair.
pub fn sample_neg_subclass<R: Rng>(
    pos: (ClassId, ClassId),
    num_classes: usize,
    positives: &HashSet<(ClassId, ClassId)>,
    rng: &mut R,
) -> (ClassId, ClassId) {
    let corrupt_child = rng.gen_bool(0.5);
    let mut neg = pos;
    for _ in 0..=MAX_RESAMPLE {
        let c = ClassId(rng.gen_range(0..num_classes as u32));
        neg = if corrupt_child { (c, pos.1) } else { (pos.0, c) };
        if !positives.contains(&neg) {
            break;
        }
    }
    neg
}

/// Replaces the class with a uniformly drawn one; redraws on collision with
/// a declared membership.
pub fn sample_neg_membership<R: Rng>(
    pos: Membership,
    num_classes: usize,
    memberships: &MembershipSet,
    rng: &mut R,
) -> Membership {
    let mut neg = pos;
    for _ in 0..=MAX_RESAMPLE {
        neg.class = ClassId(rng.gen_range(0..num_classes as u32));
        if !memberships.has_link(neg.entity, neg.class) {
            break;
        }
    }
    neg
}
