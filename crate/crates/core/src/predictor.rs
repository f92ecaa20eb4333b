//! Mapping prediction and evaluation.
//!
//! The similarity of a KG1 entity `x` and a KG2 entity `y` is
//! `β·cos(W_a·x, y) + (1 − β)·cos(c̄_x, c̄_y)`, where `c̄` is the mean
//! embedding of the entity's declared classes. Candidates are ranked by
//! CSLS over that similarity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::ccm::{is_conflicted, ClassConflictMatrix};
use crate::kg::{summed_degree, AlignmentDataset, ClassId, EntityId, MappingSet, Side};
use crate::linalg::{axpy, cosine, dot, normalized, Matrix};
use crate::trainer::ModelParams;
use crate::{Error, Result};

/// Hits@1, Hits@5 and mean reciprocal rank.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub hits1: f64,
    pub hits5: f64,
    pub mrr: f64,
}

impl Metrics {
    pub fn to_text(&self) -> String {
        format!("hits1={}\nhits5={}\nmrr={}\n", self.hits1, self.hits5, self.mrr)
    }
}

/// Metrics of 1-based gold ranks; all zero for an empty list.
pub fn evaluate(ranks: &[usize]) -> Metrics {
    if ranks.is_empty() {
        return Metrics::default();
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Metrics {
        hits1: hits(1),
        hits5: hits(5),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
    }
}

/// Mean of the declared-class embeddings.
pub fn class_embedding_of(classes: &[ClassId], cls: &Matrix) -> Vec<f64> {
    let mut v = vec![0.0; cls.cols()];
    for c in classes {
        axpy(&mut v, 1.0, cls.row(c.index()));
    }
    if !classes.is_empty() {
        let n = classes.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Weighted entity/class cosine of a KG1 and a KG2 entity.
pub fn pair_similarity(
    dataset: &AlignmentDataset,
    params: &ModelParams,
    e1: EntityId,
    e2: EntityId,
    beta: f64,
) -> Result<f64> {
    let x = params.w_a.matvec(params.ent1.row(e1.index()));
    let ent = cosine(&x, params.ent2.row(e2.index()));
    let c1 = class_embedding_of(dataset.memberships1.declared_classes(e1)?, &params.cls);
    let c2 = class_embedding_of(dataset.memberships2.declared_classes(e2)?, &params.cls);
    Ok(mix(beta, ent, cosine(&c1, &c2)))
}

fn mix(beta: f64, ent: f64, cls: f64) -> f64 {
    beta * ent + (1.0 - beta) * cls
}

/// `queries × candidates` similarity matrix.
pub fn similarity_matrix(
    dataset: &AlignmentDataset,
    params: &ModelParams,
    queries: &[EntityId],
    candidates: &[EntityId],
    beta: f64,
) -> Result<Matrix> {
    let unit_rows = |side: Side, ids: &[EntityId]| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut ents = Vec::with_capacity(ids.len());
        let mut clss = Vec::with_capacity(ids.len());
        for &e in ids {
            let raw = params.entities(side).row(e.index());
            let ent = match side {
                Side::Left => normalized(&params.w_a.matvec(raw)),
                Side::Right => normalized(raw),
            };
            let classes = dataset.memberships(side).declared_classes(e)?;
            ents.push(ent);
            clss.push(normalized(&class_embedding_of(classes, &params.cls)));
        }
        Ok((ents, clss))
    };
    let (qe, qc) = unit_rows(Side::Left, queries)?;
    let (ce, cc) = unit_rows(Side::Right, candidates)?;
    let data: Vec<f64> = (0..queries.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (qe, qc, ce, cc) = (&qe[i], &qc[i], &ce, &cc);
            (0..ce.len()).map(move |j| mix(beta, dot(qe, &ce[j]), dot(qc, &cc[j])))
        })
        .collect();
    Ok(Matrix::from_vec(queries.len(), candidates.len(), data))
}

fn top_k_mean(mut vals: Vec<f64>, k: usize) -> f64 {
    let k = k.min(vals.len());
    if k == 0 {
        return 0.0;
    }
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if k < vals.len() {
        vals.select_nth_unstable_by(k - 1, desc);
        vals.truncate(k);
    }
    vals.sort_unstable_by(desc);
    vals.iter().sum::<f64>() / k as f64
}

/// Ranking of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRanking {
    /// 1-based rank of the gold candidate.
    pub gold_rank: usize,
    /// Best `(candidate column, CSLS score)` pairs, best first.
    pub top: Vec<(usize, f64)>,
}

/// CSLS-reranks a similarity matrix: `2·s(x,y) − r_C(x) − r_Q(y)` where
/// `r_C(x)` averages `x`'s `k` best candidates and `r_Q(y)` averages `y`'s
/// `k` best queries. `gold[i]` is the gold column of query row `i`. Ties go
/// to the smaller column.
pub fn csls_rank(
    sim: &Matrix,
    k: usize,
    gold: &[usize],
    top_n: usize,
) -> Result<Vec<QueryRanking>> {
    let (nq, nc) = (sim.rows(), sim.cols());
    if k == 0 || k > nc {
        return Err(Error::InvalidArgument(format!(
            "CSLS k = {k} must lie in 1..={nc} (number of candidates)"
        )));
    }
    if gold.len() != nq || gold.iter().any(|&g| g >= nc) {
        return Err(Error::InvalidArgument("gold columns do not match the matrix".into()));
    }
    let r_query: Vec<f64> = (0..nq)
        .into_par_iter()
        .map(|i| top_k_mean(sim.row(i).to_vec(), k))
        .collect();
    let r_cand: Vec<f64> = (0..nc)
        .into_par_iter()
        .map(|j| top_k_mean((0..nq).map(|i| sim.get(i, j)).collect(), k))
        .collect();
    let out = (0..nq)
        .into_par_iter()
        .map(|i| {
            let scores: Vec<f64> = (0..nc)
                .map(|j| 2.0 * sim.get(i, j) - r_query[i] - r_cand[j])
                .collect();
            let g = gold[i];
            let gs = scores[g];
            let ahead = scores
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > gs || (s == gs && j < g))
                .count();
            let mut order: Vec<usize> = (0..nc).collect();
            let by_rank = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
            let n = top_n.min(nc);
            if n > 0 && n < nc {
                order.select_nth_unstable_by(n - 1, by_rank);
            }
            order.truncate(n);
            order.sort_unstable_by(by_rank);
            QueryRanking {
                gold_rank: ahead + 1,
                top: order.into_iter().map(|j| (j, scores[j])).collect(),
            }
        })
        .collect();
    Ok(out)
}

/// Ranked evaluation of a mapping split.
#[derive(Debug, Clone)]
pub struct RankingResult {
    pub queries: Vec<EntityId>,
    pub candidates: Vec<EntityId>,
    pub rankings: Vec<QueryRanking>,
    pub metrics: Metrics,
}

impl RankingResult {
    pub fn ranks(&self) -> Vec<usize> {
        self.rankings.iter().map(|r| r.gold_rank).collect()
    }

    /// Top-1 prediction per query; requires `top_n ≥ 1` when ranking.
    pub fn predicted_top1(&self) -> Vec<(EntityId, EntityId)> {
        self.queries
            .iter()
            .zip(&self.rankings)
            .map(|(&q, r)| (q, self.candidates[r.top[0].0]))
            .collect()
    }

    /// `query⟨TAB⟩candidate⟨TAB⟩score…` per query.
    pub fn write_predictions(&self, path: &Path, dataset: &AlignmentDataset) -> Result<()> {
        let mut out = String::new();
        for (q, r) in self.queries.iter().zip(&self.rankings) {
            out += dataset.kg1.entity_name(*q);
            for &(j, s) in &r.top {
                let _ = write!(out, "\t{}\t{s}", dataset.kg2.entity_name(self.candidates[j]));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Ranks every KG2 entity of `pairs` for every KG1 entity of `pairs`.
pub fn rank_pairs(
    dataset: &AlignmentDataset,
    params: &ModelParams,
    pairs: &MappingSet,
    beta: f64,
    k: usize,
    top_n: usize,
) -> Result<RankingResult> {
    let queries = pairs.lefts();
    let candidates = pairs.rights();
    if queries.is_empty() {
        return Ok(RankingResult {
            queries,
            candidates,
            rankings: Vec::new(),
            metrics: Metrics::default(),
        });
    }
    let sim = similarity_matrix(dataset, params, &queries, &candidates, beta)?;
    let gold: Vec<usize> = (0..queries.len()).collect();
    let rankings = csls_rank(&sim, k.min(candidates.len().max(1)), &gold, top_n)?;
    let metrics = evaluate(&rankings.iter().map(|r| r.gold_rank).collect::<Vec<_>>());
    Ok(RankingResult {
        queries,
        candidates,
        rankings,
        metrics,
    })
}

/// Share of false-positive top-1 predictions that are class-conflicted;
/// 0 when there are no false positives.
pub fn conflict_ratio(
    predicted_top1: &[(EntityId, EntityId)],
    gold: &[(EntityId, EntityId)],
    dataset: &AlignmentDataset,
    ccm: &ClassConflictMatrix,
    tau: f64,
) -> Result<f64> {
    if predicted_top1.len() != gold.len() {
        return Err(Error::InvalidArgument("predictions and gold differ in length".into()));
    }
    let mut wrong = 0usize;
    let mut conflicted = 0usize;
    for (&(q, p), &(gq, g)) in predicted_top1.iter().zip(gold) {
        if q != gq {
            return Err(Error::InvalidArgument("predictions not aligned with gold".into()));
        }
        if p != g {
            wrong += 1;
            if is_conflicted(q, p, &dataset.memberships1, &dataset.memberships2, ccm, tau)? {
                conflicted += 1;
            }
        }
    }
    Ok(if wrong == 0 {
        0.0
    } else {
        conflicted as f64 / wrong as f64
    })
}

/// Metrics of the pairs whose summed degree falls in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMetrics {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub metrics: Metrics,
}

/// Groups ranks into summed-degree bins of width `bin_width`; empty bins are
/// omitted.
pub fn degree_binned_eval(ranks: &[usize], degrees: &[usize], bin_width: usize) -> Vec<BinMetrics> {
    assert_eq!(ranks.len(), degrees.len());
    assert!(bin_width > 0);
    let mut bins: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (&r, &d) in ranks.iter().zip(degrees) {
        bins.entry(d / bin_width).or_default().push(r);
    }
    bins.into_iter()
        .map(|(b, rs)| BinMetrics {
            lo: b * bin_width,
            hi: (b + 1) * bin_width,
            count: rs.len(),
            metrics: evaluate(&rs),
        })
        .collect()
}

/// Summed degree of each pair.
pub fn summed_degrees(dataset: &AlignmentDataset, pairs: &MappingSet) -> Result<Vec<usize>> {
    pairs
        .pairs()
        .iter()
        .map(|&(a, b)| summed_degree(a, b, &dataset.kg1, &dataset.kg2))
        .collect()
}

pub fn bins_to_csv(bins: &[BinMetrics]) -> String {
    let mut out = String::from("degree_lo,degree_hi,count,hits1,hits5,mrr\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.lo, b.hi, b.count, b.metrics.hits1, b.metrics.hits5, b.metrics.mrr
        );
    }
    out
}
