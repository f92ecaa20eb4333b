//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeSet;

use ontoea::ccm::ClassConflictMatrix;
use ontoea::kg::{
    ClassId, EntityId, MappingSet, MembershipSet, Ontology, OntologyBuilder, ROOT_CLASS,
};
use ontoea::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// An ontology instance in plain index form. Class 0 is the root.
#[derive(Debug, Clone)]
pub struct RawCcmCase {
    pub n: usize,
    pub parents: Vec<Vec<usize>>,
    pub disjoint: Vec<(usize, usize)>,
    pub members1: Vec<Vec<usize>>,
    pub members2: Vec<Vec<usize>>,
    pub seeds: Vec<(usize, usize)>,
}

pub fn class_uri(i: usize) -> String {
    if i == 0 {
        ROOT_CLASS.to_owned()
    } else {
        format!("ex:C{i}")
    }
}

pub fn random_case<R: Rng>(rng: &mut R, max_classes: usize) -> RawCcmCase {
    let n = rng.gen_range(1..=max_classes);
    let mut parents = vec![Vec::new(); n];
    for (c, ps) in parents.iter_mut().enumerate().skip(1) {
        let k = rng.gen_range(0..=2.min(c));
        let mut pool: Vec<usize> = (0..c).collect();
        pool.shuffle(rng);
        ps.extend(pool.into_iter().take(k));
    }
    let mut disjoint = Vec::new();
    if n > 1 {
        for _ in 0..rng.gen_range(0..n) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                disjoint.push((a, b));
            }
        }
    }
    let mut members = || -> Vec<Vec<usize>> {
        let entities = rng.gen_range(0..=n);
        (0..entities)
            .map(|_| {
                let k = rng.gen_range(0..=2);
                (0..k).map(|_| rng.gen_range(0..n)).collect()
            })
            .collect()
    };
    let members1 = members();
    let members2 = members();
    let mut seeds = Vec::new();
    if !members1.is_empty() && !members2.is_empty() {
        let mut lefts: Vec<usize> = (0..members1.len()).collect();
        let mut rights: Vec<usize> = (0..members2.len()).collect();
        lefts.shuffle(rng);
        rights.shuffle(rng);
        let k = rng.gen_range(0..=lefts.len().min(rights.len()));
        seeds = lefts.into_iter().zip(rights).take(k).collect();
    }
    RawCcmCase {
        n,
        parents,
        disjoint,
        members1,
        members2,
        seeds,
    }
}

pub struct BuiltCase {
    pub ontology: Ontology,
    pub m1: MembershipSet,
    pub m2: MembershipSet,
    pub seeds: MappingSet,
}

pub fn build_case(raw: &RawCcmCase) -> BuiltCase {
    let mut b = OntologyBuilder::new();
    for i in 0..raw.n {
        b.add_class(&class_uri(i));
    }
    for (c, ps) in raw.parents.iter().enumerate() {
        for &p in ps {
            b.add_subclass(&class_uri(c), &class_uri(p));
        }
    }
    for &(a, bb) in &raw.disjoint {
        b.add_disjoint(&class_uri(a), &class_uri(bb));
    }
    let ontology = b.build().expect("random ontology is acyclic");
    let links = |m: &[Vec<usize>]| {
        m.iter()
            .enumerate()
            .flat_map(|(e, cs)| cs.iter().map(move |&c| (EntityId::from(e), ClassId::from(c))))
            .collect::<Vec<_>>()
    };
    BuiltCase {
        m1: MembershipSet::new(raw.members1.len(), links(&raw.members1), ontology.root()),
        m2: MembershipSet::new(raw.members2.len(), links(&raw.members2), ontology.root()),
        seeds: MappingSet::new(
            raw.seeds
                .iter()
                .map(|&(a, b)| (EntityId::from(a), EntityId::from(b)))
                .collect(),
        )
        .unwrap(),
        ontology,
    }
}

/// `{c}`, everything reachable upward, and the root; parentless classes hang
/// off the root.
pub fn oracle_ancestors(raw: &RawCcmCase, c: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([c, 0]);
    let mut stack = vec![c];
    while let Some(x) = stack.pop() {
        for &p in &raw.parents[x] {
            if out.insert(p) {
                stack.push(p);
            }
        }
    }
    out
}

fn declared(m: &[Vec<usize>], e: usize) -> Vec<usize> {
    if m[e].is_empty() {
        vec![0]
    } else {
        m[e].clone()
    }
}

/// Conflict degree of one class pair, evaluating the rules in order.
pub fn oracle_degree(raw: &RawCcmCase, i: usize, j: usize) -> f64 {
    if i == j {
        return 0.0;
    }
    if raw
        .disjoint
        .iter()
        .any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
    {
        return 1.0;
    }
    let co_member = |m: &[Vec<usize>]| {
        (0..m.len()).any(|e| {
            let d = declared(m, e);
            d.contains(&i) && d.contains(&j)
        })
    };
    if co_member(&raw.members1) || co_member(&raw.members2) {
        return 0.0;
    }
    for &(a, b) in &raw.seeds {
        let (d1, d2) = (declared(&raw.members1, a), declared(&raw.members2, b));
        if (d1.contains(&i) && d2.contains(&j)) || (d1.contains(&j) && d2.contains(&i)) {
            return 0.0;
        }
    }
    let (si, sj) = (oracle_ancestors(raw, i), oracle_ancestors(raw, j));
    let inter = si.intersection(&sj).count();
    let union = si.union(&sj).count();
    1.0 - inter as f64 / union as f64
}

pub fn assert_ccm_matches_oracle(raw: &RawCcmCase, ccm: &ClassConflictMatrix) {
    for i in 0..raw.n {
        for j in 0..raw.n {
            let want = oracle_degree(raw, i, j);
            let got = ccm.get(ClassId::from(i), ClassId::from(j));
            assert_eq!(
                got.to_bits(),
                want.to_bits(),
                "pair ({i},{j}): got {got}, oracle {want}, case {raw:?}"
            );
        }
    }
}

/// Quadratic CSLS ranking straight from the definition. A candidate with
/// fewer than `k` queries averages over all of them.
pub fn oracle_csls_ranks(sim: &[Vec<f64>], k: usize, gold: &[usize]) -> Vec<usize> {
    let nq = sim.len();
    let nc = sim[0].len();
    let mean_top = |mut v: Vec<f64>| {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = k.min(v.len());
        v[..k].iter().sum::<f64>() / k as f64
    };
    let rq: Vec<f64> = sim.iter().map(|row| mean_top(row.clone())).collect();
    let rc: Vec<f64> = (0..nc)
        .map(|j| mean_top((0..nq).map(|i| sim[i][j]).collect()))
        .collect();
    (0..nq)
        .map(|i| {
            let csls = |j: usize| 2.0 * sim[i][j] - rq[i] - rc[j];
            let g = gold[i];
            let mut rank = 1;
            for j in 0..nc {
                if j != g && (csls(j) > csls(g) || (csls(j) == csls(g) && j < g)) {
                    rank += 1;
                }
            }
            rank
        })
        .collect()
}

pub fn matrix_of(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows)
}

/// A generated benchmark loaded from a temporary directory.
pub fn toy_dataset(cfg: &ontoea::toy::ToyConfig) -> ontoea::kg::AlignmentDataset {
    let dir = tempfile::tempdir().unwrap();
    ontoea::toy::generate(cfg).unwrap().write(dir.path()).unwrap();
    ontoea::ingest::load_dataset(dir.path(), Default::default(), cfg.seed).unwrap()
}

/// Desk-scale training settings shared by the end-to-end tests.
pub fn desk_hyper(seed: u64) -> ontoea::trainer::HyperParams {
    ontoea::trainer::HyperParams {
        d_e: 32,
        d_o: 32,
        learning_rate: 0.05,
        batch_entity: 500,
        batch_onto: 32,
        max_iterations: 300,
        patience: 30,
        eval_every: 10,
        rng_seed: seed,
        ..Default::default()
    }
}

/// Test-split metrics and conflict ratio of one training run.
pub struct DeskRun {
    pub metrics: ontoea::predictor::Metrics,
    pub conflict_ratio: f64,
}

pub fn desk_run(
    dataset: &ontoea::kg::AlignmentDataset,
    hp: &ontoea::trainer::HyperParams,
) -> DeskRun {
    use ontoea::predictor::{conflict_ratio, rank_pairs};
    let ccm = ontoea::ccm::build_ccm(
        &dataset.ontology,
        &dataset.memberships1,
        &dataset.memberships2,
        &dataset.train,
    )
    .unwrap();
    let init = ontoea::trainer::initial_params(dataset, hp, None).unwrap();
    let out = ontoea::trainer::cotrain(dataset, &ccm, hp, init).unwrap();
    let r = rank_pairs(dataset, &out.params, &dataset.test, hp.beta, hp.csls_k, 1).unwrap();
    let ratio = conflict_ratio(
        &r.predicted_top1(),
        dataset.test.pairs(),
        dataset,
        &ccm,
        ontoea::ccm::DEFAULT_TAU,
    )
    .unwrap();
    DeskRun {
        metrics: r.metrics,
        conflict_ratio: ratio,
    }
}
