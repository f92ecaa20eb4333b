//! Joint training: five losses optimized in a fixed order per outer
//! iteration, with early stopping on validation MRR.

pub mod adagrad;
pub mod checkpoint;
pub mod loss;
pub mod params;
pub mod sampling;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adagrad::{adagrad_step, adagrad_update, AdagradState};
pub use loss::{
    hinge_pair, loss_alignment, loss_confliction, loss_entity, loss_membership, loss_ontology,
    score_alignment, score_membership, score_subclass, score_triple, Hinge, Margins, Membership,
};
pub use params::{Gradients, ModelParams, Shape};
pub use sampling::{
    sample_neg_membership, sample_neg_subclass, sample_neg_triples, truncated_pool_size,
    NeighborPools,
};

use crate::ccm::ClassConflictMatrix;
use crate::ingest::{si_vectors, SiVectors, WordVectorTable};
use crate::kg::{AlignmentDataset, ClassId, Side, Triple};
use crate::linalg::normalize;
use crate::predictor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub d_e: usize,
    pub d_o: usize,
    pub entity: Margins,
    pub onto: Margins,
    pub member: Margins,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_entity: usize,
    pub batch_onto: usize,
    pub eps_trunc: f64,
    /// Negatives per positive triple.
    pub neg_per_pos: usize,
    pub neg_per_pos_onto: usize,
    pub neg_per_pos_member: usize,
    /// Outer iterations between nearest-neighbor pool rebuilds.
    pub neighbor_refresh: usize,
    /// Epochs of each loss per outer iteration.
    pub epochs_per_loss: usize,
    pub max_iterations: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub csls_k: usize,
    pub rng_seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d_e: 300,
            d_o: 300,
            entity: Margins::default(),
            onto: Margins::default(),
            member: Margins::default(),
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 5.0,
            beta: 0.5,
            learning_rate: 0.01,
            batch_entity: 4500,
            batch_onto: 64,
            eps_trunc: 0.9,
            neg_per_pos: 10,
            neg_per_pos_onto: 1,
            neg_per_pos_member: 1,
            neighbor_refresh: 5,
            epochs_per_loss: 1,
            max_iterations: 1000,
            patience: 3,
            eval_every: 10,
            csls_k: 10,
            rng_seed: 0,
        }
    }
}

impl HyperParams {
    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("d_e", self.d_e),
            ("d_o", self.d_o),
            ("batch_entity", self.batch_entity),
            ("batch_onto", self.batch_onto),
            ("neg_per_pos", self.neg_per_pos),
            ("neg_per_pos_onto", self.neg_per_pos_onto),
            ("neg_per_pos_member", self.neg_per_pos_member),
            ("neighbor_refresh", self.neighbor_refresh),
            ("epochs_per_loss", self.epochs_per_loss),
            ("max_iterations", self.max_iterations),
            ("patience", self.patience),
            ("eval_every", self.eval_every),
            ("csls_k", self.csls_k),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        for (name, m) in [("entity", self.entity), ("onto", self.onto), ("member", self.member)] {
            if !(m.gamma1 > 0.0) {
                out.push(format!("gamma1_{name} must be positive"));
            }
            if !(m.gamma2 > 0.0) {
                out.push(format!("gamma2_{name} must be positive"));
            }
            if !(0.0..=1.0).contains(&m.alpha) {
                out.push(format!("alpha_{name} must lie in [0,1]"));
            }
        }
        for (name, v) in [("beta", self.beta), ("eps_trunc", self.eps_trunc)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} must lie in [0,1]"));
            }
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(format!("{name} must be a non-negative number"));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            out.push("learning_rate must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }
}

/// Random initialization, optionally overridden by surface-name vectors.
#[derive(Debug, Clone, Default)]
pub struct SiInit {
    pub ent: [SiVectors; 2],
    pub rel: [SiVectors; 2],
    pub cls: SiVectors,
}

impl SiInit {
    /// Looks up every entity, relation and class surface name in `table`.
    pub fn from_table(dataset: &AlignmentDataset, table: &WordVectorTable) -> Self {
        SiInit {
            ent: [
                si_vectors(table, dataset.kg1.entities().names()),
                si_vectors(table, dataset.kg2.entities().names()),
            ],
            rel: [
                si_vectors(table, dataset.kg1.relations().names()),
                si_vectors(table, dataset.kg2.relations().names()),
            ],
            cls: si_vectors(table, dataset.ontology.classes().names()),
        }
    }

    /// `(covered, fallback)` counts over all tables.
    pub fn coverage(&self) -> (usize, usize) {
        let all = self.ent.iter().chain(&self.rel).chain(std::iter::once(&self.cls));
        all.fold((0, 0), |(c, f), v| (c + v.covered, f + v.fallback))
    }
}

/// Initial parameters for `dataset` under `hp`, seeded by `hp.rng_seed`.
pub fn initial_params(
    dataset: &AlignmentDataset,
    hp: &HyperParams,
    si: Option<&SiInit>,
) -> Result<ModelParams> {
    let shape = Shape {
        entities: [dataset.kg1.num_entities(), dataset.kg2.num_entities()],
        relations: [dataset.kg1.num_relations(), dataset.kg2.num_relations()],
        classes: dataset.ontology.num_classes(),
        d_e: hp.d_e,
        d_o: hp.d_o,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed ^ 0x5eed_1417);
    let mut p = ModelParams::random(shape, &mut rng);
    if let Some(si) = si {
        let check = |v: &SiVectors, d: usize, what: &str| -> Result<()> {
            if let Some(w) = v.vectors.iter().flatten().map(Vec::len).find(|&w| w != d) {
                return Err(Error::Config(format!(
                    "word vectors have width {w} but {what} embeddings have width {d}"
                )));
            }
            Ok(())
        };
        for (i, table) in [&mut p.ent1, &mut p.ent2].into_iter().enumerate() {
            check(&si.ent[i], hp.d_e, "entity")?;
            ModelParams::override_rows(table, &si.ent[i].vectors);
        }
        for (i, table) in [&mut p.rel1, &mut p.rel2].into_iter().enumerate() {
            check(&si.rel[i], hp.d_e, "relation")?;
            ModelParams::override_rows(table, &si.rel[i].vectors);
        }
        check(&si.cls, hp.d_o, "class")?;
        ModelParams::override_rows(&mut p.cls, &si.cls.vectors);
    }
    Ok(p)
}

/// Patience-based stopping on a score that should increase.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    bad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            bad: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.bad = 0;
            StopDecision::Improved
        } else {
            self.bad += 1;
            if self.bad >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

/// Unweighted loss sums of one outer iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub entity: f64,
    pub ontology: f64,
    pub confliction: f64,
    pub membership: f64,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub losses: LossValues,
    pub valid_mrr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    /// CSV of the evaluated iterations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss_entity,loss_ontology,loss_confliction,loss_membership,loss_alignment,valid_mrr\n");
        for r in self.rows.iter().filter(|r| r.valid_mrr.is_some()) {
            let l = r.losses;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration,
                l.entity,
                l.ontology,
                l.confliction,
                l.membership,
                l.alignment,
                r.valid_mrr.unwrap()
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation checkpoint (or the last iteration
    /// when there is no validation split).
    pub params: ModelParams,
    pub log: TrainingLog,
    pub best_iteration: usize,
    pub best_valid_mrr: Option<f64>,
    pub iterations_run: usize,
    pub rng: ChaCha8Rng,
}

fn check_finite(term: &'static str, v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { term, iteration })
    }
}

fn normalize_touched(p: &mut ModelParams, g: &Gradients) {
    for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let table = p.entities_mut(side);
        for r in g.ent[i].touched() {
            normalize(table.row_mut(r));
        }
    }
}

/// Mutable state of a co-training run.
pub struct CoTrainer<'a> {
    dataset: &'a AlignmentDataset,
    ccm: &'a ClassConflictMatrix,
    hp: HyperParams,
    params: ModelParams,
    optim: AdagradState,
    rng: ChaCha8Rng,
    pools: [NeighborPools; 2],
    subclass_set: HashSet<(ClassId, ClassId)>,
    memberships: Vec<Membership>,
    iteration: usize,
}

impl<'a> CoTrainer<'a> {
    pub fn new(
        dataset: &'a AlignmentDataset,
        ccm: &'a ClassConflictMatrix,
        hp: HyperParams,
        init: ModelParams,
    ) -> Result<Self> {
        hp.validate()?;
        if ccm.num_classes() != dataset.ontology.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "conflict matrix covers {} classes, ontology has {}",
                ccm.num_classes(),
                dataset.ontology.num_classes()
            )));
        }
        let s = init.shape();
        if s.entities != [dataset.kg1.num_entities(), dataset.kg2.num_entities()]
            || s.relations != [dataset.kg1.num_relations(), dataset.kg2.num_relations()]
            || s.classes != dataset.ontology.num_classes()
            || s.d_e != hp.d_e
            || s.d_o != hp.d_o
        {
            return Err(Error::InvalidArgument(
                "initial parameters do not match dataset and dimensions".into(),
            ));
        }
        let mut memberships = Vec::new();
        for side in [Side::Left, Side::Right] {
            for (entity, class) in dataset.memberships(side).links() {
                memberships.push(Membership {
                    side,
                    entity,
                    class,
                });
            }
        }
        Ok(CoTrainer {
            dataset,
            ccm,
            pools: [
                NeighborPools::uniform(dataset.kg1.num_entities()),
                NeighborPools::uniform(dataset.kg2.num_entities()),
            ],
            subclass_set: dataset.ontology.subclass_pairs().iter().copied().collect(),
            memberships,
            optim: AdagradState::zeros_like(&init),
            params: init,
            rng: ChaCha8Rng::seed_from_u64(hp.rng_seed),
            hp,
            iteration: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn refresh_pools(&mut self) {
        for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            self.pools[i] = NeighborPools::build(self.params.entities(side), self.hp.eps_trunc);
        }
    }

    fn entity_epoch(&mut self, side: Side) -> f64 {
        let kg = self.dataset.kg(side);
        let mut order: Vec<Triple> = kg.triples().to_vec();
        order.shuffle(&mut self.rng);
        let pools = &self.pools[params::side_index(side)];
        let mut total = 0.0;
        for batch in order.chunks(self.hp.batch_entity) {
            let pairs = sample_neg_triples(batch, kg, pools, self.hp.neg_per_pos, &mut self.rng);
            let mut g = Gradients::zeros_like(&self.params);
            total += loss_entity(&self.params, side, &pairs, self.hp.entity, 1.0, Some(&mut g));
            adagrad_step(&mut self.params, &g, &mut self.optim, self.hp.learning_rate);
            normalize_touched(&mut self.params, &g);
        }
        total
    }

    fn ontology_epoch(&mut self) -> f64 {
        let mut order = self.dataset.ontology.subclass_pairs().to_vec();
        order.shuffle(&mut self.rng);
        let n = self.dataset.ontology.num_classes();
        let mut total = 0.0;
        for batch in order.chunks(self.hp.batch_onto) {
            let mut pairs = Vec::with_capacity(batch.len() * self.hp.neg_per_pos_onto);
            for &pos in batch {
                for _ in 0..self.hp.neg_per_pos_onto {
                    pairs.push((pos, sample_neg_subclass(pos, n, &self.subclass_set, &mut self.rng)));
                }
            }
            let mut g = Gradients::zeros_like(&self.params);
            total += loss_ontology(&self.params, &pairs, self.hp.onto, 1.0, Some(&mut g));
            adagrad_step(&mut self.params, &g, &mut self.optim, self.hp.learning_rate);
        }
        total
    }

    fn confliction_pass(&mut self) -> f64 {
        let mut g = Gradients::zeros_like(&self.params);
        let v = loss_confliction(self.ccm, &self.params.cls, self.hp.lambda1, Some(&mut g));
        adagrad_step(&mut self.params, &g, &mut self.optim, self.hp.learning_rate);
        v
    }

    fn membership_epoch(&mut self) -> f64 {
        let mut order = self.memberships.clone();
        order.shuffle(&mut self.rng);
        let n = self.dataset.ontology.num_classes();
        let mut total = 0.0;
        for batch in order.chunks(self.hp.batch_entity) {
            let mut pairs = Vec::with_capacity(batch.len() * self.hp.neg_per_pos_member);
            for &pos in batch {
                let set = self.dataset.memberships(pos.side);
                for _ in 0..self.hp.neg_per_pos_member {
                    pairs.push((pos, sample_neg_membership(pos, n, set, &mut self.rng)));
                }
            }
            let mut g = Gradients::zeros_like(&self.params);
            total += loss_membership(&self.params, &pairs, self.hp.member, self.hp.lambda2, Some(&mut g));
            adagrad_step(&mut self.params, &g, &mut self.optim, self.hp.learning_rate);
            normalize_touched(&mut self.params, &g);
        }
        total
    }

    fn alignment_epoch(&mut self) -> f64 {
        let mut order = self.dataset.train.pairs().to_vec();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.hp.batch_entity) {
            let mut g = Gradients::zeros_like(&self.params);
            total += loss_alignment(&self.params, batch, self.hp.lambda3, Some(&mut g));
            adagrad_step(&mut self.params, &g, &mut self.optim, self.hp.learning_rate);
            normalize_touched(&mut self.params, &g);
        }
        total
    }

    /// Runs one outer iteration: entity and ontology embedding, then
    /// confliction and membership, then alignment.
    pub fn step(&mut self) -> Result<LossValues> {
        if self.iteration % self.hp.neighbor_refresh == 0 {
            self.refresh_pools();
        }
        self.iteration += 1;
        let it = self.iteration;
        let mut l = LossValues::default();
        for _ in 0..self.hp.epochs_per_loss {
            l.entity = self.entity_epoch(Side::Left) + self.entity_epoch(Side::Right);
            check_finite("entity", l.entity, it)?;
            if !self.dataset.ontology.subclass_pairs().is_empty() {
                l.ontology = self.ontology_epoch();
                check_finite("ontology", l.ontology, it)?;
            }
        }
        if self.hp.lambda1 > 0.0 {
            for _ in 0..self.hp.epochs_per_loss {
                l.confliction = check_finite("confliction", self.confliction_pass(), it)?;
            }
        }
        if self.hp.lambda2 > 0.0 {
            for _ in 0..self.hp.epochs_per_loss {
                l.membership = check_finite("membership", self.membership_epoch(), it)?;
            }
        }
        if self.hp.lambda3 > 0.0 {
            for _ in 0..self.hp.epochs_per_loss {
                l.alignment = check_finite("alignment", self.alignment_epoch(), it)?;
            }
        }
        if !self.params.is_finite() {
            return Err(Error::NonFiniteLoss {
                term: "parameter update",
                iteration: it,
            });
        }
        Ok(l)
    }

    /// MRR on the validation split with the current parameters.
    pub fn validation_mrr(&self) -> Result<f64> {
        let r = predictor::rank_pairs(
            self.dataset,
            &self.params,
            &self.dataset.valid,
            self.hp.beta,
            self.hp.csls_k,
            0,
        )?;
        Ok(r.metrics.mrr)
    }

    /// Trains until early stopping or `max_iterations`.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let mut log = TrainingLog::default();
        let mut stopper = EarlyStopping::new(self.hp.patience);
        let mut best: Option<(usize, ModelParams)> = None;
        let evaluate = !self.dataset.valid.is_empty();
        while self.iteration < self.hp.max_iterations {
            let losses = self.step()?;
            let it = self.iteration;
            let due = it % self.hp.eval_every == 0 || it == self.hp.max_iterations;
            let mut row = LogRow {
                iteration: it,
                losses,
                valid_mrr: None,
            };
            let mut stop = false;
            if evaluate && due {
                let mrr = self.validation_mrr()?;
                row.valid_mrr = Some(mrr);
                match stopper.observe(mrr) {
                    StopDecision::Improved => best = Some((it, self.params.clone())),
                    StopDecision::Continue => {}
                    StopDecision::Stop => stop = true,
                }
            }
            log.rows.push(row);
            if stop {
                break;
            }
        }
        let iterations_run = self.iteration;
        let (best_iteration, params) = best.unwrap_or((iterations_run, self.params));
        Ok(TrainOutcome {
            params,
            log,
            best_iteration,
            best_valid_mrr: stopper.best(),
            iterations_run,
            rng: self.rng,
        })
    }
}

/// Co-trains all embeddings and returns the best validation checkpoint.
pub fn cotrain(
    dataset: &AlignmentDataset,
    ccm: &ClassConflictMatrix,
    hp: &HyperParams,
    init: ModelParams,
) -> Result<TrainOutcome> {
    CoTrainer::new(dataset, ccm, hp.clone(), init)?.run()
}
