//! Finite-difference gradient checking for the five losses.

use ontoea::ccm::ClassConflictMatrix;
use ontoea::kg::{ClassId, EntityId, RelationId, Side, Triple};
use ontoea::trainer::{
    loss_alignment, loss_confliction, loss_entity, loss_membership, loss_ontology,
    score_membership, score_subclass, score_triple, Gradients, Margins, Membership, ModelParams,
    Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const DRAWS: usize = 10;
const D: usize = 8;
const BLOCKS: usize = 10;
pub const MARGINS: Margins = Margins {
    gamma1: 0.5,
    gamma2: 0.3,
    alpha: 0.2,
};

fn block(p: &mut ModelParams, b: usize) -> &mut [f64] {
    match b {
        0 => p.ent1.as_mut_slice(),
        1 => p.ent2.as_mut_slice(),
        2 => p.rel1.as_mut_slice(),
        3 => p.rel2.as_mut_slice(),
        4 => p.cls.as_mut_slice(),
        5 => p.w_o.as_mut_slice(),
        6 => &mut p.b_o,
        7 => p.w_m.as_mut_slice(),
        8 => &mut p.b_m,
        _ => p.w_a.as_mut_slice(),
    }
}

pub fn flatten(g: &Gradients, p: &ModelParams) -> Vec<f64> {
    let rows = |rg: &ontoea::trainer::params::RowGrads, n: usize, w: usize| {
        let mut out = vec![0.0; n * w];
        for (r, v) in rg.iter() {
            out[r * w..(r + 1) * w].copy_from_slice(v);
        }
        out
    };
    let s = p.shape();
    [
        rows(&g.ent[0], s.entities[0], s.d_e),
        rows(&g.ent[1], s.entities[1], s.d_e),
        rows(&g.rel[0], s.relations[0], s.d_e),
        rows(&g.rel[1], s.relations[1], s.d_e),
        rows(&g.cls, s.classes, s.d_o),
        g.w_o.data.clone(),
        g.b_o.data.clone(),
        g.w_m.data.clone(),
        g.b_m.data.clone(),
        g.w_a.data.clone(),
    ]
    .concat()
}

fn numeric(p: &ModelParams, f: &dyn Fn(&ModelParams) -> f64) -> Vec<f64> {
    let mut q = p.clone();
    let mut out = Vec::new();
    for b in 0..BLOCKS {
        for k in 0..block(&mut q, b).len() {
            let x = block(&mut q, b)[k];
            block(&mut q, b)[k] = x + H;
            let plus = f(&q);
            block(&mut q, b)[k] = x - H;
            let minus = f(&q);
            block(&mut q, b)[k] = x;
            out.push((plus - minus) / (2.0 * H));
        }
    }
    out
}

pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Parameters with non-trivial transforms and biases, so every path of the
/// projection scores is exercised.
pub fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let shape = Shape {
        entities: [6, 5],
        relations: [3, 2],
        classes: 5,
        d_e: D,
        d_o: D,
    };
    let mut p = ModelParams::random(shape, rng);
    for b in 5..BLOCKS {
        for x in block(&mut p, b) {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    p
}

fn away_from_kinks(f_pos: f64, f_neg: f64) -> bool {
    let margin = MARGINS.gamma1 + f_pos - f_neg;
    let limit = f_pos - MARGINS.gamma2;
    margin.abs() > 1e-3 && limit.abs() > 1e-3 && margin > 0.0
}

/// Returns the relative error of one random instance of `loss`.
pub fn check(seed: u64, instance: &Instance) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p = random_params(&mut rng);
        let Some(loss) = instance(&mut rng, &p) else {
            continue;
        };
        let mut g = Gradients::zeros_like(&p);
        loss(&p, Some(&mut g));
        let analytic = flatten(&g, &p);
        assert!(analytic.iter().any(|&x| x != 0.0), "instance has a zero gradient");
        let fd = numeric(&p, &|q| loss(q, None));
        return relative_error(&analytic, &fd);
    }
}

pub type Loss = Box<dyn Fn(&ModelParams, Option<&mut Gradients>) -> f64>;
pub type Instance = dyn Fn(&mut ChaCha8Rng, &ModelParams) -> Option<Loss>;

pub fn entity_instance(rng: &mut ChaCha8Rng, p: &ModelParams) -> Option<Loss> {
    let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
    let s = p.shape();
    let i = if side == Side::Left { 0 } else { 1 };
    let mut pairs = Vec::new();
    for _ in 0..3 {
        let t = |rng: &mut ChaCha8Rng| Triple {
            head: EntityId::from(rng.gen_range(0..s.entities[i])),
            relation: RelationId::from(rng.gen_range(0..s.relations[i])),
            tail: EntityId::from(rng.gen_range(0..s.entities[i])),
        };
        let (pos, neg) = (t(rng), t(rng));
        if !away_from_kinks(score_triple(p, side, &pos), score_triple(p, side, &neg)) {
            return None;
        }
        pairs.push((pos, neg));
    }
    Some(Box::new(move |q, g| loss_entity(q, side, &pairs, MARGINS, 1.0, g)))
}

pub fn ontology_instance(rng: &mut ChaCha8Rng, p: &ModelParams) -> Option<Loss> {
    let n = p.shape().classes;
    let mut pairs = Vec::new();
    for _ in 0..3 {
        let mut c = || ClassId::from(rng.gen_range(0..n));
        let (pos, neg) = ((c(), c()), (c(), c()));
        if !away_from_kinks(score_subclass(p, pos.0, pos.1), score_subclass(p, neg.0, neg.1)) {
            return None;
        }
        pairs.push((pos, neg));
    }
    Some(Box::new(move |q, g| loss_ontology(q, &pairs, MARGINS, 1.0, g)))
}

pub fn membership_instance(rng: &mut ChaCha8Rng, p: &ModelParams) -> Option<Loss> {
    let s = p.shape();
    let mut pairs = Vec::new();
    for _ in 0..3 {
        let (side, i) = if rng.gen_bool(0.5) { (Side::Left, 0) } else { (Side::Right, 1) };
        let entity = EntityId::from(rng.gen_range(0..s.entities[i]));
        let pos = Membership {
            side,
            entity,
            class: ClassId::from(rng.gen_range(0..s.classes)),
        };
        let neg = Membership {
            class: ClassId::from(rng.gen_range(0..s.classes)),
            ..pos
        };
        let fp = score_membership(p, side, entity, pos.class);
        let fneg = score_membership(p, side, entity, neg.class);
        if !away_from_kinks(fp, fneg) {
            return None;
        }
        pairs.push((pos, neg));
    }
    Some(Box::new(move |q, g| loss_membership(q, &pairs, MARGINS, 1.0, g)))
}

pub fn confliction_instance(rng: &mut ChaCha8Rng, p: &ModelParams) -> Option<Loss> {
    let n = p.shape().classes;
    let mut ccm = ClassConflictMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.7) {
                ccm.set(ClassId::from(i), ClassId::from(j), rng.gen_range(0.05..1.0));
            }
        }
    }
    Some(Box::new(move |q, g| loss_confliction(&ccm, &q.cls, 1.0, g)))
}

pub fn alignment_instance(rng: &mut ChaCha8Rng, p: &ModelParams) -> Option<Loss> {
    let s = p.shape();
    let seeds: Vec<(EntityId, EntityId)> = (0..4)
        .map(|_| {
            (
                EntityId::from(rng.gen_range(0..s.entities[0])),
                EntityId::from(rng.gen_range(0..s.entities[1])),
            )
        })
        .collect();
    Some(Box::new(move |q, g| loss_alignment(q, &seeds, 1.0, g)))
}

/// Every loss with its instance generator.
pub fn all_losses() -> [(&'static str, &'static Instance); 5] {
    [
        ("L_E", &entity_instance),
        ("L_O", &ontology_instance),
        ("L_C", &confliction_instance),
        ("L_M", &membership_instance),
        ("L_A", &alignment_instance),
    ]
}

/// Largest relative error over `DRAWS` instances.
pub fn worst_error(instance: &Instance) -> f64 {
    (0..DRAWS as u64).map(|s| check(s, instance)).fold(0.0, f64::max)
}
