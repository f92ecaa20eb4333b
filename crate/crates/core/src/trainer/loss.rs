//! Scoring functions and the five losses, each returning its value and
//! optionally accumulating `scale · ∂loss/∂θ` into a [`Gradients`].
//!
//! Subgradients are 0 at hinge kinks and at the origin of every L2 norm.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ModelParams};
use crate::ccm::ClassConflictMatrix;
use crate::kg::{ClassId, EntityId, Side, Triple};
use crate::linalg::{axpy, dot, norm, Matrix};

/// Lower clamp on `1 − cos` inside the conflict log.
pub const CONFLICT_DELTA: f64 = 1e-8;

/// Margin `γ1`, limit `γ2` and balance `α` of a margin+limit hinge loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            gamma1: 0.01,
            gamma2: 2.0,
            alpha: 0.2,
        }
    }
}

/// Value and score derivatives of one positive/negative hinge pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub value: f64,
    pub d_pos: f64,
    pub d_neg: f64,
}

/// `[γ1 + f_pos − f_neg]₊ + α·[f_pos − γ2]₊`
pub fn hinge_pair(f_pos: f64, f_neg: f64, m: Margins) -> Hinge {
    let margin = m.gamma1 + f_pos - f_neg;
    let limit = f_pos - m.gamma2;
    let mut h = Hinge {
        value: 0.0,
        d_pos: 0.0,
        d_neg: 0.0,
    };
    if margin > 0.0 {
        h.value += margin;
        h.d_pos += 1.0;
        h.d_neg -= 1.0;
    }
    if limit > 0.0 {
        h.value += m.alpha * limit;
        h.d_pos += m.alpha;
    }
    h
}

fn unit(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    n
}

/// `‖h + r − t‖₂`
pub fn score_triple(p: &ModelParams, side: Side, t: &Triple) -> f64 {
    translation(p, side, t).1
}

/// Unit direction of `h + r − t` and its norm.
fn translation(p: &ModelParams, side: Side, t: &Triple) -> (Vec<f64>, f64) {
    let e = p.entities(side);
    let h = e.row(t.head.index());
    let r = p.relations(side).row(t.relation.index());
    let tl = e.row(t.tail.index());
    let mut v: Vec<f64> = h.iter().zip(r).zip(tl).map(|((h, r), t)| h + r - t).collect();
    let n = unit(&mut v);
    (v, n)
}

fn translation_grad(g: &mut Gradients, side: Side, t: &Triple, coef: f64, u: &[f64]) {
    if coef == 0.0 {
        return;
    }
    g.ent(side).add(t.head.index(), coef, u);
    g.rel(side).add(t.relation.index(), coef, u);
    g.ent(side).add(t.tail.index(), -coef, u);
}

/// Margin+limit loss over `(positive, negative)` triple pairs of one graph.
pub fn loss_entity(
    p: &ModelParams,
    side: Side,
    pairs: &[(Triple, Triple)],
    m: Margins,
    scale: f64,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let mut total = 0.0;
    for (pos, neg) in pairs {
        let (up, fp) = translation(p, side, pos);
        let (un, fneg) = translation(p, side, neg);
        let h = hinge_pair(fp, fneg, m);
        total += h.value;
        if let Some(g) = grads.as_deref_mut() {
            translation_grad(g, side, pos, scale * h.d_pos, &up);
            translation_grad(g, side, neg, scale * h.d_neg, &un);
        }
    }
    total
}

/// Forward state of `‖tanh(W·x + b) − target‖₂`.
struct Projection {
    act: Vec<f64>,
    dir: Vec<f64>,
    dist: f64,
}

fn project(w: &Matrix, b: &[f64], x: &[f64], target: &[f64]) -> Projection {
    let mut act = w.matvec(x);
    for (a, bi) in act.iter_mut().zip(b) {
        *a = (*a + bi).tanh();
    }
    let mut dir: Vec<f64> = act.iter().zip(target).map(|(a, t)| a - t).collect();
    let dist = unit(&mut dir);
    Projection { act, dir, dist }
}

/// Gradients of `coef · ‖tanh(W·x + b) − target‖₂`.
struct ProjectionGrad {
    dw: Vec<f64>,
    db: Vec<f64>,
    dx: Vec<f64>,
    dtarget: Vec<f64>,
}

fn project_backward(p: &Projection, w: &Matrix, x: &[f64], coef: f64) -> ProjectionGrad {
    let dz: Vec<f64> = p
        .dir
        .iter()
        .zip(&p.act)
        .map(|(u, a)| coef * u * (1.0 - a * a))
        .collect();
    let mut dw = vec![0.0; w.rows() * w.cols()];
    for (r, &g) in dz.iter().enumerate() {
        if g != 0.0 {
            axpy(&mut dw[r * w.cols()..(r + 1) * w.cols()], g, x);
        }
    }
    ProjectionGrad {
        dw,
        dx: w.matvec_t(&dz),
        db: dz,
        dtarget: p.dir.iter().map(|u| -coef * u).collect(),
    }
}

/// `‖tanh(W_o·c_h + b_o) − c_t‖₂`
pub fn score_subclass(p: &ModelParams, child: ClassId, parent: ClassId) -> f64 {
    project(&p.w_o, &p.b_o, p.cls.row(child.index()), p.cls.row(parent.index())).dist
}

fn subclass_grad(g: &mut Gradients, p: &ModelParams, pair: (ClassId, ClassId), coef: f64) {
    if coef == 0.0 {
        return;
    }
    let x = p.cls.row(pair.0.index());
    let pr = project(&p.w_o, &p.b_o, x, p.cls.row(pair.1.index()));
    let d = project_backward(&pr, &p.w_o, x, coef);
    axpy(g.w_o.slice_mut(), 1.0, &d.dw);
    axpy(g.b_o.slice_mut(), 1.0, &d.db);
    g.cls.add(pair.0.index(), 1.0, &d.dx);
    g.cls.add(pair.1.index(), 1.0, &d.dtarget);
}

/// Margin+limit loss over `(positive, negative)` subclass pairs.
pub fn loss_ontology(
    p: &ModelParams,
    pairs: &[((ClassId, ClassId), (ClassId, ClassId))],
    m: Margins,
    scale: f64,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let mut total = 0.0;
    for &(pos, neg) in pairs {
        let h = hinge_pair(score_subclass(p, pos.0, pos.1), score_subclass(p, neg.0, neg.1), m);
        total += h.value;
        if let Some(g) = grads.as_deref_mut() {
            subclass_grad(g, p, pos, scale * h.d_pos);
            subclass_grad(g, p, neg, scale * h.d_neg);
        }
    }
    total
}

/// An entity-to-class link on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Membership {
    pub side: Side,
    pub entity: EntityId,
    pub class: ClassId,
}

/// `‖tanh(W_m·e + b_m) − c‖₂`
pub fn score_membership(p: &ModelParams, side: Side, e: EntityId, c: ClassId) -> f64 {
    project(&p.w_m, &p.b_m, p.entities(side).row(e.index()), p.cls.row(c.index())).dist
}

fn membership_grad(g: &mut Gradients, p: &ModelParams, b: &Membership, coef: f64) {
    if coef == 0.0 {
        return;
    }
    let x = p.entities(b.side).row(b.entity.index());
    let pr = project(&p.w_m, &p.b_m, x, p.cls.row(b.class.index()));
    let d = project_backward(&pr, &p.w_m, x, coef);
    axpy(g.w_m.slice_mut(), 1.0, &d.dw);
    axpy(g.b_m.slice_mut(), 1.0, &d.db);
    g.ent(b.side).add(b.entity.index(), 1.0, &d.dx);
    g.cls.add(b.class.index(), 1.0, &d.dtarget);
}

/// Margin+limit loss over `(positive, negative)` membership pairs.
pub fn loss_membership(
    p: &ModelParams,
    pairs: &[(Membership, Membership)],
    m: Margins,
    scale: f64,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let mut total = 0.0;
    for (pos, neg) in pairs {
        let fp = score_membership(p, pos.side, pos.entity, pos.class);
        let fneg = score_membership(p, neg.side, neg.entity, neg.class);
        let h = hinge_pair(fp, fneg, m);
        total += h.value;
        if let Some(g) = grads.as_deref_mut() {
            membership_grad(g, p, pos, scale * h.d_pos);
            membership_grad(g, p, neg, scale * h.d_neg);
        }
    }
    total
}

/// `−Σ_{i<j, m_ij>0} m_ij · log max(1 − cos(c_i, c_j), δ)`
pub fn loss_confliction(
    ccm: &ClassConflictMatrix,
    cls: &Matrix,
    scale: f64,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let norms: Vec<f64> = (0..cls.rows()).map(|r| norm(cls.row(r))).collect();
    let mut total = 0.0;
    for (a, b, m) in ccm.nonzero() {
        let (i, j) = (a.index(), b.index());
        let (ni, nj) = (norms[i], norms[j]);
        if ni == 0.0 || nj == 0.0 {
            // cos taken as 0: log(1) contributes nothing
            continue;
        }
        let (ci, cj) = (cls.row(i), cls.row(j));
        let cos = dot(ci, cj) / (ni * nj);
        let d = 1.0 - cos;
        if d < CONFLICT_DELTA {
            total -= m * CONFLICT_DELTA.ln();
            continue;
        }
        total -= m * d.ln();
        if let Some(g) = grads.as_deref_mut() {
            // ∂L/∂c_i = (m/d)·∂cos/∂c_i, ∂cos/∂c_i = c_j/(|c_i||c_j|) − cos·c_i/|c_i|²
            let k = scale * m / d;
            let gi = g.cls.row(i);
            axpy(gi, k / (ni * nj), cj);
            axpy(gi, -k * cos / (ni * ni), ci);
            let gj = g.cls.row(j);
            axpy(gj, k / (ni * nj), ci);
            axpy(gj, -k * cos / (nj * nj), cj);
        }
    }
    total
}

/// `‖W_a·e_1 − e_2‖₂`
pub fn score_alignment(p: &ModelParams, e1: EntityId, e2: EntityId) -> f64 {
    alignment_residual(p, e1, e2).1
}

fn alignment_residual(p: &ModelParams, e1: EntityId, e2: EntityId) -> (Vec<f64>, f64) {
    let mut v = p.w_a.matvec(p.ent1.row(e1.index()));
    axpy(&mut v, -1.0, p.ent2.row(e2.index()));
    let n = unit(&mut v);
    (v, n)
}

/// `Σ ‖W_a·e_1 − e_2‖₂` over seed pairs.
pub fn loss_alignment(
    p: &ModelParams,
    seeds: &[(EntityId, EntityId)],
    scale: f64,
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let mut total = 0.0;
    let d = p.w_a.cols();
    for &(e1, e2) in seeds {
        let (u, f) = alignment_residual(p, e1, e2);
        total += f;
        if let Some(g) = grads.as_deref_mut() {
            if f == 0.0 {
                continue;
            }
            let x = p.ent1.row(e1.index());
            let dw = g.w_a.slice_mut();
            for (r, &ur) in u.iter().enumerate() {
                axpy(&mut dw[r * d..(r + 1) * d], scale * ur, x);
            }
            g.ent(Side::Left).add(e1.index(), scale, &p.w_a.matvec_t(&u));
            g.ent(Side::Right).add(e2.index(), -scale, &u);
        }
    }
    total
}
