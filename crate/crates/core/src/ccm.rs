//! Class conflict matrix.
//!
//! For each unordered class pair the first matching rule sets the degree:
//!
//! 1. same class: 0
//! 2. declared disjoint: 1
//! 3. a shared member, or a train seed pair whose entities are declared in
//!    the two classes: 0
//! 4. otherwise the Jaccard distance of the two ancestor sets.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::kg::{ClassId, EntityId, MappingSet, MembershipSet, Ontology};
use crate::{Error, Result};

/// Default threshold above which a mapping counts as class-conflicted.
pub const DEFAULT_TAU: f64 = 0.9;

/// Symmetric conflict degrees, stored strictly above the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConflictMatrix {
    n: usize,
    values: Vec<f64>,
}

impl ClassConflictMatrix {
    pub fn zeros(n: usize) -> Self {
        ClassConflictMatrix {
            n,
            values: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, a: ClassId, b: ClassId) -> f64 {
        let (i, j) = (a.index().min(b.index()), a.index().max(b.index()));
        if i == j {
            0.0
        } else {
            self.values[self.offset(i, j)]
        }
    }

    pub fn set(&mut self, a: ClassId, b: ClassId, v: f64) {
        assert!(a != b, "diagonal is fixed at 0");
        assert!((0.0..=1.0).contains(&v), "conflict degree out of range: {v}");
        let (i, j) = (a.index().min(b.index()), a.index().max(b.index()));
        let k = self.offset(i, j);
        self.values[k] = v;
    }

    /// Raw upper-triangular storage, row by row.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(i, j, m_ij)` for every `i < j` with `m_ij > 0`.
    pub fn nonzero(&self) -> impl Iterator<Item = (ClassId, ClassId, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).filter_map(move |j| {
                let v = self.values[self.offset(i, j)];
                (v > 0.0).then_some((ClassId::from(i), ClassId::from(j), v))
            })
        })
    }

    /// Writes `class1⟨TAB⟩class2⟨TAB⟩degree` for every stored pair.
    pub fn write_tsv(&self, path: &Path, onto: &Ontology) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let (a, b) = (ClassId::from(i), ClassId::from(j));
                out += &format!(
                    "{}\t{}\t{}\n",
                    onto.class_name(a),
                    onto.class_name(b),
                    self.get(a, b)
                );
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `c`, every class on a path from `c` up to the root, and the root.
pub fn ancestor_set(c: ClassId, o: &Ontology) -> Result<BTreeSet<ClassId>> {
    if !o.contains(c) {
        return Err(Error::UnknownClass(format!("#{}", c.0)));
    }
    let mut seen = BTreeSet::from([c, o.root()]);
    let mut stack = vec![c];
    while let Some(x) = stack.pop() {
        for &p in o.parents(x) {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    Ok(seen)
}

/// Ancestor sets as bitsets, one row of `words` u64s per class.
struct AncestorBits {
    words: usize,
    bits: Vec<u64>,
}

impl AncestorBits {
    fn new(o: &Ontology) -> Self {
        let n = o.num_classes();
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        for c in 0..n {
            let row = &mut bits[c * words..(c + 1) * words];
            for a in ancestor_set(ClassId::from(c), o).expect("class in range") {
                row[a.index() / 64] |= 1 << (a.index() % 64);
            }
        }
        AncestorBits { words, bits }
    }

    fn row(&self, c: usize) -> &[u64] {
        &self.bits[c * self.words..(c + 1) * self.words]
    }

    fn jaccard_distance(&self, a: usize, b: usize) -> f64 {
        let (mut inter, mut union) = (0u32, 0u32);
        for (x, y) in self.row(a).iter().zip(self.row(b)) {
            inter += (x & y).count_ones();
            union += (x | y).count_ones();
        }
        1.0 - f64::from(inter) / f64::from(union)
    }
}

/// Class pairs that rule 3 zeroes: co-declared on one entity, or joined by a
/// seed pair. Stored as `(min, max)`.
fn non_conflicting_pairs(
    m1: &MembershipSet,
    m2: &MembershipSet,
    seeds: &MappingSet,
) -> Result<HashSet<(u32, u32)>> {
    let mut out = HashSet::new();
    let mut add = |a: ClassId, b: ClassId| {
        if a != b {
            out.insert((a.0.min(b.0), a.0.max(b.0)));
        }
    };
    for m in [m1, m2] {
        for e in 0..m.num_entities() {
            let cs = m.declared_classes(EntityId::from(e))?;
            for (k, &a) in cs.iter().enumerate() {
                for &b in &cs[k + 1..] {
                    add(a, b);
                }
            }
        }
    }
    for &(e1, e2) in seeds.pairs() {
        for &a in m1.declared_classes(e1)? {
            for &b in m2.declared_classes(e2)? {
                add(a, b);
            }
        }
    }
    Ok(out)
}

/// Builds the conflict matrix. `seeds` must be the training split only.
pub fn build_ccm(
    o: &Ontology,
    m1: &MembershipSet,
    m2: &MembershipSet,
    seeds: &MappingSet,
) -> Result<ClassConflictMatrix> {
    let n = o.num_classes();
    let ancestors = AncestorBits::new(o);
    let linked = non_conflicting_pairs(m1, m2, seeds)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let (a, b) = (ClassId::from(i), ClassId::from(j));
                    if o.is_disjoint(a, b) {
                        1.0
                    } else if linked.contains(&(a.0, b.0)) {
                        0.0
                    } else {
                        ancestors.jaccard_distance(i, j)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ClassConflictMatrix {
        n,
        values: rows.concat(),
    })
}

/// Whether every pairing of the two entities' declared classes conflicts at
/// level `tau` or above.
pub fn is_conflicted(
    e1: EntityId,
    e2: EntityId,
    m1: &MembershipSet,
    m2: &MembershipSet,
    ccm: &ClassConflictMatrix,
    tau: f64,
) -> Result<bool> {
    let c1 = m1.declared_classes(e1)?;
    let c2 = m2.declared_classes(e2)?;
    let min = c1
        .iter()
        .flat_map(|&a| c2.iter().map(move |&b| ccm.get(a, b)))
        .fold(f64::INFINITY, f64::min);
    Ok(min >= tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::OntologyBuilder;

    fn onto(pairs: &[(&str, &str)], disjoint: &[(&str, &str)]) -> Ontology {
        let mut b = OntologyBuilder::new();
        for (c, p) in pairs {
            b.add_subclass(c, p);
        }
        for (x, y) in disjoint {
            b.add_disjoint(x, y);
        }
        b.build().unwrap()
    }

    fn names(o: &Ontology, s: &BTreeSet<ClassId>) -> Vec<String> {
        let mut v: Vec<_> = s.iter().map(|&c| o.class_name(c).to_owned()).collect();
        v.sort();
        v
    }

    #[test]
    fn ancestor_sets_follow_all_paths() {
        let o = onto(&[("B", "owl:Thing"), ("C", "B")], &[]);
        assert_eq!(names(&o, &ancestor_set(o.root(), &o).unwrap()), ["owl:Thing"]);
        assert_eq!(
            names(&o, &ancestor_set(o.class("C").unwrap(), &o).unwrap()),
            ["B", "C", "owl:Thing"]
        );
        let d = onto(
            &[("B", "owl:Thing"), ("C", "owl:Thing"), ("D", "B"), ("D", "C")],
            &[],
        );
        assert_eq!(
            names(&d, &ancestor_set(d.class("D").unwrap(), &d).unwrap()),
            ["B", "C", "D", "owl:Thing"]
        );
        assert!(ancestor_set(ClassId(99), &d).is_err());
    }

    fn empty(n: usize, root: ClassId) -> MembershipSet {
        MembershipSet::new(n, [], root)
    }

    #[test]
    fn rules_apply_in_order() {
        let o = onto(
            &[("B", "owl:Thing"), ("C", "B"), ("D", "owl:Thing"), ("Person", "owl:Thing"), ("Organization", "owl:Thing")],
            &[("Person", "Organization")],
        );
        let c = |n: &str| o.class(n).unwrap();
        let m = empty(1, o.root());
        let ccm = build_ccm(&o, &m, &m, &MappingSet::default()).unwrap();
        assert_eq!(ccm.get(c("C"), c("C")), 0.0);
        assert_eq!(ccm.get(c("Person"), c("Organization")), 1.0);
        // S(C) = {C,B,root}, S(D) = {D,root}: 1 - 1/4
        assert_eq!(ccm.get(c("C"), c("D")), 0.75);
        assert_eq!(ccm.get(c("D"), c("C")), 0.75);
    }

    #[test]
    fn shared_members_and_seeds_zero_the_degree() {
        let o = onto(
            &[("A", "owl:Thing"), ("B", "owl:Thing"), ("X", "owl:Thing"), ("Y", "owl:Thing")],
            &[("A", "B")],
        );
        let c = |n: &str| o.class(n).unwrap();
        let m1 = MembershipSet::new(2, [(EntityId(0), c("A")), (EntityId(0), c("B")), (EntityId(1), c("X"))], o.root());
        let m2 = MembershipSet::new(1, [(EntityId(0), c("Y"))], o.root());
        let seeds = MappingSet::new(vec![(EntityId(1), EntityId(0))]).unwrap();
        let ccm = build_ccm(&o, &m1, &m2, &seeds).unwrap();
        // disjointness beats the shared member
        assert_eq!(ccm.get(c("A"), c("B")), 1.0);
        assert_eq!(ccm.get(c("X"), c("Y")), 0.0);
        assert!(ccm.get(c("A"), c("X")) > 0.0);
        let without = build_ccm(&o, &m1, &m2, &MappingSet::default()).unwrap();
        assert!(without.get(c("X"), c("Y")) > 0.0);
    }

    #[test]
    fn conflict_test_uses_min_over_declared_pairs() {
        let o = onto(
            &[("B", "owl:Thing"), ("C", "B"), ("D", "owl:Thing"), ("P", "owl:Thing"), ("Q", "owl:Thing")],
            &[("P", "Q")],
        );
        let c = |n: &str| o.class(n).unwrap();
        let m1 = MembershipSet::new(3, [(EntityId(0), c("C")), (EntityId(1), c("P")), (EntityId(2), c("D"))], o.root());
        let m2 = MembershipSet::new(3, [(EntityId(0), c("D")), (EntityId(1), c("Q")), (EntityId(2), c("D"))], o.root());
        let ccm = build_ccm(&o, &m1, &m2, &MappingSet::default()).unwrap();
        let conflicted = |a, b, tau| is_conflicted(EntityId(a), EntityId(b), &m1, &m2, &ccm, tau).unwrap();
        assert!(!conflicted(2, 2, 0.01));
        assert!(conflicted(1, 1, 0.9));
        assert!(!conflicted(0, 0, 0.9));
        assert!(conflicted(0, 0, 0.7));
    }

    #[test]
    fn storage_round_trips_every_pair() {
        let mut m = ClassConflictMatrix::zeros(5);
        for i in 0..5u32 {
            for j in (i + 1)..5 {
                m.set(ClassId(i), ClassId(j), f64::from(i * 5 + j) / 25.0);
            }
        }
        for i in 0..5u32 {
            assert_eq!(m.get(ClassId(i), ClassId(i)), 0.0);
            for j in (i + 1)..5 {
                let v = f64::from(i * 5 + j) / 25.0;
                assert_eq!(m.get(ClassId(i), ClassId(j)), v);
                assert_eq!(m.get(ClassId(j), ClassId(i)), v);
            }
        }
    }

    #[test]
    fn chain_degrees_grow_with_distance() {
        let chain: Vec<(String, String)> = (1..8)
            .map(|i| {
                let parent = if i == 1 { "owl:Thing".to_owned() } else { format!("c{}", i - 1) };
                (format!("c{i}"), parent)
            })
            .collect();
        let pairs: Vec<(&str, &str)> = chain.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let o = onto(&pairs, &[]);
        let m = empty(1, o.root());
        let ccm = build_ccm(&o, &m, &m, &MappingSet::default()).unwrap();
        let c = |i: usize| o.class(&format!("c{i}")).unwrap();
        for i in 1..8 {
            let mut prev = 0.0;
            for j in i..8 {
                let v = ccm.get(c(i), c(j));
                assert!(v >= prev && v < 1.0);
                prev = v;
            }
        }
    }
}
