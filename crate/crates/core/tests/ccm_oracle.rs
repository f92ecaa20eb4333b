//! Class conflict matrix against a brute-force evaluation of its rules.

mod common;

use common::{assert_ccm_matches_oracle, build_case, oracle_ancestors, random_case};
use ontoea::ccm::{ancestor_set, build_ccm, is_conflicted, ClassConflictMatrix};
use ontoea::kg::{ClassId, EntityId, MappingSet, MembershipSet, OntologyBuilder, ROOT_CLASS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_ontologies_match_oracle_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let raw = random_case(&mut rng, 50);
        let built = build_case(&raw);
        let ccm = build_ccm(&built.ontology, &built.m1, &built.m2, &built.seeds).unwrap();
        assert_ccm_matches_oracle(&raw, &ccm);
        for c in 0..raw.n {
            let got: Vec<usize> = ancestor_set(ClassId::from(c), &built.ontology)
                .unwrap()
                .into_iter()
                .map(ClassId::index)
                .collect();
            let want: Vec<usize> = oracle_ancestors(&raw, c).into_iter().collect();
            assert_eq!(got, want, "ancestors of {c}");
        }
    }
}

#[test]
fn diamond_ancestors() {
    let mut b = OntologyBuilder::new();
    b.add_subclass("D", "B");
    b.add_subclass("D", "C");
    b.add_subclass("B", ROOT_CLASS);
    b.add_subclass("C", ROOT_CLASS);
    let o = b.build().unwrap();
    let names: Vec<&str> = ancestor_set(o.class("D").unwrap(), &o)
        .unwrap()
        .into_iter()
        .map(|c| o.class_name(c))
        .collect();
    let mut want = vec!["D", "B", "C", ROOT_CLASS];
    want.sort_by_key(|n| o.class(n).unwrap());
    assert_eq!(names, want);
    assert_eq!(ancestor_set(o.root(), &o).unwrap().len(), 1);
}

#[test]
fn conflict_threshold_examples() {
    // C -> B -> root, D -> root: m(C, D) = 1 - 1/4
    let mut b = OntologyBuilder::new();
    b.add_subclass("C", "B");
    b.add_subclass("B", ROOT_CLASS);
    b.add_subclass("D", ROOT_CLASS);
    b.add_subclass("P", ROOT_CLASS);
    b.add_subclass("Q", ROOT_CLASS);
    b.add_disjoint("P", "Q");
    let o = b.build().unwrap();
    let id = |n: &str| o.class(n).unwrap();
    let m1 = MembershipSet::new(3, [(EntityId(0), id("C")), (EntityId(1), id("P")), (EntityId(2), id("D"))], o.root());
    let m2 = MembershipSet::new(3, [(EntityId(0), id("D")), (EntityId(1), id("Q")), (EntityId(2), id("D"))], o.root());
    let ccm = build_ccm(&o, &m1, &m2, &MappingSet::default()).unwrap();
    assert_eq!(ccm.get(id("C"), id("D")), 0.75);
    let conflicted = |a: u32, b: u32, tau: f64| is_conflicted(EntityId(a), EntityId(b), &m1, &m2, &ccm, tau).unwrap();
    assert!(!conflicted(0, 0, 0.9));
    assert!(conflicted(0, 0, 0.7));
    assert!(conflicted(1, 1, 0.9));
    assert!(conflicted(1, 1, 1.0));
    assert!(!conflicted(2, 2, 0.01));
}

fn degrees(ccm: &ClassConflictMatrix) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let n = ccm.num_classes();
    (0..n).flat_map(move |i| (0..n).map(move |j| (i, j, ccm.get(ClassId::from(i), ClassId::from(j)))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_is_symmetric_bounded_with_zero_diagonal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_case(&mut rng, 30);
        let built = build_case(&raw);
        let ccm = build_ccm(&built.ontology, &built.m1, &built.m2, &built.seeds).unwrap();
        for (i, j, m) in degrees(&ccm) {
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert_eq!(m, ccm.get(ClassId::from(j), ClassId::from(i)));
            if i == j {
                prop_assert_eq!(m, 0.0);
            }
        }
    }

    #[test]
    fn disjointness_beats_shared_members(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = random_case(&mut rng, 20);
        prop_assume!(raw.n >= 3);
        let (a, b) = (1, 2);
        raw.disjoint.push((a, b));
        raw.members1.push(vec![a, b]);
        let built = build_case(&raw);
        let ccm = build_ccm(&built.ontology, &built.m1, &built.m2, &built.seeds).unwrap();
        prop_assert_eq!(ccm.get(ClassId::from(a), ClassId::from(b)), 1.0);
    }

    #[test]
    fn jaccard_rule_is_below_one_and_zero_only_for_equal_sets(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = random_case(&mut rng, 30);
        raw.disjoint.clear();
        raw.members1.clear();
        raw.members2.clear();
        raw.seeds.clear();
        let built = build_case(&raw);
        let ccm = build_ccm(&built.ontology, &built.m1, &built.m2, &built.seeds).unwrap();
        for (i, j, m) in degrees(&ccm) {
            prop_assert!(m < 1.0);
            let same = oracle_ancestors(&raw, i) == oracle_ancestors(&raw, j);
            prop_assert_eq!(m == 0.0, same, "pair ({}, {})", i, j);
        }
    }

    #[test]
    fn chain_degrees_grow_with_distance(len in 2usize..12) {
        let mut b = OntologyBuilder::new();
        b.add_subclass("c1", ROOT_CLASS);
        for k in 2..=len {
            b.add_subclass(&format!("c{k}"), &format!("c{}", k - 1));
        }
        let o = b.build().unwrap();
        let m = MembershipSet::new(0, [], o.root());
        let ccm = build_ccm(&o, &m, &m, &MappingSet::default()).unwrap();
        let c = |k: usize| o.class(&format!("c{k}")).unwrap();
        for i in 1..=len {
            for j in i..len {
                prop_assert!(ccm.get(c(i), c(j)) <= ccm.get(c(i), c(j + 1)));
            }
        }
    }
}
