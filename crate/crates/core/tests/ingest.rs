//! Loading benchmark directories from disk.

use std::fs;
use std::path::Path;

use ontoea::ingest::{
    load_dataset, SplitRatio, ENT_LINKS, ENT_LINK_SPLITS, MEMBERSHIPS, ONTO_SUBCLASS, REL_TRIPLES,
};
use ontoea::kg::{EntityId, ROOT_CLASS};
use ontoea::toy::{generate, ToyConfig};
use ontoea::Error;

fn toy_dir(cfg: &ToyConfig) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate(cfg).unwrap().write(dir.path()).unwrap();
    dir
}

fn append(path: &Path, line: &str) {
    let mut text = fs::read_to_string(path).unwrap();
    text.push_str(line);
    fs::write(path, text).unwrap();
}

#[test]
fn generated_benchmark_loads_with_default_split() {
    let dir = toy_dir(&ToyConfig::default());
    let d = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap();
    assert_eq!(d.kg1.num_entities(), 200);
    assert_eq!(d.kg2.num_entities(), 200);
    assert_eq!((d.train.len(), d.valid.len(), d.test.len()), (40, 20, 140));
    // root, two branches, six leaves
    assert_eq!(d.ontology.num_classes(), 9);
    assert_eq!(d.ontology.class_name(d.ontology.root()), ROOT_CLASS);
    assert_eq!(d.ontology.disjoint_pairs().len(), 16);
    assert_eq!(d.memberships1.num_links(), 200);
    d.check_splits_disjoint().unwrap();
}

#[test]
fn split_depends_only_on_the_seed() {
    let dir = toy_dir(&ToyConfig::default());
    let a = load_dataset(dir.path(), SplitRatio::default(), 3).unwrap();
    let b = load_dataset(dir.path(), SplitRatio::default(), 3).unwrap();
    let c = load_dataset(dir.path(), SplitRatio::default(), 4).unwrap();
    assert_eq!(a.train.pairs(), b.train.pairs());
    assert_ne!(a.train.pairs(), c.train.pairs());
    let mut all: Vec<_> = [&a.train, &a.valid, &a.test]
        .iter()
        .flat_map(|s| s.pairs().to_vec())
        .collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 200);
}

#[test]
fn presplit_files_are_used_verbatim() {
    let dir = toy_dir(&ToyConfig {
        entities: 30,
        ..ToyConfig::default()
    });
    let links = fs::read_to_string(dir.path().join(ENT_LINKS)).unwrap();
    let lines: Vec<&str> = links.lines().collect();
    let parts = [&lines[..5], &lines[5..8], &lines[8..]];
    for (name, part) in ENT_LINK_SPLITS.iter().zip(parts) {
        fs::write(dir.path().join(name), part.join("\n") + "\n").unwrap();
    }
    fs::remove_file(dir.path().join(ENT_LINKS)).unwrap();
    let d = load_dataset(dir.path(), SplitRatio::default(), 9).unwrap();
    assert_eq!((d.train.len(), d.valid.len(), d.test.len()), (5, 3, 22));
    let (a, b) = d.train.pairs()[0];
    let first: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(d.kg1.entity_name(a), first[0]);
    assert_eq!(d.kg2.entity_name(b), first[1]);
}

#[test]
fn missing_required_file_is_named() {
    let dir = toy_dir(&ToyConfig::default());
    fs::remove_file(dir.path().join(REL_TRIPLES[1])).unwrap();
    match load_dataset(dir.path(), SplitRatio::default(), 1) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with(REL_TRIPLES[1])),
        other => panic!("expected MissingFile, got {other:?}"),
    }
}

#[test]
fn link_to_unknown_entity_is_a_parse_error() {
    let dir = toy_dir(&ToyConfig::default());
    append(&dir.path().join(ENT_LINKS), "kg1:E0\tkg2:Nobody\n");
    let err = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 201, .. }), "{err}");
}

#[test]
fn membership_of_unknown_entity_is_rejected() {
    let dir = toy_dir(&ToyConfig::default());
    append(&dir.path().join(MEMBERSHIPS[0]), "kg1:Nobody\tonto:Leaf0_0\n");
    assert!(load_dataset(dir.path(), SplitRatio::default(), 1).is_err());
}

#[test]
fn malformed_triple_line_reports_its_line() {
    let dir = toy_dir(&ToyConfig::default());
    append(&dir.path().join(REL_TRIPLES[0]), "only\ttwo\n");
    let err = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
}

#[test]
fn subclass_cycle_is_rejected() {
    let dir = toy_dir(&ToyConfig::default());
    append(&dir.path().join(ONTO_SUBCLASS[0]), "onto:Branch0\tonto:Leaf0_0\n");
    let err = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap_err();
    assert!(matches!(err, Error::OntologyCycle(_)), "{err}");
}

#[test]
fn second_ontology_requires_prepared_memberships() {
    let dir = toy_dir(&ToyConfig::default());
    fs::write(dir.path().join(ONTO_SUBCLASS[1]), "o2:A\towl:Thing\n").unwrap();
    let err = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)), "{err}");
}

#[test]
fn bad_split_ratio_is_rejected() {
    let dir = toy_dir(&ToyConfig::default());
    let ratio = SplitRatio {
        train: 0.5,
        valid: 0.5,
        test: 0.5,
    };
    assert!(matches!(
        load_dataset(dir.path(), ratio, 1),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn untyped_entities_default_to_the_root() {
    let dir = toy_dir(&ToyConfig {
        untyped_fraction: 0.5,
        ..ToyConfig::default()
    });
    let d = load_dataset(dir.path(), SplitRatio::default(), 1).unwrap();
    let root = d.ontology.root();
    let untyped = d.memberships1.root_only_count(root);
    assert!(untyped > 50 && untyped < 150, "{untyped}");
    let e = (0..200)
        .map(EntityId::from)
        .find(|&e| d.memberships1.declared_classes(e).unwrap() == [root])
        .unwrap();
    assert!(!d.memberships1.has_link(e, d.ontology.class("onto:Leaf0_0").unwrap()));
}
