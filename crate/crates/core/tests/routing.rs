//! Fine-grained class routing and system-mapping overrides on a hand-built
//! pair of ten-class ontologies with three equivalence links.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ontoea::ingest::read_subclass_file;
use ontoea::kg::{Ontology, OntologyBuilder};
use ontoea::merge::{
    apply_system_mappings, prepare_directory, read_system_mappings, route_fine_grained,
    ClassMapping, PrepareOutcome, Provenance, DEFAULT_SYSTEM_THRESHOLD,
};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/routing")
}

fn ontology(file: &str) -> Ontology {
    let mut b = OntologyBuilder::new();
    read_subclass_file(&mut b, &fixture().join(file)).unwrap();
    b.build().unwrap()
}

fn lines(path: &Path) -> BTreeSet<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

fn table(m: &ClassMapping, o1: &Ontology, o2: &Ontology) -> BTreeSet<String> {
    m.iter()
        .map(|(s, d, p)| format!("{}\t{}\t{p}", o2.class_name(s), o1.class_name(d)))
        .collect()
}

#[test]
fn routing_then_system_overrides_reproduce_the_hand_derived_table() {
    let o1 = ontology("onto_subclass_1.tsv");
    let o2 = ontology("onto_subclass_2.tsv");
    assert_eq!((o1.num_classes(), o2.num_classes()), (10, 10));
    let equiv: Vec<_> = fs::read_to_string(fixture().join("onto_equiv.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (o2.class(a).unwrap(), o1.class(b).unwrap())
        })
        .collect();
    assert_eq!(equiv.len(), 3);

    let routed = route_fine_grained(&o1, &o2, &equiv).unwrap();
    assert_eq!(routed.len(), o2.num_classes());
    let system = read_system_mappings(
        &fixture().join("system_mappings.tsv"),
        &o1,
        &o2,
        DEFAULT_SYSTEM_THRESHOLD,
    )
    .unwrap();
    let merged = apply_system_mappings(&routed, &system);
    assert_eq!(
        table(&merged, &o1, &o2),
        lines(&fixture().join("expected_class_mappings.tsv"))
    );
}

#[test]
fn routing_alone_picks_the_deepest_reachable_class() {
    let o1 = ontology("onto_subclass_1.tsv");
    let o2 = ontology("onto_subclass_2.tsv");
    let c1 = |n: &str| o1.class(n).unwrap();
    let c2 = |n: &str| o2.class(n).unwrap();
    // Human reaches {Person, Agent}; Person is deeper.
    let routed = route_fine_grained(&o1, &o2, &[(c2("o2:Human"), c1("Person"))]).unwrap();
    assert_eq!(routed.get(c2("o2:Footballer")), Some(c1("Person")));
    assert_eq!(routed.get(c2("o2:Town")), Some(o1.root()));
    assert_eq!(routed.provenance(c2("o2:Town")), Some(Provenance::Routing));
    // Equal depth: the smaller handle wins.
    let tie = route_fine_grained(
        &o1,
        &o2,
        &[(c2("o2:Town"), c1("Country")), (c2("o2:Town"), c1("City"))],
    )
    .unwrap();
    assert_eq!(tie.get(c2("o2:Town")), Some(c1("City").min(c1("Country"))));
}

#[test]
fn prepare_writes_mapping_and_merged_memberships() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixture()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        if !name.starts_with("expected") {
            fs::copy(&path, dir.path().join(name)).unwrap();
        }
    }
    let outcome = prepare_directory(dir.path(), DEFAULT_SYSTEM_THRESHOLD).unwrap();
    assert_eq!(
        outcome,
        PrepareOutcome::Merged {
            classes_mapped: 10,
            mapped_to_root: 3,
            memberships_written: 6,
        }
    );
    assert_eq!(
        lines(&dir.path().join("class_mappings.tsv")),
        lines(&fixture().join("expected_class_mappings.tsv"))
    );
    assert_eq!(
        lines(&dir.path().join("memberships_2_merged.tsv")),
        lines(&fixture().join("expected_memberships_2_merged.tsv"))
    );
}

#[test]
fn prepare_requires_equivalence_or_system_input() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["onto_subclass_1.tsv", "onto_subclass_2.tsv", "memberships_2.tsv"] {
        fs::copy(fixture().join(name), dir.path().join(name)).unwrap();
    }
    assert!(matches!(
        prepare_directory(dir.path(), DEFAULT_SYSTEM_THRESHOLD),
        Err(ontoea::Error::MissingFile(_))
    ));
}
