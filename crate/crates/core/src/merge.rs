//! Merging a second ontology into the first.
//!
//! Every class of ontology 2 is routed through the subclass graphs joined by
//! equivalence links and mapped to the deepest ontology-1 class it reaches.
//! Mappings from an external matcher then override the routed ones, and KG2
//! memberships are rewritten onto ontology 1.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::ingest::{
    read_subclass_file, read_tsv, read_tsv_range, CLASS_MAPPINGS, MEMBERSHIPS,
    MERGED_MEMBERSHIPS_2, ONTO_EQUIV, ONTO_SUBCLASS, SYSTEM_MAPPINGS,
};
use crate::kg::{ClassId, EntityId, Interner, MembershipSet, Ontology, OntologyBuilder};
use crate::{Error, Result};

/// Threshold applied to scored matcher output.
pub const DEFAULT_SYSTEM_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Routing,
    System,
    Manual,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Routing => "routing",
            Provenance::System => "system",
            Provenance::Manual => "manual",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routing" => Ok(Provenance::Routing),
            "system" => Ok(Provenance::System),
            "manual" => Ok(Provenance::Manual),
            other => Err(Error::InvalidArgument(format!("unknown provenance {other:?}"))),
        }
    }
}

/// A function from ontology-2 classes to ontology-1 classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassMapping {
    pairs: BTreeMap<ClassId, (ClassId, Provenance)>,
}

impl ClassMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the target of `src`, replacing any earlier entry.
    pub fn insert(&mut self, src: ClassId, dst: ClassId, provenance: Provenance) {
        self.pairs.insert(src, (dst, provenance));
    }

    pub fn get(&self, src: ClassId) -> Option<ClassId> {
        self.pairs.get(&src).map(|&(d, _)| d)
    }

    pub fn provenance(&self, src: ClassId) -> Option<Provenance> {
        self.pairs.get(&src).map(|&(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(source, target, provenance)` ordered by source handle.
    pub fn iter(&self) -> impl Iterator<Item = (ClassId, ClassId, Provenance)> + '_ {
        self.pairs.iter().map(|(&s, &(d, p))| (s, d, p))
    }
}

/// Longest directed walk from each class up to the root.
pub fn depths(o: &Ontology) -> Vec<usize> {
    let n = o.num_classes();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[o.root().index()] = Some(0);
    for start in 0..n {
        let mut stack = vec![ClassId::from(start)];
        while let Some(&c) = stack.last() {
            if depth[c.index()].is_some() {
                stack.pop();
                continue;
            }
            let pending: Vec<ClassId> = o
                .parents(c)
                .iter()
                .copied()
                .filter(|p| depth[p.index()].is_none())
                .collect();
            if pending.is_empty() {
                let d = o
                    .parents(c)
                    .iter()
                    .map(|p| depth[p.index()].unwrap() + 1)
                    .max()
                    .unwrap_or(0);
                depth[c.index()] = Some(d);
                stack.pop();
            } else {
                stack.extend(pending);
            }
        }
    }
    depth.into_iter().map(|d| d.unwrap_or(0)).collect()
}

/// Maps every class of `o2` to the most fine-grained `o1` class reachable
/// from it through `o2` subclass edges, `equiv` links `(o2 class, o1 class)`
/// and `o1` subclass edges. Depth ties go to the smaller handle; classes
/// reaching nothing below the root map to the root.
pub fn route_fine_grained(
    o1: &Ontology,
    o2: &Ontology,
    equiv: &[(ClassId, ClassId)],
) -> Result<ClassMapping> {
    for &(c2, c1) in equiv {
        if !o2.contains(c2) {
            return Err(Error::UnknownClass(format!("ontology 2 #{}", c2.0)));
        }
        if !o1.contains(c1) {
            return Err(Error::UnknownClass(format!("ontology 1 #{}", c1.0)));
        }
    }
    let mut bridges: Vec<Vec<ClassId>> = vec![Vec::new(); o2.num_classes()];
    for &(c2, c1) in equiv {
        bridges[c2.index()].push(c1);
    }
    let depth = depths(o1);
    let mut mapping = ClassMapping::new();
    for start in 0..o2.num_classes() {
        let reached = reachable_in_o1(o1, o2, &bridges, ClassId::from(start));
        let best = reached
            .iter()
            .enumerate()
            .filter(|&(_, &hit)| hit)
            .map(|(c, _)| ClassId::from(c))
            .max_by(|a, b| depth[a.index()].cmp(&depth[b.index()]).then(b.cmp(a)))
            .unwrap_or(o1.root());
        mapping.insert(ClassId::from(start), best, Provenance::Routing);
    }
    Ok(mapping)
}

fn reachable_in_o1(
    o1: &Ontology,
    o2: &Ontology,
    bridges: &[Vec<ClassId>],
    start: ClassId,
) -> Vec<bool> {
    let mut seen2 = vec![false; o2.num_classes()];
    let mut seen1 = vec![false; o1.num_classes()];
    let mut queue = VecDeque::from([start]);
    seen2[start.index()] = true;
    let mut queue1 = VecDeque::new();
    while let Some(c) = queue.pop_front() {
        for &d in &bridges[c.index()] {
            if !seen1[d.index()] {
                seen1[d.index()] = true;
                queue1.push_back(d);
            }
        }
        for &p in o2.parents(c) {
            if !seen2[p.index()] {
                seen2[p.index()] = true;
                queue.push_back(p);
            }
        }
    }
    while let Some(c) = queue1.pop_front() {
        for &p in o1.parents(c) {
            if !seen1[p.index()] {
                seen1[p.index()] = true;
                queue1.push_back(p);
            }
        }
    }
    seen1
}

/// Overrides `base` with every pair of `system`; sources only in `system`
/// are added.
pub fn apply_system_mappings(base: &ClassMapping, system: &ClassMapping) -> ClassMapping {
    let mut out = base.clone();
    for (src, dst, prov) in system.iter() {
        out.insert(src, dst, prov);
    }
    out
}

/// Rewrites KG2 memberships onto `o1`; unmapped classes become the root.
/// The merged ontology is `o1` itself.
pub fn merge(
    o1: &Ontology,
    o2_memberships: &MembershipSet,
    mapping: &ClassMapping,
) -> (Ontology, MembershipSet) {
    let links: Vec<(EntityId, ClassId)> = o2_memberships
        .links()
        .map(|(e, c)| (e, mapping.get(c).unwrap_or(o1.root())))
        .collect();
    let rewritten = MembershipSet::new(o2_memberships.num_entities(), links, o1.root());
    (o1.clone(), rewritten)
}

fn lookup(o: &Ontology, name: &str, which: &str, path: &Path, line: usize) -> Result<ClassId> {
    o.class(name)
        .ok_or_else(|| Error::parse(path, line, format!("class {name} not in ontology {which}")))
}

/// Reads `class2⟨TAB⟩class1[⟨TAB⟩provenance]`; rows without a provenance
/// column get `default`.
pub fn read_class_mappings(
    path: &Path,
    o1: &Ontology,
    o2: &Ontology,
    default: Provenance,
) -> Result<ClassMapping> {
    let mut m = ClassMapping::new();
    for (line, cols) in read_tsv_range(path, 2, 3)? {
        let src = lookup(o2, &cols[0], "2", path, line)?;
        let dst = lookup(o1, &cols[1], "1", path, line)?;
        let prov = match cols.get(2) {
            Some(p) => p.parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?,
            None => default,
        };
        if m.get(src).is_some_and(|d| d != dst) {
            return Err(Error::parse(
                path,
                line,
                format!("class {} mapped twice", cols[0]),
            ));
        }
        m.insert(src, dst, prov);
    }
    Ok(m)
}

/// Reads matcher output `class2⟨TAB⟩class1[⟨TAB⟩score]`, keeping rows whose
/// score is at least `threshold` (unscored rows are kept). When a source
/// class appears more than once the highest score wins.
pub fn read_system_mappings(
    path: &Path,
    o1: &Ontology,
    o2: &Ontology,
    threshold: f64,
) -> Result<ClassMapping> {
    let mut best: BTreeMap<ClassId, (f64, ClassId)> = BTreeMap::new();
    for (line, cols) in read_tsv_range(path, 2, 3)? {
        let score = match cols.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line, format!("bad score: {e}")))?,
            None => f64::INFINITY,
        };
        if score < threshold {
            continue;
        }
        let src = lookup(o2, &cols[0], "2", path, line)?;
        let dst = lookup(o1, &cols[1], "1", path, line)?;
        let entry = best.entry(src).or_insert((score, dst));
        if score > entry.0 {
            *entry = (score, dst);
        }
    }
    let mut m = ClassMapping::new();
    for (src, (_, dst)) in best {
        m.insert(src, dst, Provenance::System);
    }
    Ok(m)
}

pub fn write_class_mappings(
    path: &Path,
    mapping: &ClassMapping,
    o1: &Ontology,
    o2: &Ontology,
) -> Result<()> {
    let mut out = String::new();
    for (src, dst, prov) in mapping.iter() {
        out += &format!("{}\t{}\t{prov}\n", o2.class_name(src), o1.class_name(dst));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// What [`prepare_directory`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrepareOutcome {
    /// No second ontology: nothing to merge.
    SharedOntology,
    Merged {
        classes_mapped: usize,
        mapped_to_root: usize,
        memberships_written: usize,
    },
}

/// Merges ontology 2 of a benchmark directory into ontology 1, writing
/// `class_mappings.tsv` and `memberships_2_merged.tsv`.
///
/// Equivalence links come from `onto_equiv.tsv` and matcher output from
/// `system_mappings.tsv`; at least one must exist. An existing
/// `class_mappings.tsv` whose rows carry provenance `manual` is used as the
/// mapping as-is.
pub fn prepare_directory(dir: &Path, system_threshold: f64) -> Result<PrepareOutcome> {
    let sub2 = dir.join(ONTO_SUBCLASS[1]);
    if !sub2.exists() {
        return Ok(PrepareOutcome::SharedOntology);
    }
    let mut b1 = OntologyBuilder::new();
    read_subclass_file(&mut b1, &dir.join(ONTO_SUBCLASS[0]))?;
    let mem1 = dir.join(MEMBERSHIPS[0]);
    if mem1.exists() {
        for (_, cols) in read_tsv(&mem1, 2)? {
            b1.add_class(&cols[1]);
        }
    }
    let o1 = b1.build()?;

    let mem2_path = dir.join(MEMBERSHIPS[1]);
    let mem2 = read_tsv(&mem2_path, 2)?;
    let mut b2 = OntologyBuilder::new();
    read_subclass_file(&mut b2, &sub2)?;
    for (_, cols) in &mem2 {
        b2.add_class(&cols[1]);
    }
    let o2 = b2.build()?;

    let manual_path = dir.join(CLASS_MAPPINGS);
    let manual = if manual_path.exists() {
        let m = read_class_mappings(&manual_path, &o1, &o2, Provenance::Manual)?;
        let all_manual = !m.is_empty() && m.iter().all(|(_, _, p)| p == Provenance::Manual);
        all_manual.then_some(m)
    } else {
        None
    };

    let mapping = match manual {
        Some(m) => m,
        None => {
            let equiv_path = dir.join(ONTO_EQUIV);
            let system_path = dir.join(SYSTEM_MAPPINGS);
            if !equiv_path.exists() && !system_path.exists() {
                return Err(Error::MissingFile(equiv_path));
            }
            let mut equiv = Vec::new();
            if equiv_path.exists() {
                for (line, cols) in read_tsv(&equiv_path, 2)? {
                    equiv.push((
                        lookup(&o2, &cols[0], "2", &equiv_path, line)?,
                        lookup(&o1, &cols[1], "1", &equiv_path, line)?,
                    ));
                }
            }
            let routed = route_fine_grained(&o1, &o2, &equiv)?;
            if system_path.exists() {
                let system = read_system_mappings(&system_path, &o1, &o2, system_threshold)?;
                apply_system_mappings(&routed, &system)
            } else {
                routed
            }
        }
    };
    write_class_mappings(&manual_path, &mapping, &o1, &o2)?;

    let mut entities = Interner::new();
    let links: Vec<(EntityId, ClassId)> = mem2
        .iter()
        .map(|(_, cols)| {
            (
                EntityId(entities.intern(&cols[0])),
                o2.class(&cols[1]).expect("interned above"),
            )
        })
        .collect();
    let m2 = MembershipSet::new(entities.len(), links, o2.root());
    let (_, merged) = merge(&o1, &m2, &mapping);

    let out_path = dir.join(MERGED_MEMBERSHIPS_2);
    let mut out = Vec::new();
    for (e, c) in merged.links() {
        writeln!(out, "{}\t{}", entities.resolve(e.0), o1.class_name(c)).expect("vec write");
    }
    fs::write(&out_path, out).map_err(|e| Error::io(&out_path, e))?;

    let mapped_to_root = mapping.iter().filter(|&(_, d, _)| d == o1.root()).count();
    Ok(PrepareOutcome::Merged {
        classes_mapped: mapping.len(),
        mapped_to_root,
        memberships_written: merged.num_links(),
    })
}
