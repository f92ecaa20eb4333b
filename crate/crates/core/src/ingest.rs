//! Benchmark directory parsing and word-vector loading.
//!
//! Layout (UTF-8, tab-separated):
//!
//! | file | columns |
//! |------|---------|
//! | `rel_triples_{1,2}.tsv` | entity, relation, entity |
//! | `attr_triples_{1,2}.tsv` (optional) | entity, attribute, value |
//! | `onto_subclass_1.tsv` | child class, parent class |
//! | `onto_subclass_2.tsv` (separate ontologies only) | child class, parent class |
//! | `onto_disjoint.tsv` (optional) | class, class |
//! | `memberships_{1,2}.tsv` | entity, class |
//! | `memberships_2_merged.tsv` | KG2 memberships rewritten onto ontology 1 |
//! | `ent_links.tsv` | KG1 entity, KG2 entity |
//! | `ent_links_{train,valid,test}.tsv` (optional) | fixed split |

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{
    AlignmentDataset, EntityId, KnowledgeGraph, KnowledgeGraphBuilder, MappingSet, MembershipSet,
    Ontology, OntologyBuilder,
};
use crate::linalg::normalize;
use crate::{Error, Result};

pub const REL_TRIPLES: [&str; 2] = ["rel_triples_1.tsv", "rel_triples_2.tsv"];
pub const ATTR_TRIPLES: [&str; 2] = ["attr_triples_1.tsv", "attr_triples_2.tsv"];
pub const ONTO_SUBCLASS: [&str; 2] = ["onto_subclass_1.tsv", "onto_subclass_2.tsv"];
pub const ONTO_DISJOINT: &str = "onto_disjoint.tsv";
pub const ONTO_EQUIV: &str = "onto_equiv.tsv";
pub const MEMBERSHIPS: [&str; 2] = ["memberships_1.tsv", "memberships_2.tsv"];
pub const MERGED_MEMBERSHIPS_2: &str = "memberships_2_merged.tsv";
pub const ENT_LINKS: &str = "ent_links.tsv";
pub const ENT_LINK_SPLITS: [&str; 3] = [
    "ent_links_train.tsv",
    "ent_links_valid.tsv",
    "ent_links_test.tsv",
];
pub const CLASS_MAPPINGS: &str = "class_mappings.tsv";
pub const SYSTEM_MAPPINGS: &str = "system_mappings.tsv";
pub const WORD_VECTORS: &str = "word_vectors.vec";

/// Train/valid/test fractions of the gold mapping set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatio {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 0.2,
            valid: 0.1,
            test: 0.7,
        }
    }
}

impl SplitRatio {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must lie in [0,1], got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// `(train, valid, test)` pair counts for `n` links.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let valid = (((n as f64) * self.valid).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        (train, valid, n - train - valid)
    }
}

/// One raw line of a triples file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a TSV file with exactly `fields` columns per non-empty line.
/// Returns `(line_number, columns)`.
pub fn read_tsv(path: &Path, fields: usize) -> Result<Vec<(usize, Vec<String>)>> {
    read_tsv_range(path, fields, fields)
}

/// Like [`read_tsv`] but accepts between `min` and `max` columns.
pub fn read_tsv_range(path: &Path, min: usize, max: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(|s| s.trim().to_owned()).collect();
        if cols.len() < min || cols.len() > max {
            let expected = if min == max {
                format!("{min}")
            } else {
                format!("{min}-{max}")
            };
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {expected} tab-separated fields, found {}", cols.len()),
            ));
        }
        if cols.iter().any(String::is_empty) {
            return Err(Error::parse(path, i + 1, "empty field"));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

/// Parses `head⟨TAB⟩relation⟨TAB⟩tail` lines; duplicates are dropped and
/// first-seen order is kept.
pub fn parse_triples_file(path: &Path) -> Result<Vec<RawTriple>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (_, cols) in read_tsv(path, 3)? {
        let mut it = cols.into_iter();
        let t = RawTriple {
            head: it.next().unwrap(),
            relation: it.next().unwrap(),
            tail: it.next().unwrap(),
        };
        if seen.insert(t.clone()) {
            out.push(t);
        }
    }
    Ok(out)
}

fn load_kg(dir: &Path, side: usize) -> Result<KnowledgeGraph> {
    let mut b = KnowledgeGraphBuilder::new();
    for t in parse_triples_file(&dir.join(REL_TRIPLES[side]))? {
        b.add_triple(&t.head, &t.relation, &t.tail);
    }
    let attr = dir.join(ATTR_TRIPLES[side]);
    if attr.exists() {
        let text = read_to_string(&attr)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let entity = cols.next().unwrap_or_default().trim();
            if entity.is_empty() || cols.count() != 2 {
                return Err(Error::parse(&attr, i + 1, "expected 3 tab-separated fields"));
            }
            b.add_entity(entity);
            b.count_attribute_triple();
        }
    }
    Ok(b.build())
}

/// Adds subclass and disjointness axioms from `path` to `b`.
pub fn read_subclass_file(b: &mut OntologyBuilder, path: &Path) -> Result<()> {
    for (_, cols) in read_tsv(path, 2)? {
        b.add_subclass(&cols[0], &cols[1]);
    }
    Ok(())
}

fn read_memberships(
    path: &Path,
    kg: &KnowledgeGraph,
    onto: &mut OntologyBuilder,
) -> Result<Vec<(EntityId, String)>> {
    let mut out = Vec::new();
    for (line, cols) in read_tsv(path, 2)? {
        let e = kg.entity(&cols[0]).ok_or_else(|| {
            Error::parse(path, line, format!("entity {} not in its knowledge graph", cols[0]))
        })?;
        onto.add_class(&cols[1]);
        out.push((e, cols[1].clone()));
    }
    Ok(out)
}

fn read_links(
    path: &Path,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
) -> Result<Vec<(EntityId, EntityId)>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (line, cols) in read_tsv(path, 2)? {
        let a = kg1.entity(&cols[0]).ok_or_else(|| {
            Error::parse(path, line, format!("entity {} absent from KG1", cols[0]))
        })?;
        let b = kg2.entity(&cols[1]).ok_or_else(|| {
            Error::parse(path, line, format!("entity {} absent from KG2", cols[1]))
        })?;
        if seen.insert((a, b)) {
            out.push((a, b));
        }
    }
    Ok(out)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

/// Loads a benchmark directory. When all three `ent_links_{train,valid,test}`
/// files exist they are used verbatim; otherwise `ent_links.tsv` is shuffled
/// with `rng_seed` and split by `ratio`.
pub fn load_dataset(dir: &Path, ratio: SplitRatio, rng_seed: u64) -> Result<AlignmentDataset> {
    ratio.validate()?;
    let rel1 = require(dir.join(REL_TRIPLES[0]))?;
    let rel2 = require(dir.join(REL_TRIPLES[1]))?;
    let sub1 = require(dir.join(ONTO_SUBCLASS[0]))?;
    let mem1 = require(dir.join(MEMBERSHIPS[0]))?;
    let mem2 = if dir.join(ONTO_SUBCLASS[1]).exists() {
        let merged = dir.join(MERGED_MEMBERSHIPS_2);
        if !merged.exists() {
            return Err(Error::Dataset(format!(
                "{} has a second ontology but no {MERGED_MEMBERSHIPS_2}; run `prepare` first",
                dir.display()
            )));
        }
        merged
    } else {
        require(dir.join(MEMBERSHIPS[1]))?
    };
    let split_paths: Vec<PathBuf> = ENT_LINK_SPLITS.iter().map(|f| dir.join(f)).collect();
    let presplit = split_paths.iter().all(|p| p.exists());
    if !presplit {
        require(dir.join(ENT_LINKS))?;
    }
    debug_assert!(rel1.exists() && rel2.exists());

    let kg1 = load_kg(dir, 0)?;
    let kg2 = load_kg(dir, 1)?;

    let mut ob = OntologyBuilder::new();
    read_subclass_file(&mut ob, &sub1)?;
    let disjoint = dir.join(ONTO_DISJOINT);
    if disjoint.exists() {
        for (_, cols) in read_tsv(&disjoint, 2)? {
            ob.add_disjoint(&cols[0], &cols[1]);
        }
    }
    let m1 = read_memberships(&mem1, &kg1, &mut ob)?;
    let m2 = read_memberships(&mem2, &kg2, &mut ob)?;
    let ontology = ob.build()?;
    let resolve = |links: Vec<(EntityId, String)>, onto: &Ontology| {
        links
            .into_iter()
            .map(|(e, c)| (e, onto.class(&c).expect("class interned while reading")))
            .collect::<Vec<_>>()
    };
    let memberships1 = MembershipSet::new(kg1.num_entities(), resolve(m1, &ontology), ontology.root());
    let memberships2 = MembershipSet::new(kg2.num_entities(), resolve(m2, &ontology), ontology.root());

    let (train, valid, test) = if presplit {
        (
            read_links(&split_paths[0], &kg1, &kg2)?,
            read_links(&split_paths[1], &kg1, &kg2)?,
            read_links(&split_paths[2], &kg1, &kg2)?,
        )
    } else {
        let mut links = read_links(&dir.join(ENT_LINKS), &kg1, &kg2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        links.shuffle(&mut rng);
        let (n_train, n_valid, _) = ratio.sizes(links.len());
        let test = links.split_off(n_train + n_valid);
        let valid = links.split_off(n_train);
        (links, valid, test)
    };

    let dataset = AlignmentDataset {
        kg1,
        kg2,
        ontology,
        memberships1,
        memberships2,
        train: MappingSet::new(train)?,
        valid: MappingSet::new(valid)?,
        test: MappingSet::new(test)?,
    };
    dataset.check_splits_disjoint()?;
    Ok(dataset)
}

/// Text-format word vectors: `token v1 … v_d` per line, with an optional
/// leading `count dim` header.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                continue;
            }
            let v = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad vector component: {e}")))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        format!("inconsistent vector width {} (expected {d})", v.len()),
                    ))
                }
                _ => {}
            }
            vectors.entry(token.to_owned()).or_insert(v);
        }
        Ok(WordVectorTable {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Unit-length mean of the in-vocabulary tokens of `name`, or `None`
    /// when no token is known.
    pub fn embed(&self, name: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut hits = 0usize;
        for tok in tokenize(name) {
            if let Some(v) = self.vectors.get(&tok) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                hits += 1;
            }
        }
        if hits == 0 {
            return None;
        }
        sum.iter_mut().for_each(|s| *s /= hits as f64);
        normalize(&mut sum);
        Some(sum)
    }
}

/// Lowercased alphanumeric runs of `name`.
pub fn tokenize(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// The human-readable tail of a URI: text after the last `/`, `#` or `:`.
pub fn surface_name(uri: &str) -> &str {
    let uri = uri.trim_end_matches(['/', '#']);
    uri.rsplit(['/', '#', ':']).next().unwrap_or(uri)
}

/// Per-name initial vectors for SI initialization.
#[derive(Debug, Clone, Default)]
pub struct SiVectors {
    pub vectors: Vec<Option<Vec<f64>>>,
    pub covered: usize,
    pub fallback: usize,
}

/// Looks up each URI's surface name in the table at `path`.
pub fn load_word_vectors(path: &Path, names: &[String]) -> Result<SiVectors> {
    let table = WordVectorTable::load(path)?;
    Ok(si_vectors(&table, names))
}

pub fn si_vectors(table: &WordVectorTable, names: &[String]) -> SiVectors {
    let vectors: Vec<_> = names.iter().map(|n| table.embed(surface_name(n))).collect();
    let covered = vectors.iter().filter(|v| v.is_some()).count();
    SiVectors {
        fallback: vectors.len() - covered,
        covered,
        vectors,
    }
}
