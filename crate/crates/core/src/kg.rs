//! Core domain types: interned knowledge graphs, ontologies, memberships and
//! seed mappings.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// URI of the top class every ontology is rooted at.
pub const ROOT_CLASS: &str = "owl:Thing";

const ROOT_CLASS_IRI: &str = "http://www.w3.org/2002/07/owl#Thing";

/// True for either spelling of the top class.
pub fn is_root_uri(uri: &str) -> bool {
    uri == ROOT_CLASS || uri == ROOT_CLASS_IRI
}

macro_rules! handle {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(u32::try_from(i).expect("handle overflow"))
            }
        }
    };
}

handle!(
    /// Entity handle, scoped to one knowledge graph.
    EntityId
);
handle!(
    /// Relation handle, scoped to one knowledge graph.
    RelationId
);
handle!(
    /// Class handle within one ontology.
    ClassId
);

/// Which side of the alignment task a handle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Bijective string ↔ dense handle table. Handles follow first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("interner overflow");
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn resolve(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// One side of the alignment task, `G = (E, R, T)`.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    incoming: Vec<Vec<(RelationId, EntityId)>>,
    attribute_triples: usize,
}

#[derive(Debug, Default)]
pub struct KnowledgeGraphBuilder {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    attribute_triples: usize,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a relation triple; duplicates are ignored.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> Triple {
        let t = Triple {
            head: EntityId(self.entities.intern(head)),
            relation: RelationId(self.relations.intern(relation)),
            tail: EntityId(self.entities.intern(tail)),
        };
        if self.seen.insert(t) {
            self.triples.push(t);
        }
        t
    }

    /// Registers an entity that may have no relation triples.
    pub fn add_entity(&mut self, name: &str) -> EntityId {
        EntityId(self.entities.intern(name))
    }

    pub fn count_attribute_triple(&mut self) {
        self.attribute_triples += 1;
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for t in &self.triples {
            outgoing[t.head.index()].push((t.relation, t.tail));
            incoming[t.tail.index()].push((t.relation, t.head));
        }
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples: self.triples,
            triple_set: self.seen,
            outgoing,
            incoming,
            attribute_triples: self.attribute_triples,
        }
    }
}

impl KnowledgeGraph {
    pub fn entities(&self) -> &Interner {
        &self.entities
    }

    pub fn relations(&self) -> &Interner {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.resolve(e.0)
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.resolve(r.0)
    }

    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.outgoing[e.index()]
    }

    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.incoming[e.index()]
    }

    /// Number of triples `e` occurs in as head or tail; a reflexive triple
    /// counts twice.
    pub fn degree(&self, e: EntityId) -> Result<usize> {
        if e.index() >= self.num_entities() {
            return Err(Error::UnknownEntity(format!("#{}", e.0)));
        }
        Ok(self.outgoing[e.index()].len() + self.incoming[e.index()].len())
    }

    pub fn attribute_triple_count(&self) -> usize {
        self.attribute_triples
    }
}

/// `deg(e1) + deg(e2)` across the two graphs.
pub fn summed_degree(
    e1: EntityId,
    e2: EntityId,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
) -> Result<usize> {
    Ok(kg1.degree(e1)? + kg2.degree(e2)?)
}

/// Classes, the subClassOf hierarchy and declared disjointness.
#[derive(Debug, Clone)]
pub struct Ontology {
    classes: Interner,
    root: ClassId,
    subclass_pairs: Vec<(ClassId, ClassId)>,
    disjoint: HashSet<(ClassId, ClassId)>,
    parents: Vec<Vec<ClassId>>,
    children: Vec<Vec<ClassId>>,
}

#[derive(Debug)]
pub struct OntologyBuilder {
    classes: Interner,
    subclass_pairs: Vec<(ClassId, ClassId)>,
    seen_pairs: HashSet<(ClassId, ClassId)>,
    disjoint: Vec<(ClassId, ClassId)>,
}

impl Default for OntologyBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl OntologyBuilder {
    /// The root is always handle 0.
    pub fn new() -> Self {
        let mut classes = Interner::new();
        classes.intern(ROOT_CLASS);
        OntologyBuilder {
            classes,
            subclass_pairs: Vec::new(),
            seen_pairs: HashSet::new(),
            disjoint: Vec::new(),
        }
    }

    pub fn add_class(&mut self, uri: &str) -> ClassId {
        if is_root_uri(uri) {
            ClassId(0)
        } else {
            ClassId(self.classes.intern(uri))
        }
    }

    pub fn add_subclass(&mut self, child: &str, parent: &str) {
        let pair = (self.add_class(child), self.add_class(parent));
        if self.seen_pairs.insert(pair) {
            self.subclass_pairs.push(pair);
        }
    }

    pub fn add_disjoint(&mut self, a: &str, b: &str) {
        let pair = (self.add_class(a), self.add_class(b));
        self.disjoint.push(pair);
    }

    pub fn build(self) -> Result<Ontology> {
        let n = self.classes.len();
        let root = ClassId(0);
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(c, p) in &self.subclass_pairs {
            if c == root {
                return Err(Error::Dataset(format!(
                    "root class {ROOT_CLASS} cannot have a parent"
                )));
            }
            parents[c.index()].push(p);
            children[p.index()].push(c);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let mut disjoint = HashSet::new();
        for (a, b) in self.disjoint {
            if a == b {
                return Err(Error::Dataset(format!(
                    "class {} declared disjoint with itself",
                    self.classes.resolve(a.0)
                )));
            }
            disjoint.insert((a.min(b), a.max(b)));
        }
        let onto = Ontology {
            classes: self.classes,
            root,
            subclass_pairs: self.subclass_pairs,
            disjoint,
            parents,
            children,
        };
        if let Some(c) = onto.find_cycle() {
            return Err(Error::OntologyCycle(onto.class_name(c).to_owned()));
        }
        Ok(onto)
    }
}

impl Ontology {
    pub fn classes(&self) -> &Interner {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn root(&self) -> ClassId {
        self.root
    }

    pub fn class(&self, uri: &str) -> Option<ClassId> {
        if is_root_uri(uri) {
            Some(self.root)
        } else {
            self.classes.get(uri).map(ClassId)
        }
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        self.classes.resolve(c.0)
    }

    pub fn contains(&self, c: ClassId) -> bool {
        c.index() < self.num_classes()
    }

    /// Declared `(child, parent)` pairs in file order.
    pub fn subclass_pairs(&self) -> &[(ClassId, ClassId)] {
        &self.subclass_pairs
    }

    pub fn declared_parents(&self, c: ClassId) -> &[ClassId] {
        &self.parents[c.index()]
    }

    pub fn children(&self, c: ClassId) -> &[ClassId] {
        &self.children[c.index()]
    }

    /// Declared parents, or the root for a parentless non-root class.
    pub fn parents(&self, c: ClassId) -> &[ClassId] {
        let declared = &self.parents[c.index()];
        if declared.is_empty() && c != self.root {
            std::slice::from_ref(&self.root)
        } else {
            declared
        }
    }

    pub fn is_disjoint(&self, a: ClassId, b: ClassId) -> bool {
        self.disjoint.contains(&(a.min(b), a.max(b)))
    }

    /// Unordered disjoint pairs, each as `(min, max)`, sorted.
    pub fn disjoint_pairs(&self) -> Vec<(ClassId, ClassId)> {
        let mut v: Vec<_> = self.disjoint.iter().copied().collect();
        v.sort_unstable();
        v
    }

    fn find_cycle(&self) -> Option<ClassId> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.num_classes()];
        for start in 0..self.num_classes() {
            if state[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let parents = &self.parents[node];
                if *next < parents.len() {
                    let p = parents[*next].index();
                    *next += 1;
                    match state[p] {
                        0 => {
                            state[p] = 1;
                            stack.push((p, 0));
                        }
                        1 => return Some(ClassId::from(p)),
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        None
    }
}

/// Entity → declared class links for one knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipSet {
    by_entity: Vec<Vec<ClassId>>,
}

impl MembershipSet {
    /// Builds the set for `num_entities` entities. Entities without a link are
    /// typed as `root`.
    pub fn new(
        num_entities: usize,
        links: impl IntoIterator<Item = (EntityId, ClassId)>,
        root: ClassId,
    ) -> Self {
        let mut by_entity = vec![Vec::new(); num_entities];
        for (e, c) in links {
            by_entity[e.index()].push(c);
        }
        for classes in &mut by_entity {
            classes.sort_unstable();
            classes.dedup();
            if classes.is_empty() {
                classes.push(root);
            }
        }
        MembershipSet { by_entity }
    }

    pub fn num_entities(&self) -> usize {
        self.by_entity.len()
    }

    /// Directly declared classes of `e`, ordered by handle.
    pub fn declared_classes(&self, e: EntityId) -> Result<&[ClassId]> {
        self.by_entity
            .get(e.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEntity(format!("#{}", e.0)))
    }

    pub fn links(&self) -> impl Iterator<Item = (EntityId, ClassId)> + '_ {
        self.by_entity
            .iter()
            .enumerate()
            .flat_map(|(e, cs)| cs.iter().map(move |&c| (EntityId::from(e), c)))
    }

    pub fn num_links(&self) -> usize {
        self.by_entity.iter().map(Vec::len).sum()
    }

    pub fn has_link(&self, e: EntityId, c: ClassId) -> bool {
        self.by_entity
            .get(e.index())
            .is_some_and(|cs| cs.binary_search(&c).is_ok())
    }

    /// Entities whose only class is `root`.
    pub fn root_only_count(&self, root: ClassId) -> usize {
        self.by_entity
            .iter()
            .filter(|cs| cs.as_slice() == [root])
            .count()
    }
}

/// Ordered list of `(KG1 entity, KG2 entity)` pairs without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingSet {
    pairs: Vec<(EntityId, EntityId)>,
}

impl MappingSet {
    pub fn new(pairs: Vec<(EntityId, EntityId)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(*p) {
                return Err(Error::Dataset(format!(
                    "duplicate mapping pair (#{}, #{})",
                    p.0 .0, p.1 .0
                )));
            }
        }
        Ok(MappingSet { pairs })
    }

    pub fn pairs(&self) -> &[(EntityId, EntityId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lefts(&self) -> Vec<EntityId> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn rights(&self) -> Vec<EntityId> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

/// Everything one alignment run consumes.
#[derive(Debug, Clone)]
pub struct AlignmentDataset {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub ontology: Ontology,
    pub memberships1: MembershipSet,
    pub memberships2: MembershipSet,
    pub train: MappingSet,
    pub valid: MappingSet,
    pub test: MappingSet,
}

impl AlignmentDataset {
    pub fn kg(&self, side: Side) -> &KnowledgeGraph {
        match side {
            Side::Left => &self.kg1,
            Side::Right => &self.kg2,
        }
    }

    pub fn memberships(&self, side: Side) -> &MembershipSet {
        match side {
            Side::Left => &self.memberships1,
            Side::Right => &self.memberships2,
        }
    }

    /// Checks that the three splits share no entity on either side.
    pub fn check_splits_disjoint(&self) -> Result<()> {
        let mut left = HashSet::new();
        let mut right = HashSet::new();
        for split in [&self.train, &self.valid, &self.test] {
            for &(a, b) in split.pairs() {
                if !left.insert(a) {
                    return Err(Error::Dataset(format!(
                        "KG1 entity {} appears in more than one seed pair",
                        self.kg1.entity_name(a)
                    )));
                }
                if !right.insert(b) {
                    return Err(Error::Dataset(format!(
                        "KG2 entity {} appears in more than one seed pair",
                        self.kg2.entity_name(b)
                    )));
                }
            }
        }
        Ok(())
    }
}
