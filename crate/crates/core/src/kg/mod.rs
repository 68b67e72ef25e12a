//! Knowledge graph data model and TSV ingestion.

mod stats;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stats::{compute_stats, multi_predicate_triple_ids, GraphStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub predicate: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, predicate: usize, tail: usize) -> Self {
        Triple { head, predicate, tail }
    }
}

/// String ↔ dense index mapping; indices follow first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for Vocab {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut v = Vocab::default();
        for s in iter {
            v.intern(s.as_ref());
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    predicates: Vocab,
    triples: Vec<Triple>,
    by_head: Vec<Vec<usize>>,
    by_tail: Vec<Vec<usize>>,
    by_predicate: Vec<Vec<usize>>,
}

/// What the loader had to tidy up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub lines: usize,
    pub duplicates: usize,
}

impl KnowledgeGraph {
    /// Builds a graph from vocabularies and triples. Duplicate triples are
    /// dropped; the returned count says how many.
    pub fn from_parts(
        entities: Vocab,
        predicates: Vocab,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<(Self, usize)> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut duplicates = 0;
        for t in triples {
            if t.head >= entities.len() || t.tail >= entities.len() {
                return Err(Error::invalid(format!(
                    "entity index out of range in {t:?} (|E| = {})",
                    entities.len()
                )));
            }
            if t.predicate >= predicates.len() {
                return Err(Error::invalid(format!(
                    "predicate index out of range in {t:?} (|P| = {})",
                    predicates.len()
                )));
            }
            if seen.insert(t) {
                kept.push(t);
            } else {
                duplicates += 1;
            }
        }

        let mut by_head = vec![Vec::new(); entities.len()];
        let mut by_tail = vec![Vec::new(); entities.len()];
        let mut by_predicate = vec![Vec::new(); predicates.len()];
        // pushing in index order keeps postings sorted and unique
        for (i, t) in kept.iter().enumerate() {
            by_head[t.head].push(i);
            by_tail[t.tail].push(i);
            by_predicate[t.predicate].push(i);
        }

        Ok((
            KnowledgeGraph {
                entities,
                predicates,
                triples: kept,
                by_head,
                by_tail,
                by_predicate,
            },
            duplicates,
        ))
    }

    /// Builds a graph from `(head, predicate, tail)` name triples.
    pub fn from_named<S: AsRef<str>>(triples: &[(S, S, S)]) -> Result<Self> {
        let mut entities = Vocab::default();
        let mut predicates = Vocab::default();
        let ids: Vec<Triple> = triples
            .iter()
            .map(|(h, p, t)| {
                let h = entities.intern(h.as_ref());
                let p = predicates.intern(p.as_ref());
                let t = entities.intern(t.as_ref());
                Triple::new(h, p, t)
            })
            .collect();
        Ok(Self::from_parts(entities, predicates, ids)?.0)
    }

    /// Builds a graph over integer ids `0..n_entities` / `0..n_predicates`,
    /// named by their decimal index. Handy for synthetic graphs.
    pub fn from_ids(n_entities: usize, n_predicates: usize, triples: impl IntoIterator<Item = Triple>) -> Result<Self> {
        let entities: Vocab = (0..n_entities).map(|i| format!("e{i}")).collect();
        let predicates: Vocab = (0..n_predicates).map(|i| format!("r{i}")).collect();
        Ok(Self::from_parts(entities, predicates, triples)?.0)
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn predicates(&self) -> &Vocab {
        &self.predicates
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, i: usize) -> Triple {
        self.triples[i]
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn by_head(&self, entity: usize) -> &[usize] {
        &self.by_head[entity]
    }

    pub fn by_tail(&self, entity: usize) -> &[usize] {
        &self.by_tail[entity]
    }

    pub fn by_predicate(&self, predicate: usize) -> &[usize] {
        &self.by_predicate[predicate]
    }

    /// Predicate id of every triple, in triple order.
    pub fn predicate_labels(&self) -> Vec<usize> {
        self.triples.iter().map(|t| t.predicate).collect()
    }

    /// Keeps only the listed triples (vocabularies are kept whole).
    pub fn subgraph(&self, triple_ids: &[usize]) -> Result<KnowledgeGraph> {
        let triples = triple_ids.iter().map(|&i| self.triples[i]);
        Ok(Self::from_parts(self.entities.clone(), self.predicates.clone(), triples)?.0)
    }

    /// Re-indexes vocabularies to only the entities/predicates still in use.
    pub fn compacted(&self) -> KnowledgeGraph {
        let named: Vec<(&str, &str, &str)> = self
            .triples
            .iter()
            .map(|t| {
                (
                    self.entities.name(t.head),
                    self.predicates.name(t.predicate),
                    self.entities.name(t.tail),
                )
            })
            .collect();
        Self::from_named(&named).expect("names of a valid graph are valid")
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entities.name(t.head),
                self.predicates.name(t.predicate),
                self.entities.name(t.tail)
            )
            .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads the union of one or more `head<TAB>predicate<TAB>tail` files.
pub fn load_triples<P: AsRef<Path>>(paths: &[P]) -> Result<(KnowledgeGraph, LoadSummary)> {
    let mut entities = Vocab::default();
    let mut predicates = Vocab::default();
    let mut triples = Vec::new();
    let mut summary = LoadSummary::default();

    for path in paths {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let h = entities.intern(fields[0]);
            let p = predicates.intern(fields[1]);
            let t = entities.intern(fields[2]);
            triples.push(Triple::new(h, p, t));
            summary.lines += 1;
        }
    }

    if triples.is_empty() {
        let names: Vec<String> = paths.iter().map(|p| p.as_ref().display().to_string()).collect();
        return Err(Error::Empty(format!("no triples in {}", names.join(", "))));
    }

    let (graph, duplicates) = KnowledgeGraph::from_parts(entities, predicates, triples)?;
    summary.duplicates = duplicates;
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate triples");
    }
    Ok((graph, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_line_file() {
        let f = write("a\tr\tb\n");
        let (g, s) = load_triples(&[f.path()]).unwrap();
        assert_eq!(g.num_entities(), 2);
        assert_eq!(g.num_predicates(), 1);
        assert_eq!(g.num_triples(), 1);
        assert_eq!(s.duplicates, 0);
    }

    #[test]
    fn duplicates_dropped_and_counted() {
        let f = write("a\tr\tb\na\tr\tb\n\nb\tr\ta\n");
        let (g, s) = load_triples(&[f.path()]).unwrap();
        assert_eq!(g.num_triples(), 2);
        assert_eq!(s.duplicates, 1);
        assert_eq!(s.lines, 3);
    }

    #[test]
    fn union_of_files_dedups_across_splits() {
        let a = write("a\tr\tb\n");
        let b = write("a\tr\tb\nc\ts\ta\n");
        let (g, s) = load_triples(&[a.path(), b.path()]).unwrap();
        assert_eq!(g.num_triples(), 2);
        assert_eq!(s.duplicates, 1);
        assert_eq!(g.entities().names(), &["a", "b", "c"]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write("a\tr\tb\nbroken line\n");
        match load_triples(&[f.path()]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_error() {
        let f = write("\n\n");
        assert!(matches!(load_triples(&[f.path()]), Err(Error::Empty(_))));
    }

    #[test]
    fn postings_are_sorted_and_cover_all_triples() {
        let g =
            KnowledgeGraph::from_named(&[("a", "r", "b"), ("b", "r", "c"), ("a", "s", "c"), ("c", "s", "a")]).unwrap();
        for postings in [&g.by_head, &g.by_tail, &g.by_predicate] {
            let mut all: Vec<usize> = postings.iter().flatten().copied().collect();
            for p in postings.iter() {
                assert!(p.windows(2).all(|w| w[0] < w[1]));
            }
            all.sort_unstable();
            assert_eq!(all, (0..g.num_triples()).collect::<Vec<_>>());
        }
        for e in 0..g.num_entities() {
            assert!(g.by_head(e).len() + g.by_tail(e).len() >= 1);
        }
    }

    #[test]
    fn tsv_round_trip() {
        let g = KnowledgeGraph::from_named(&[("x", "p", "y"), ("y", "q", "z"), ("z", "p", "x")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        g.write_tsv(&path).unwrap();
        let (h, _) = load_triples(&[&path]).unwrap();
        assert_eq!(g.entities(), h.entities());
        assert_eq!(g.predicates(), h.predicates());
        assert_eq!(g.triples(), h.triples());
    }
}
