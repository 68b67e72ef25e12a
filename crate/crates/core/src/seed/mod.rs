//! Seed entity/predicate embeddings: scoring, training and TSV import/export.

mod scoring;
mod train;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Vocab};
use crate::linalg::Matrix;

pub use scoring::{
    complex_grad, distmult_grad, phases_to_rotation, rescal_grad, rotate_grad, rotate_phase_grad, score_complex,
    score_distmult, score_rescal, score_rotate, score_transe, transe_grad, Norm, ScoreGrad, UNIT_MODULUS_TOL,
};
pub use train::{train_seed, SeedTrainConfig, TrainedSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Real,
    /// `d` real slots hold `d/2` complex numbers as `[re₀, im₀, re₁, im₁, …]`.
    ComplexInterleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
    Rescal,
    ConvE,
    Imported,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::TransE => "transe",
            ModelTag::DistMult => "distmult",
            ModelTag::ComplEx => "complex",
            ModelTag::RotatE => "rotate",
            ModelTag::Rescal => "rescal",
            ModelTag::ConvE => "conve",
            ModelTag::Imported => "imported",
        }
    }

    /// Whether `train_seed` can fit this model in-repo.
    pub fn is_trainable(self) -> bool {
        matches!(
            self,
            ModelTag::TransE | ModelTag::DistMult | ModelTag::ComplEx | ModelTag::RotatE
        )
    }

    pub fn value_kind(self) -> ValueKind {
        match self {
            ModelTag::ComplEx | ModelTag::RotatE => ValueKind::ComplexInterleaved,
            _ => ValueKind::Real,
        }
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ValueKind::Real),
            "complex-interleaved" => Ok(ValueKind::ComplexInterleaved),
            other => Err(Error::invalid(format!("unknown value kind {other:?}"))),
        }
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "transe" => ModelTag::TransE,
            "distmult" => ModelTag::DistMult,
            "complex" => ModelTag::ComplEx,
            "rotate" => ModelTag::RotatE,
            "rescal" => ModelTag::Rescal,
            "conve" => ModelTag::ConvE,
            "imported" => ModelTag::Imported,
            other => return Err(Error::invalid(format!("unknown model tag {other:?}"))),
        })
    }
}

/// Entity and predicate vectors aligned to a graph's vocabularies.
///
/// Predicate rows normally have the entity width `d`; imported RESCAL
/// relations are flattened `d × d` matrices, and ConvE/imported predicates
/// may have any width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub entities: Matrix,
    pub predicates: Matrix,
    pub value_kind: ValueKind,
    pub model: ModelTag,
}

impl EmbeddingSet {
    pub fn new(entities: Matrix, predicates: Matrix, value_kind: ValueKind, model: ModelTag) -> Result<Self> {
        let set = EmbeddingSet {
            entities,
            predicates,
            value_kind,
            model,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.entities.cols()
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        self.entities.row(i)
    }

    pub fn predicate(&self, i: usize) -> &[f64] {
        self.predicates.row(i)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !self.entities.is_finite() || !self.predicates.is_finite() {
            return Err(Error::invalid("embeddings contain NaN or infinite values"));
        }
        if self.value_kind == ValueKind::ComplexInterleaved && !d.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "complex-interleaved embeddings need an even dimension, got {d}"
            )));
        }
        let expected = match self.model {
            ModelTag::Rescal => Some(d * d),
            ModelTag::ConvE | ModelTag::Imported => None,
            _ => Some(d),
        };
        if let Some(expected) = expected {
            if self.predicates.cols() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: self.predicates.cols(),
                });
            }
        }
        Ok(())
    }

    /// Checks the row counts against a graph's vocabularies.
    pub fn check_aligned(&self, g: &KnowledgeGraph) -> Result<()> {
        if self.entities.rows() != g.num_entities() {
            return Err(Error::DimensionMismatch {
                expected: g.num_entities(),
                actual: self.entities.rows(),
            });
        }
        if self.predicates.rows() != g.num_predicates() {
            return Err(Error::DimensionMismatch {
                expected: g.num_predicates(),
                actual: self.predicates.rows(),
            });
        }
        Ok(())
    }

    /// Writes `entities.tsv` and `predicates.tsv` style files.
    pub fn export(&self, g: &KnowledgeGraph, entity_path: &Path, predicate_path: &Path) -> Result<()> {
        self.check_aligned(g)?;
        write_embedding_tsv(entity_path, g.entities().names(), &self.entities)?;
        write_embedding_tsv(predicate_path, g.predicates().names(), &self.predicates)
    }
}

/// Reads embeddings for every graph vocabulary item from
/// `name<TAB>v₀<TAB>…<TAB>v_{d−1}` files. Extra rows are ignored.
pub fn import_embeddings(
    g: &KnowledgeGraph,
    entity_path: &Path,
    predicate_path: &Path,
    value_kind: ValueKind,
    model: ModelTag,
) -> Result<EmbeddingSet> {
    let entities = read_aligned(entity_path, g.entities(), "entity")?;
    let predicates = read_aligned(predicate_path, g.predicates(), "predicate")?;
    EmbeddingSet::new(entities, predicates, value_kind, model)
}

fn read_aligned(path: &Path, vocab: &Vocab, kind: &'static str) -> Result<Matrix> {
    let rows = read_embedding_tsv(path)?;
    let width = rows.first().map_or(0, |(_, v)| v.len());
    let mut m = Matrix::zeros(vocab.len(), width);
    let mut found = vec![false; vocab.len()];
    for (name, values) in rows {
        if let Some(i) = vocab.get(&name) {
            m.row_mut(i).copy_from_slice(&values);
            found[i] = true;
        }
    }
    if let Some(missing) = found.iter().position(|f| !f) {
        return Err(Error::MissingVocabulary {
            kind,
            name: vocab.name(missing).to_owned(),
        });
    }
    Ok(m)
}

/// Parses a `name<TAB>values…` file. Rows must all have the same width.
pub fn read_embedding_tsv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut width = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno + 1,
            message,
        };
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default().to_owned();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("non-numeric field {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(parse_err("row has no values".into()));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(format!("ragged row: {} values, expected {w}", values.len())))
            }
            _ => {}
        }
        out.push((name, values));
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no embeddings in {}", path.display())));
    }
    Ok(out)
}

/// Writes `name<TAB>values…` rows with shortest round-trip float formatting.
pub fn write_embedding_tsv<S: AsRef<str>>(path: &Path, names: &[S], m: &Matrix) -> Result<()> {
    if names.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: names.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (name, row) in names.iter().zip(m.iter_rows()) {
        write!(w, "{}", name.as_ref()).map_err(|e| Error::io(path, e))?;
        for v in row {
            write!(w, "\t{v}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix whose rows are named by their index (`0`, `1`, …), as
/// written by [`write_indexed_tsv`].
pub fn read_indexed_tsv(path: &Path) -> Result<Matrix> {
    let rows = read_embedding_tsv(path)?;
    let width = rows[0].1.len();
    let mut m = Matrix::zeros(rows.len(), width);
    let mut seen = vec![false; rows.len()];
    for (lineno, (name, values)) in rows.into_iter().enumerate() {
        let i = name
            .parse::<usize>()
            .ok()
            .filter(|&i| i < seen.len() && !seen[i])
            .ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message: format!("bad or repeated row index {name:?}"),
            })?;
        seen[i] = true;
        m.row_mut(i).copy_from_slice(&values);
    }
    Ok(m)
}

pub fn write_indexed_tsv(path: &Path, m: &Matrix) -> Result<()> {
    let names: Vec<String> = (0..m.rows()).map(|i| i.to_string()).collect();
    write_embedding_tsv(path, &names, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::from_named(&[("a", "r", "b")]).unwrap()
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn import_two_rows() {
        let ent = file("a\t1\t2\t3\t4\nb\t0.5\t0\t0\t-1\n");
        let pred = file("r\t0\t0\t1\t1\n");
        let set = import_embeddings(&graph(), ent.path(), pred.path(), ValueKind::Real, ModelTag::Imported).unwrap();
        assert_eq!(set.dim(), 4);
        assert_eq!(set.entity(1), &[0.5, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn import_missing_entity_names_it() {
        let ent = file("a\t1\t2\n");
        let pred = file("r\t0\t1\n");
        let err =
            import_embeddings(&graph(), ent.path(), pred.path(), ValueKind::Real, ModelTag::Imported).unwrap_err();
        match err {
            Error::MissingVocabulary { name, kind } => {
                assert_eq!(name, "b");
                assert_eq!(kind, "entity");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn import_rejects_ragged_and_non_numeric() {
        let pred = file("r\t0\t1\n");
        let ragged = file("a\t1\t2\nb\t1\n");
        assert!(matches!(
            import_embeddings(
                &graph(),
                ragged.path(),
                pred.path(),
                ValueKind::Real,
                ModelTag::Imported
            ),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad = file("a\t1\tx\nb\t1\t2\n");
        assert!(matches!(
            import_embeddings(&graph(), bad.path(), pred.path(), ValueKind::Real, ModelTag::Imported),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn complex_needs_even_dim() {
        let e = Matrix::zeros(2, 3);
        let p = Matrix::zeros(1, 3);
        assert!(EmbeddingSet::new(e, p, ValueKind::ComplexInterleaved, ModelTag::ComplEx).is_err());
    }

    #[test]
    fn rejects_nan() {
        let mut e = Matrix::zeros(2, 2);
        e[(0, 1)] = f64::NAN;
        assert!(EmbeddingSet::new(e, Matrix::zeros(1, 2), ValueKind::Real, ModelTag::TransE).is_err());
    }

    #[test]
    fn model_tag_parse() {
        for tag in ["transe", "distmult", "complex", "rotate", "rescal", "conve", "imported"] {
            assert_eq!(tag.parse::<ModelTag>().unwrap().as_str(), tag);
        }
        assert!("foo".parse::<ModelTag>().is_err());
    }
}
