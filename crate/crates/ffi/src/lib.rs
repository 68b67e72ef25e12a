//! C interface to the `ptss` library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load`/`*_build` call and released by the matching `*_free`.
//! Functions return a [`PtssStatus`]; on failure the message is available
//! from [`ptss_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ptss::kg::{compute_stats, load_triples, KnowledgeGraph};
use ptss::linalg::Matrix;
use ptss::pipeline::{run_pipeline, ExperimentConfig, RunOptions};
use ptss::sampler::{build_dataset, compute_ptss};
use ptss::seed::{import_embeddings, train_seed, EmbeddingSet, ModelTag, SeedTrainConfig};
use ptss::siamese::{init_embedding_layer, train, AggregationOp, FineTuneConfig, SiameseModel};
use ptss::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Numeric = 6,
    Config = 7,
    Stage = 8,
    Panic = 99,
}

/// A loaded knowledge graph.
pub struct PtssGraph(KnowledgeGraph);

/// Entity and predicate seed embeddings aligned with a graph.
pub struct PtssEmbeddings(EmbeddingSet);

/// Scored triple pairs.
pub struct PtssDataset(PtssDatasetInner);

/// Dense row-major matrix of doubles.
pub struct PtssMatrix(Matrix);

type PtssDatasetInner = ptss::sampler::PtssDataset;

/// Topology counts of a graph.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtssGraphStats {
    pub num_entities: usize,
    pub num_predicates: usize,
    pub num_triples: usize,
    pub multi_edge_triples: usize,
    pub strongly_connected_components: usize,
    pub weakly_connected_components: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PtssStatus {
    match e {
        Error::Io { .. } => PtssStatus::Io,
        Error::Parse { .. } | Error::Json(_) => PtssStatus::Parse,
        Error::DimensionMismatch { .. } => PtssStatus::DimensionMismatch,
        Error::NonFinite { .. } | Error::ZeroVariance => PtssStatus::Numeric,
        Error::Config(_) => PtssStatus::Config,
        Error::Stage { .. } => PtssStatus::Stage,
        Error::Empty(_) | Error::InvalidArgument(_) | Error::MissingVocabulary { .. } => PtssStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PtssStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtssStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            PtssStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PtssStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, Failure> {
    Ok(s.parse::<T>()?)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ptss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ptss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the union of `n_paths` tab-separated triple files.
///
/// # Safety
/// `paths` must point to `n_paths` valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_graph_load(
    paths: *const *const c_char,
    n_paths: usize,
    out_graph: *mut *mut PtssGraph,
) -> PtssStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        if paths.is_null() {
            return Err(Failure::Null("paths"));
        }
        let mut files = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            files.push(PathBuf::from(string(*paths.add(i), "path")?));
        }
        let (g, _) = load_triples(&files)?;
        *slot = Box::into_raw(Box::new(PtssGraph(g)));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`ptss_graph_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptss_graph_free(g: *mut PtssGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live graph handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ptss_graph_num_triples(g: *const PtssGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_triples())
}

/// # Safety
/// `g` must be a live graph handle; `out_stats` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_graph_stats(g: *const PtssGraph, out_stats: *mut PtssGraphStats) -> PtssStatus {
    guard(|| {
        let g = obj(g, "graph")?;
        let slot = out(out_stats, "out_stats")?;
        let s = compute_stats(&g.0);
        *slot = PtssGraphStats {
            num_entities: s.num_entities,
            num_predicates: s.num_predicates,
            num_triples: s.num_triples,
            multi_edge_triples: s.num_multi_edge_triples,
            strongly_connected_components: s.num_scc,
            weakly_connected_components: s.num_wcc,
        };
        Ok(())
    })
}

/// Reads `name<TAB>values…` embedding files for every entity and predicate
/// of `g`. `model` is a tag such as `"transe"` or `"complex"`.
///
/// # Safety
/// Handles and strings must be valid; `out_emb` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_embeddings_import(
    g: *const PtssGraph,
    entity_path: *const c_char,
    predicate_path: *const c_char,
    model: *const c_char,
    out_emb: *mut *mut PtssEmbeddings,
) -> PtssStatus {
    guard(|| {
        let g = obj(g, "graph")?;
        let slot = out(out_emb, "out_emb")?;
        let tag: ModelTag = parse(&string(model, "model")?)?;
        let e = import_embeddings(
            &g.0,
            string(entity_path, "entity_path")?.as_ref(),
            string(predicate_path, "predicate_path")?.as_ref(),
            tag.value_kind(),
            tag,
        )?;
        *slot = Box::into_raw(Box::new(PtssEmbeddings(e)));
        Ok(())
    })
}

/// Trains seed embeddings with default settings apart from the arguments.
///
/// # Safety
/// Handles and strings must be valid; `out_emb` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_embeddings_train(
    g: *const PtssGraph,
    model: *const c_char,
    dim: usize,
    epochs: usize,
    rng_seed: u64,
    out_emb: *mut *mut PtssEmbeddings,
) -> PtssStatus {
    guard(|| {
        let g = obj(g, "graph")?;
        let slot = out(out_emb, "out_emb")?;
        let tag: ModelTag = parse(&string(model, "model")?)?;
        let cfg = SeedTrainConfig {
            dim,
            epochs,
            rng_seed,
            ..Default::default()
        };
        let trained = train_seed(&g.0, tag, &cfg)?;
        *slot = Box::into_raw(Box::new(PtssEmbeddings(trained.embeddings)));
        Ok(())
    })
}

/// # Safety
/// `e` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptss_embeddings_free(e: *mut PtssEmbeddings) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// PTSS of two triples of `g`, by index.
///
/// # Safety
/// Handles must be live and aligned; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_score(
    g: *const PtssGraph,
    e: *const PtssEmbeddings,
    triple_a: usize,
    triple_b: usize,
    out_score: *mut f64,
) -> PtssStatus {
    guard(|| {
        let (g, e) = (obj(g, "graph")?, obj(e, "embeddings")?);
        let slot = out(out_score, "out_score")?;
        e.0.check_aligned(&g.0)?;
        let n = g.0.num_triples();
        if triple_a >= n || triple_b >= n {
            return Err(Error::InvalidArgument(format!("triple index out of range ({n} triples)")).into());
        }
        *slot = compute_ptss(g.0.triple(triple_a), g.0.triple(triple_b), &e.0);
        Ok(())
    })
}

/// Samples up to `4n` candidates per triple and scores them.
///
/// # Safety
/// Handles must be live; `out_ds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_build(
    g: *const PtssGraph,
    e: *const PtssEmbeddings,
    n: usize,
    rng_seed: u64,
    out_ds: *mut *mut PtssDataset,
) -> PtssStatus {
    guard(|| {
        let (g, e) = (obj(g, "graph")?, obj(e, "embeddings")?);
        let slot = out(out_ds, "out_ds")?;
        let d = build_dataset(&g.0, &e.0, n, rng_seed)?;
        *slot = Box::into_raw(Box::new(PtssDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `d` must be a live dataset handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_len(d: *const PtssDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.pairs.len())
}

/// Pair `i` of the dataset.
///
/// # Safety
/// `d` must be live; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_get(
    d: *const PtssDataset,
    i: usize,
    out_a: *mut usize,
    out_b: *mut usize,
    out_score: *mut f64,
) -> PtssStatus {
    guard(|| {
        let d = obj(d, "dataset")?;
        let (a, b, s) = (out(out_a, "out_a")?, out(out_b, "out_b")?, out(out_score, "out_score")?);
        let p =
            d.0.pairs
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("pair {i} out of range")))?;
        (*a, *b, *s) = (p.triple_a, p.triple_b, p.score);
        Ok(())
    })
}

/// Writes the dataset as TSV.
///
/// # Safety
/// `d` must be live; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_write(d: *const PtssDataset, path: *const c_char) -> PtssStatus {
    guard(|| {
        let d = obj(d, "dataset")?;
        d.0.write_tsv(string(path, "path")?.as_ref())?;
        Ok(())
    })
}

/// Reads a dataset written by [`ptss_dataset_write`].
///
/// # Safety
/// `path` must be a valid C string; `out_ds` writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_read(path: *const c_char, out_ds: *mut *mut PtssDataset) -> PtssStatus {
    guard(|| {
        let slot = out(out_ds, "out_ds")?;
        let d = PtssDatasetInner::read_tsv(string(path, "path")?.as_ref())?;
        *slot = Box::into_raw(Box::new(PtssDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptss_dataset_free(d: *mut PtssDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Fine-tunes triple embeddings. `aggregation` is one of `avg`, `had`,
/// `l1`, `l2`, `ht`. Zero `batch_size`, `epochs` or a non-positive
/// `learning_rate` select the defaults.
///
/// # Safety
/// Handles must be live; `aggregation` a valid C string; `out_matrix`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ptss_finetune(
    g: *const PtssGraph,
    e: *const PtssEmbeddings,
    d: *const PtssDataset,
    aggregation: *const c_char,
    batch_size: usize,
    epochs: usize,
    learning_rate: f64,
    rng_seed: u64,
    out_matrix: *mut *mut PtssMatrix,
) -> PtssStatus {
    guard(|| {
        let (g, e, d) = (obj(g, "graph")?, obj(e, "embeddings")?, obj(d, "dataset")?);
        let slot = out(out_matrix, "out_matrix")?;
        let op: AggregationOp = parse(&string(aggregation, "aggregation")?)?;
        let mut cfg = FineTuneConfig {
            rng_seed,
            ..Default::default()
        };
        if batch_size > 0 {
            cfg.batch_size = batch_size;
        }
        if epochs > 0 {
            cfg.epochs = epochs;
        }
        if learning_rate > 0.0 {
            cfg.learning_rate = learning_rate;
        }
        let init = init_embedding_layer(&g.0, &e.0, op)?;
        let tuned = train(SiameseModel::new(init, rng_seed), &d.0, &cfg)?;
        *slot = Box::into_raw(Box::new(PtssMatrix(tuned.model.export_triple_embeddings())));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live matrix handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ptss_matrix_rows(m: *const PtssMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live matrix handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ptss_matrix_cols(m: *const PtssMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Row-major values, valid while `m` lives.
///
/// # Safety
/// `m` must be a live matrix handle or null (returns null).
#[no_mangle]
pub unsafe extern "C" fn ptss_matrix_data(m: *const PtssMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.0.as_slice().as_ptr())
}

/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptss_matrix_free(m: *mut PtssMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs the full pipeline described by a TOML config file.
///
/// # Safety
/// `config_path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn ptss_run_pipeline(config_path: *const c_char, force: bool) -> PtssStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml_file(string(config_path, "config_path")?.as_ref())?;
        run_pipeline(&cfg, RunOptions { force })?;
        Ok(())
    })
}
