use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ptss_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ptss_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_graph(dir: &Path) -> CString {
    let mut text = String::new();
    for h in 0..12 {
        for p in 0..3 {
            let t = (h + 2 * p + 1) % 12;
            text.push_str(&format!("e{h}\tr{p}\te{t}\n"));
        }
    }
    let path = dir.join("train.tsv");
    std::fs::write(&path, text).unwrap();
    cstr(path.to_str().unwrap())
}

unsafe fn load(dir: &Path) -> *mut PtssGraph {
    let path = write_graph(dir);
    let paths = [path.as_ptr()];
    let mut g = ptr::null_mut();
    assert_eq!(ptss_graph_load(paths.as_ptr(), 1, &mut g), PtssStatus::Ok);
    assert!(!g.is_null());
    g
}

unsafe fn embeddings(g: *const PtssGraph) -> *mut PtssEmbeddings {
    let mut e = ptr::null_mut();
    let model = cstr("transe");
    let st = ptss_embeddings_train(g, model.as_ptr(), 8, 5, 3, &mut e);
    assert_eq!(st, PtssStatus::Ok, "{}", last_error());
    e
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut stats = PtssGraphStats::default();
        assert_eq!(ptss_graph_stats(ptr::null(), &mut stats), PtssStatus::NullPointer);
        assert!(last_error().contains("graph"));
        let mut g = ptr::null_mut();
        assert_eq!(ptss_graph_load(ptr::null(), 1, &mut g), PtssStatus::NullPointer);
        assert_eq!(ptss_graph_num_triples(ptr::null()), 0);
        assert_eq!(ptss_matrix_rows(ptr::null()), 0);
        assert!(ptss_matrix_data(ptr::null()).is_null());
        ptss_graph_free(ptr::null_mut());
        ptss_dataset_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_previous_error() {
    unsafe {
        let mut s = PtssGraphStats::default();
        assert_eq!(ptss_graph_stats(ptr::null(), &mut s), PtssStatus::NullPointer);
        assert!(!ptss_last_error().is_null());
        let dir = tempfile::tempdir().unwrap();
        let g = load(dir.path());
        assert!(ptss_last_error().is_null());
        ptss_graph_free(g);
    }
}

#[test]
fn missing_file_is_io_error() {
    unsafe {
        let p = cstr("/nonexistent/triples.tsv");
        let paths = [p.as_ptr()];
        let mut g = ptr::null_mut();
        assert_eq!(ptss_graph_load(paths.as_ptr(), 1, &mut g), PtssStatus::Io);
        assert!(g.is_null());
        assert!(last_error().contains("triples.tsv"));
    }
}

#[test]
fn graph_stats_match_input() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let g = load(dir.path());
        let mut s = PtssGraphStats::default();
        assert_eq!(ptss_graph_stats(g, &mut s), PtssStatus::Ok);
        assert_eq!(s.num_entities, 12);
        assert_eq!(s.num_predicates, 3);
        assert_eq!(s.num_triples, 36);
        assert_eq!(ptss_graph_num_triples(g), 36);
        ptss_graph_free(g);
    }
}

#[test]
fn score_dataset_and_finetune() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let g = load(dir.path());
        let e = embeddings(g);

        let mut s = f64::NAN;
        assert_eq!(ptss_score(g, e, 4, 4, &mut s), PtssStatus::Ok);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(ptss_score(g, e, 0, 36, &mut s), PtssStatus::InvalidArgument);

        let mut d = ptr::null_mut();
        assert_eq!(ptss_dataset_build(g, e, 2, 7, &mut d), PtssStatus::Ok);
        let n = ptss_dataset_len(d);
        assert!(n > 0);
        let (mut a, mut b, mut score) = (0usize, 0usize, 0f64);
        for i in 0..n {
            assert_eq!(ptss_dataset_get(d, i, &mut a, &mut b, &mut score), PtssStatus::Ok);
            let mut direct = 0.0;
            assert_eq!(ptss_score(g, e, a, b, &mut direct), PtssStatus::Ok);
            assert!((direct - score).abs() < 1e-12);
        }
        assert_eq!(
            ptss_dataset_get(d, n, &mut a, &mut b, &mut score),
            PtssStatus::InvalidArgument
        );

        let path = cstr(dir.path().join("pairs.tsv").to_str().unwrap());
        assert_eq!(ptss_dataset_write(d, path.as_ptr()), PtssStatus::Ok);
        let mut d2 = ptr::null_mut();
        assert_eq!(ptss_dataset_read(path.as_ptr(), &mut d2), PtssStatus::Ok);
        assert_eq!(ptss_dataset_len(d2), n);

        let agg = cstr("had");
        let mut m = ptr::null_mut();
        let st = ptss_finetune(g, e, d2, agg.as_ptr(), 16, 2, 0.0, 1, &mut m);
        assert_eq!(st, PtssStatus::Ok, "{}", last_error());
        assert_eq!(ptss_matrix_rows(m), 36);
        assert_eq!(ptss_matrix_cols(m), 8);
        let data = std::slice::from_raw_parts(ptss_matrix_data(m), 36 * 8);
        assert!(data.iter().all(|v| v.is_finite() && v.abs() <= 1.0));

        let bad = cstr("concat");
        let mut m2 = ptr::null_mut();
        assert_ne!(
            ptss_finetune(g, e, d2, bad.as_ptr(), 0, 1, 0.0, 1, &mut m2),
            PtssStatus::Ok
        );
        assert!(m2.is_null());
        assert!(last_error().contains("concat"));

        ptss_matrix_free(m);
        ptss_dataset_free(d2);
        ptss_dataset_free(d);
        ptss_embeddings_free(e);
        ptss_graph_free(g);
    }
}

#[test]
fn unknown_model_is_rejected() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let g = load(dir.path());
        let model = cstr("word2vec");
        let mut e = ptr::null_mut();
        assert_ne!(
            ptss_embeddings_train(g, model.as_ptr(), 4, 1, 0, &mut e),
            PtssStatus::Ok
        );
        assert!(e.is_null());
        ptss_graph_free(g);
    }
}

#[test]
fn pipeline_with_missing_config_fails() {
    unsafe {
        let p = cstr("/nonexistent/experiment.toml");
        let st = ptss_run_pipeline(p.as_ptr(), false);
        assert!(matches!(st, PtssStatus::Io | PtssStatus::Config), "{st:?}");
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ptss_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ptss.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for sym in ["ptss_graph_load", "ptss_finetune", "ptss_last_error", "PTSS_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ptss.h\"\nint main(void) { PtssGraph *g = 0; return ptss_graph_num_triples(g) == 0 ? PTSS_STATUS_OK : 1; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler available, header syntax not checked"),
    }
}
