use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use walkembed_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = we_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn triangle_with_tail() -> *mut WeGraph {
    let src = [0u32, 1, 2, 2];
    let dst = [1u32, 2, 0, 3];
    let mut g = ptr::null_mut();
    let s = unsafe { we_graph_from_edges(4, src.as_ptr(), dst.as_ptr(), 4, &mut g) };
    assert_eq!(s, WeStatus::WeOk);
    g
}

#[test]
fn graph_handles() {
    let g = triangle_with_tail();
    unsafe {
        assert_eq!(we_graph_num_nodes(g), 4);
        assert_eq!(we_graph_num_edges(g), 4);
        let mut d = 0;
        assert_eq!(we_graph_degree(g, 2, &mut d), WeStatus::WeOk);
        assert_eq!(d, 3);

        let mut pruned = ptr::null_mut();
        assert_eq!(we_graph_prune(g, 2, &mut pruned), WeStatus::WeOk);
        assert_eq!(we_graph_num_nodes(pruned), 3);
        assert_eq!(we_graph_num_edges(pruned), 3);
        we_graph_free(pruned);
        we_graph_free(g);
        we_graph_free(ptr::null_mut());
        assert_eq!(we_graph_num_nodes(ptr::null()), 0);
    }
}

#[test]
fn error_codes_and_messages() {
    let g = triangle_with_tail();
    unsafe {
        let mut d = 0;
        assert_eq!(we_graph_degree(g, 99, &mut d), WeStatus::WeErrOutOfRange);
        assert!(last_error().contains("99"));
        assert_eq!(
            we_graph_degree(g, 0, ptr::null_mut()),
            WeStatus::WeErrNullPointer
        );

        let mut out = ptr::null_mut();
        let missing = CString::new("/nonexistent/graph.tsv").unwrap();
        assert_eq!(we_graph_load(missing.as_ptr(), &mut out), WeStatus::WeErrIo);
        assert!(out.is_null());
        assert_eq!(
            we_graph_load(ptr::null(), &mut out),
            WeStatus::WeErrNullPointer
        );

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "0\t1\nnot an edge\n").unwrap();
        assert_eq!(
            we_graph_load(cstr(&bad).as_ptr(), &mut out),
            WeStatus::WeErrParse
        );
        assert!(last_error().contains("bad.tsv:2:"));

        let rec = cstr(dir.path());
        assert_eq!(
            we_sample(g, 4, 0, 1, 0, rec.as_ptr(), ptr::null_mut()),
            WeStatus::WeErrConfig
        );
        we_graph_free(g);

        assert_eq!(
            we_graph_generate_sbm(10, 20, 0.5, 0.1, 0, &mut out),
            WeStatus::WeErrConfig
        );
    }
}

#[test]
fn sample_train_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let records_dir = dir.path().join("records");
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(
            we_graph_generate_sbm(300, 3, 0.1, 0.005, 11, &mut g),
            WeStatus::WeOk
        );
        let csr = dir.path().join("g.csr");
        assert_eq!(we_graph_write_csr(g, cstr(&csr).as_ptr()), WeStatus::WeOk);
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            we_graph_load(cstr(&csr).as_ptr(), &mut reloaded),
            WeStatus::WeOk
        );
        assert_eq!(we_graph_num_edges(reloaded), we_graph_num_edges(g));
        we_graph_free(reloaded);

        let mut records = 0;
        let s = we_sample(g, 16, 3, 2, 5, cstr(&records_dir).as_ptr(), &mut records);
        assert_eq!(s, WeStatus::WeOk);
        assert!(records > 0);

        let cfg = CString::new(
            "mode = \"async\"\ndim = 16\nworkers = 1\nsteps = 400\nper_replica_batch_size = 128\n\
             num_neg_per_pos = 3\nreduction = \"sum\"\noptimizer = { kind = \"fixed_sgd\", lr = 0.02 }\n",
        )
        .unwrap();
        let mut e = ptr::null_mut();
        assert_eq!(
            we_train(cstr(&records_dir).as_ptr(), cfg.as_ptr(), &mut e),
            WeStatus::WeOk,
            "{}",
            last_error()
        );
        assert_eq!(we_embedding_num_nodes(e), 300);
        assert_eq!(we_embedding_dim(e), 16);

        let mut row = [0f32; 16];
        assert_eq!(we_embedding_row(e, 3, row.as_mut_ptr(), 16), WeStatus::WeOk);
        assert!(row.iter().any(|v| *v != 0.0));
        assert_eq!(
            we_embedding_row(e, 3, row.as_mut_ptr(), 8),
            WeStatus::WeErrBufferTooSmall
        );

        let ckpt = dir.path().join("e.ckpt");
        assert_eq!(we_embedding_save(e, cstr(&ckpt).as_ptr()), WeStatus::WeOk);
        let mut loaded = ptr::null_mut();
        assert_eq!(
            we_embedding_load(cstr(&ckpt).as_ptr(), &mut loaded),
            WeStatus::WeOk
        );
        let mut row2 = [0f32; 16];
        assert_eq!(
            we_embedding_row(loaded, 3, row2.as_mut_ptr(), 16),
            WeStatus::WeOk
        );
        assert_eq!(row, row2);

        let mut snr = 0.0;
        assert_eq!(we_edge_snr(g, e, 2000, 1, &mut snr), WeStatus::WeOk);
        assert!(snr > 1.0, "trained SNR {snr}");

        we_embedding_free(loaded);
        we_embedding_free(e);
        we_graph_free(g);
    }
}

#[test]
fn pipeline_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = format!(
        "run_dir = {:?}\nseed = 3\n\n[graph]\nsource = {{ sbm = {{ nodes = 200, classes = 2, p_in = 0.1, p_out = 0.01 }} }}\n\n\
         [sampler]\ngamma = 8\nwalk_length = 2\nnum_shards = 2\n\n\
         [train]\nmode = \"sync\"\ndim = 8\nper_replica_batch_size = 64\nnum_neg_per_pos = 3\nnum_replicas = 2\nsteps = 20\n\
         optimizer = {{ kind = \"fixed_sgd\", lr = 1.0 }}\n\n[eval]\nnon_edge_samples = 500\nrecall_nodes = 10\n",
        run.to_str().unwrap()
    );
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    let s = unsafe { we_run_pipeline(cstr(&path).as_ptr()) };
    assert_eq!(s, WeStatus::WeOk, "{}", last_error());
    assert!(run.join("eval").join("report.json").exists());
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/walkembed.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "we_graph_load",
        "we_graph_from_edges",
        "we_graph_generate_sbm",
        "we_graph_prune",
        "we_graph_free",
        "we_sample",
        "we_train",
        "we_embedding_row",
        "we_embedding_free",
        "we_edge_snr",
        "we_run_pipeline",
        "we_last_error_message",
        "typedef struct WeGraph WeGraph",
        "WE_ERR_OUT_OF_RANGE = 7",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary> → target/<profile>
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libwalkembed_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(lib) = static_lib() else {
        eprintln!("skipping: static library not found next to the test binary");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler on PATH");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe)
        .arg(dir.path().join("records"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        run.status.success(),
        "smoke failed: {stdout}{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.contains("nodes 200"));
    assert!(stdout.contains("snr "));
}
