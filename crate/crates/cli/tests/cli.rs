use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn hindsight(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hindsight"))
        .args(args)
        .env("HINDSIGHT_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn example() -> String {
    core_fixture("running_example.ir").display().to_string()
}

#[test]
fn loop_writes_golden_transcript_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = hindsight(&["loop", &example(), "--schedules", "exhaustive", "--scheme", "min"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/example_loop.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
    assert_eq!(fs::read_to_string(dir.path().join("transcript.txt")).unwrap(), golden);
    for f in ["pi.txt", "scheme.txt", "counterexamples.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ces = fs::read_to_string(dir.path().join("counterexamples.txt")).unwrap();
    assert!(ces.contains("CE main.str proxy:String:{get,mkStr}"));
    assert!(!ces.contains("dataCopy"));
}

#[test]
fn artifacts_are_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = hindsight(&["loop", &example(), "--schedules", "random:3:8", "--report-reduction"], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["transcript.txt", "pi.txt", "scheme.txt", "counterexamples.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_reduction_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = hindsight(&["loop", &example(), "--schedules", "list:0,1", "--report-reduction"], dir.path());
    let s = stdout(&o);
    assert!(s.contains("monitors initial: naive 6 (alloc 1), min 5 (alloc 1), opt 5 (alloc 1)"), "{s}");
}

#[test]
fn analyze_empty_entry_gives_empty_pi() {
    let dir = tempfile::tempdir().unwrap();
    let empty = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/empty.ir");
    let o = hindsight(&["analyze", empty.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("pi.txt")).unwrap(), "");
}

#[test]
fn query_reads_only_the_persisted_pi() {
    let dir = tempfile::tempdir().unwrap();
    hindsight(&["loop", &example(), "--schedules", "exhaustive"], dir.path());
    let pi = dir.path().join("pi.txt");
    let bundle = example();
    let q = |args: &[&str]| {
        let mut all = vec!["query", bundle.as_str(), "--pi", pi.to_str().unwrap()];
        all.extend_from_slice(args);
        stdout(&hindsight(&all, dir.path()))
    };
    assert_eq!(q(&["alias", "str", "dataCopy"]), "true\n");
    assert_eq!(q(&["types", "data"]), "String\n");
    assert_eq!(q(&["flows"]), "mkStr -> sendHttp\n");

    // A stale Π without the feedback edges answers accordingly.
    fs::write(&pi, "main.list -> site:o_list\n").unwrap();
    assert_eq!(q(&["alias", "str", "dataCopy"]), "false\n");
    assert_eq!(q(&["flows"]), "");
}

#[test]
fn inferred_specs_restore_the_missing_edges() {
    let dir = tempfile::tempdir().unwrap();
    let mk = core_fixture("running_example_specs/mkStr.spec").display().to_string();
    let o = hindsight(&["infer", &example(), "--specs", &mk, "--target", "data -> site:o_str"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).ends_with("cost 2\n"));
    let add = fs::read_to_string(dir.path().join("specs/add.spec")).unwrap();
    assert_eq!(add, "field g library\nspec add(this, ob) {\n  this.g = ob @pess_add_0\n}\n");

    let inferred = dir.path().join("specs").display().to_string();
    let out2 = tempfile::tempdir().unwrap();
    let o = hindsight(&["analyze", &example(), "--specs", &mk, "--specs", &inferred], out2.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pi = fs::read_to_string(out2.path().join("pi.txt")).unwrap();
    assert!(pi.contains("main.dataCopy -> site:o_str"), "{pi}");
}

#[test]
fn proxy_specs_from_counterexamples() {
    let dir = tempfile::tempdir().unwrap();
    let ces = dir.path().join("ces.txt");
    fs::write(&ces, "CE main.str proxy:String:{mkStr}\n").unwrap();
    let o = hindsight(&["infer", &example(), "--counterexamples", ces.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("specs/proxies.spec")).unwrap(), "proxyspec String mkStr\n");
}

#[test]
fn execute_writes_reports_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = hindsight(&["execute", &example(), "--schedule", "1", "--trace"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "R c_mkStr 0 String\nR o_list 1 List\nR c_get 0 String\n");
    assert!(fs::read_to_string(dir.path().join("trace.txt")).unwrap().contains("B main.dataCopy 0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hindsight(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(hindsight(&["loop", &example(), "--schedules", "sometimes"], dir.path()).status.code(), Some(2));
    assert_eq!(hindsight(&["oracle-check", "--corpus", "seed=x"], dir.path()).status.code(), Some(2));
    let bad = dir.path().join("bad.ir");
    fs::write(&bad, "func main() program { x = call nowhere() }\n").unwrap();
    let o = hindsight(&["analyze", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
    let o = hindsight(&["infer", &example(), "--target", "data -> site:o_str"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_check_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = hindsight(&["oracle-check", "--corpus", "seed=7", "n=3", "--min-pairs", "0"], dir.path());
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert_eq!(s.lines().filter(|l| l.contains(": PASS")).count(), 7, "{s}");
}
