//! End-to-end experiment runs against temporary output directories.

use std::fs;

use mfspec_core::config::ExperimentConfig;
use mfspec_core::report::{recompute_derived, SpectrumReport};
use mfspec_core::run::run_in;
use mfspec_core::Error;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

#[test]
fn ahlfors_run_writes_artifacts_and_passes() {
    let cfg = config(
        r#"
name = "ahlfors"
tasks = ["tau", "qzero", "dims", "coarse", "report"]
[measure]
kind = "builtin"
name = "ahlfors-4of8"
[levels]
tau = [1, 12]
dims = [1, 12]
coarse = [1, 10]
"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(&cfg, dir.path()).unwrap();
    for f in ["report.json", "summary.csv", "tau_neumann.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let rep = &out.report;
    assert!((rep.num("q_zero.neumann").unwrap() - 2.0).abs() < 1e-9);
    assert!(rep.all_pass());

    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back = SpectrumReport::from_json(&text).unwrap();
    assert!(back.recheck().iter().all(|c| c.agrees()));
    let derived = recompute_derived(&back);
    assert_eq!(derived.len(), 2);
    assert!(derived.iter().all(|(_, stored, fresh)| (stored - fresh).abs() <= 1e-12));
    let tau = fs::read_to_string(dir.path().join("tau_neumann.csv")).unwrap();
    assert!(tau.starts_with("mode,n,q,tau"));
}

#[test]
fn refusal_names_the_stage() {
    let cfg = config(
        r#"
name = "cusp-1"
tasks = ["tau"]
[measure]
kind = "builtin"
name = "cusp-1"
"#,
    );
    let dir = tempfile::tempdir().unwrap();
    match run_in(&cfg, dir.path()) {
        Err(Error::Task { task, source }) => {
            assert_eq!(task, "set_function_eval");
            assert!(matches!(*source, Error::Divergent { .. }));
        }
        other => panic!("expected refusal, got {:?}", other.map(|o| o.files)),
    }
}
