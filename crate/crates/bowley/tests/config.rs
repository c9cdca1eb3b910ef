use std::path::{Path, PathBuf};

use bowley::config::{load, parse, DataSource, FollowerSpec, Overrides};
use bowley::Error;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const MINIMAL: &str = r#"{
  "data": {"kind": "losses", "losses": [0, 2, 5, 20], "probs": [0.4, 0.3, 0.2, 0.1]},
  "game": {"problem": "p1", "mode": "indemnity", "farmer": {"kind": "cvar", "alpha": 0.8}}
}"#;

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            parse(&path, &text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}

#[test]
fn defaults_fill_missing_sections() {
    let c = parse(Path::new("x.json"), MINIMAL).unwrap();
    assert_eq!(c.solver.seed, 0);
    assert_eq!(c.oracle.follower, FollowerSpec::Layers);
    assert_eq!(c.sweep.lambdas, vec![0.1, 0.5, 0.9]);
    assert!((c.game.cost.mu - 0.02).abs() < 1e-15);
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let text = MINIMAL.replace(r#""problem": "p1""#, r#""problem": "p1", "thetta": 1"#);
    let e = parse(Path::new("x.json"), &text).unwrap_err();
    match &e {
        Error::Schema { field, message, .. } => {
            assert_eq!(field, "game.thetta");
            assert!(message.contains("thetta"), "{message}");
        }
        other => panic!("{other}"),
    }
    assert_eq!(e.exit_code(), 2);

    let text = MINIMAL.replace(r#""alpha": 0.8"#, r#""alpha": "high""#);
    let Error::Schema { field, .. } = parse(Path::new("x.json"), &text).unwrap_err() else {
        panic!()
    };
    assert_eq!(field, "game.farmer");
}

#[test]
fn invalid_values_are_config_errors() {
    let text = MINIMAL.replace(r#""alpha": 0.8"#, r#""alpha": 1.5"#);
    assert_eq!(parse(Path::new("x.json"), &text).unwrap_err().exit_code(), 2);
    let text = MINIMAL.replacen('{', r#"{"sweep": {"lambdas": [1.2]},"#, 1);
    assert!(matches!(parse(Path::new("x.json"), &text), Err(Error::Config(_))));
}

#[test]
fn overrides_beat_the_file_and_paths_resolve_next_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let text = MINIMAL.replacen('{', r#"{"out": "results", "solver": {"seed": 3},"#, 1);
    std::fs::write(&path, text).unwrap();

    let l = load(&path, &Overrides::default()).unwrap();
    assert_eq!(l.out, dir.path().join("results"));
    assert_eq!(l.config.solver.seed, 3);

    let o = Overrides { out: Some("elsewhere".into()), seed: Some(9) };
    let l = load(&path, &o).unwrap();
    assert_eq!(l.out, PathBuf::from("elsewhere"));
    assert_eq!(l.config.solver.seed, 9);
}

#[test]
fn scenario_paths_are_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let s = bowley_core::dataio::synth_generate(1, 5, 0.2, 6).unwrap();
    bowley::files::write_scenarios(&dir.path().join("s.csv"), &s).unwrap();
    let path = dir.path().join("run.json");
    let text = MINIMAL.replace(
        r#"{"kind": "losses", "losses": [0, 2, 5, 20], "probs": [0.4, 0.3, 0.2, 0.1]}"#,
        r#"{"kind": "scenarios", "path": "s.csv"}"#,
    );
    std::fs::write(&path, text).unwrap();
    let l = load(&path, &Overrides::default()).unwrap();
    assert!(matches!(l.config.data, DataSource::Scenarios { .. }));
    assert_eq!(l.scenarios().unwrap(), s);
}
