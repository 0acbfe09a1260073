use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn fiocalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiocalc")).args(args).env_remove("FIOCALC_OUT_DIR").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    read(p).lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn validate_map_half_wave_shorthand() {
    let out = scratch("validate_hw");
    let o = fiocalc(&["validate-map", "--json", r#"{"task":"validate-map","map":"half_wave","t":1}"#, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("validate_map.csv"));
    assert_eq!(rows[0], ["check", "residual", "tol", "pass"]);
    assert_eq!(rows.len(), 8);
    assert!(rows[1..].iter().all(|r| r[3] == "true"));
    let report: Value = serde_json::from_str(&read(&out.join("validate_map.json"))).unwrap();
    assert_eq!(report["data"]["map"], "half_wave(t=1)");
}

#[test]
fn indices_identity_half_wave_gives_one_at_n2() {
    let out = scratch("indices");
    let cfg = r#"{"task":"indices","maps":["identity","half_wave"],"point":{"y":[0.2,-0.4],"eta":[1.0,0.5]}}"#;
    let o = fiocalc(&["indices", "--json", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("indices.csv"));
    assert_eq!(rows[0], ["y1", "y2", "eta1", "eta2", "k", "kappa", "r"]);
    assert_eq!(rows[1][4], "1");
}

#[test]
fn expected_value_mismatch_exits_2_and_names_the_check() {
    let out = scratch("mismatch");
    let cfg = r#"{"maps":["identity","half_wave"],"point":{"y":[0,0],"eta":[1,0],"k":0}}"#;
    let o = fiocalc(&["indices", "--json", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("MISMATCH composition_index [expected k]"), "{}", stdout(&o));
    // results are still written
    assert!(out.join("indices.csv").exists());
    let report: Value = serde_json::from_str(&read(&out.join("indices.json"))).unwrap();
    assert_eq!(report["mismatches"][0]["anchor"], "expected k");
}

#[test]
fn tolerance_override_turns_round_off_into_a_mismatch() {
    let out = scratch("tight");
    let cfg = r#"{"map":{"map":"flow","n":2,"t":1.5,"steps":50},"samples":5}"#;
    let o = fiocalc(&["validate-map", "--json", cfg, "--tol", "1e-300", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("MISMATCH validate_canonical [")));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let out = scratch("errors");
    let o = out.to_str().unwrap();
    let cases: [&[&str]; 7] = [
        &["no-such-task"],
        &["indices", "--tol"],
        &["validate-map", "--json", r#"{"map":"half_wave","t":1,"bogus":2}"#, "--out", o],
        &["indices", "--json", r#"{"maps":["identity","identity"],"point":{"y":[0],"eta":[1]},"extra":1}"#, "--out", o],
        &["indices", "--json", r#"{"task":"validate-map","map":"identity"}"#, "--out", o],
        &["validate-map", "--json", "{not json", "--out", o],
        &["run", "--json", r#"{"map":"identity"}"#, "--out", o],
    ];
    for args in cases {
        let r = fiocalc(args);
        assert_eq!(code(&r), 1, "{args:?}: {}{}", stdout(&r), stderr(&r));
    }
    // a domain error: the zero covector is outside every conic domain
    let r = fiocalc(&["indices", "--json", r#"{"maps":["identity","identity"],"point":{"y":[0],"eta":[0]}}"#, "--out", o]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert_eq!(code(&fiocalc(&["--help"])), 0);
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let cfg = workspace().join("docs/configs/maslov_caustic.json");
    let runs: Vec<PathBuf> = (0..2)
        .map(|k| {
            let out = scratch(&format!("determinism_{k}"));
            let o = fiocalc(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
            let v = fiocalc(&["validate-map", "--json", r#"{"map":"lift","f":"y+y^3","samples":40}"#, "--seed", "7", "--out", out.to_str().unwrap()]);
            assert_eq!(code(&v), 0, "{}", stderr(&v));
            out
        })
        .collect();
    for name in ["maslov_path.csv", "maslov_events.csv", "validate_map.csv"] {
        assert_eq!(std::fs::read(runs[0].join(name)).unwrap(), std::fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
    let rows = csv_rows(&runs[0].join("maslov_events.csv"));
    assert_eq!(rows.len(), 2, "one fold crossing");
}

#[test]
fn seed_changes_the_samples() {
    let run = |seed: &str, name: &str| {
        let out = scratch(name);
        let o = fiocalc(&["validate-map", "--json", r#"{"map":{"map":"flow","n":2,"t":1.0,"steps":40},"samples":3}"#, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read(&out.join("validate_map.csv"))
    };
    assert_ne!(run("1", "seed_a"), run("2", "seed_b"));
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let out = scratch("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_fiocalc"))
        .args(["validate-map", "--json", r#"{"map":"identity","samples":3}"#])
        .env("FIOCALC_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("validate_map.csv").exists());

    // the config's "out" beats the environment, the flag beats both
    let cfg_dir = scratch("from_cfg");
    let flag_dir = scratch("from_flag");
    let cfg = format!(r#"{{"map":"identity","samples":3,"out":{}}}"#, serde_json::to_string(&cfg_dir).unwrap());
    let o = Command::new(env!("CARGO_BIN_EXE_fiocalc")).args(["validate-map", "--json", &cfg]).env("FIOCALC_OUT_DIR", &out).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(cfg_dir.join("validate_map.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_fiocalc"))
        .args(["validate-map", "--json", &cfg, "--out", flag_dir.to_str().unwrap()])
        .env("FIOCALC_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag_dir.join("validate_map.csv").exists());
}

#[test]
fn config_from_stdin() {
    use std::io::Write;
    let out = scratch("stdin");
    let mut child = Command::new(env!("CARGO_BIN_EXE_fiocalc"))
        .args(["run", "-", "--out", out.to_str().unwrap()])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(br#"{"task":"validate-map","map":"identity","n":2,"samples":4}"#).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("validate_map.csv").exists());
}

#[test]
fn verify_suite_runs_selected_criteria() {
    let out = scratch("suite");
    let o = fiocalc(&["verify-suite", "--only", "A1,A2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("verify_suite.csv"));
    assert_eq!(rows.iter().skip(1).map(|r| (r[0].as_str(), r.last().unwrap().as_str())).collect::<Vec<_>>(), [("A1", "true"), ("A2", "true")]);
    assert!(stdout(&o).contains("acceptance: 2 passed, 0 failed"));
    assert_eq!(code(&fiocalc(&["verify-suite", "--only", "A99", "--out", out.to_str().unwrap()])), 1);
}

#[test]
fn extract_symbol_adjoint_and_kernel_grid() {
    let out = scratch("extract");
    let cfg = workspace().join("docs/configs/extract_adjoint_n2.json");
    let o = fiocalc(&["extract-symbol", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let report: Value = serde_json::from_str(&read(&out.join("extract_symbol.json"))).unwrap();
    assert_eq!(report["data"]["nearer"], "with adjoint index");
    let v = &report["data"]["extraction"]["value"];
    let (re, im) = (v[0].as_f64().unwrap(), v[1].as_f64().unwrap());
    assert!(re.abs() < 0.01 && (im - 1.0).abs() < 0.01, "{re} {im}");

    let out = scratch("grid");
    let cfg = workspace().join("docs/configs/extract_identity_grid.json");
    let o = fiocalc(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let bytes = std::fs::read(out.join("kernel.fiok")).unwrap();
    assert_eq!(&bytes[..4], b"FIOK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 41);
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
    assert_eq!(&bytes[24..28], b"c128");
    assert_eq!(bytes.len(), 28 + 41 * 2 * 16);
}

#[test]
fn compose_symbols_with_quadrature_oracle() {
    let out = scratch("compose");
    let cfg = workspace().join("docs/configs/compose_half_waves.json");
    let o = fiocalc(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("compose_oracle.csv"));
    assert_eq!(rows[1].last().unwrap(), "corrected");

    let out = scratch("compose_n2");
    let cfg = workspace().join("docs/configs/compose_n2.json");
    let o = fiocalc(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("compose_symbols.csv"));
    let k_star = rows[0].iter().position(|h| h == "k_star").unwrap();
    assert!(rows[1..].iter().all(|r| r[k_star] == "1"));
}

fn schema() -> jsonschema::Validator {
    let s: Value = serde_json::from_str(&read(&workspace().join("docs/config.schema.json"))).expect("schema is JSON");
    jsonschema::validator_for(&s).expect("schema compiles")
}

#[test]
fn shipped_configs_match_the_schema() {
    let v = schema();
    let dir = workspace().join("docs/configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg: Value = serde_json::from_str(&read(&p)).unwrap();
        let errors: Vec<String> = v.iter_errors(&cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
        seen += 1;
    }
    assert!(seen >= 6);
    for bad in [
        r#"{"task":"validate-map","map":"half_wave","t":1,"bogus":2}"#,
        r#"{"task":"indices","maps":["identity"]}"#,
        r#"{"task":"extract-symbol","kernel":{"map":"identity"},"probe":{"y0":[0],"eta0":[1],"lambdas":[1,2]}}"#,
        r#"{"task":"verify-suite","only":["B1"]}"#,
        r#"{"task":"nope"}"#,
    ] {
        assert!(!v.is_valid(&serde_json::from_str(bad).unwrap()), "{bad}");
    }
}

#[test]
fn shipped_configs_run() {
    let dir = workspace().join("docs/configs");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for p in names {
        let out = scratch(&format!("shipped_{}", p.file_stem().unwrap().to_string_lossy()));
        let o = fiocalc(&["run", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}: {}{}", p.display(), stdout(&o), stderr(&o));
    }
}
