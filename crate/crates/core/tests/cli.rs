use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oagd::experiment::read_csv;

const QUADRATIC: &str = r#"
problem = "quadratic"
rule = "alt_sqrt"
horizon = 64
regime = "strongly_convex"
baseline = true
output = "out/quad"
"#;

fn oagd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oagd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.toml", QUADRATIC);
    let out = oagd(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = dir.path().join("out/quad.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(
        header,
        "t,f_value,bd_regret_cum,bs_regret_cum,bl_regret_cum,p2_cum,y2_cum,alpha_t,K_t,inner_residual,wall_nanos"
    );
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().enumerate().all(|(i, r)| r.t == i + 1));
    assert!(dir.path().join("out/quad.baseline.csv").exists());

    let meta: toml::Value = toml::from_str(&fs::read_to_string(dir.path().join("out/quad.meta.toml")).unwrap()).unwrap();
    assert_eq!(meta["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(meta["config"]["horizon"].as_integer(), Some(64));
    assert_eq!(meta["schedule"]["k_rule"].as_str(), Some("strongly_convex"));
    assert!(meta["derived"]["kappa_g"].as_float().unwrap() > 1.0);
    let bd = meta["summary"]["bd_regret"].as_float().unwrap();
    assert!((bd - rows.last().unwrap().bd_regret_cum.unwrap()).abs() < 1e-12);
}

#[test]
fn sweep_writes_one_run_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.toml", QUADRATIC);
    let out = oagd(&["sweep", "--config", &cfg, "--windows", "1,4,T"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for label in ["1", "4", "T"] {
        let rows = read_csv(&dir.path().join(format!("out/quad_w{label}.csv"))).unwrap();
        assert_eq!(rows.len(), 64);
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    let windows: Vec<&str> = stdout.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(windows, ["1", "4", "64"]);
}

#[test]
fn validate_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.toml", QUADRATIC);
    let out = oagd(&["validate", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: 64 rounds"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn errors_exit_nonzero_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", format!("{QUADRATIC}\nlearning_rate = 3\n"), 2, "invalid_config"),
        ("manual.toml", "problem = \"quadratic\"\nrule = \"alt_sqrt\"\nhorizon = 8\nregime = \"manual\"\nalpha = 0.1\n".into(), 2, "invalid_config"),
        (
            "missing_data.toml",
            "problem = \"ho\"\ndataset = \"absent.csv\"\nlabel_column = \"y\"\nhorizon = 8\nregime = \"manual\"\nalpha = 0.1\nbeta = 0.1\nk = 1\n".into(),
            3,
            "io_error",
        ),
    ];
    for (name, body, code, category) in cases {
        let cfg = write_config(dir.path(), name, &body);
        let out = oagd(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(code), "{name}: {}", stderr(&out));
        assert!(stderr(&out).starts_with(&format!("error_category={category} ")), "{name}: {}", stderr(&out));
    }
    let out = oagd(&["validate", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bundled_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["quadratic.toml", "synthetic.toml", "elastic_net.toml"] {
        let out = oagd(&["validate", "--config", root.join(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
    }
}
