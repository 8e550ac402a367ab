use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dpuc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpuc")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const CONVERGE: &str = r#"
algorithm = "pcl"
n_grid = [50, 500]
trials = 3
epsilon = 1.0
m_test = 200
seed = 1
[distribution]
kind = "checkerboard"
dim = 1
cells_per_axis = 3
p = 0.1
"#;

const AUDIT: &str = r#"
runs = 20000
[mechanism]
kind = "pcl"
epsilon = 1.0
[sample]
points = [[0.1], [0.9]]
labels = [true, false]
[neighbor]
index = 1
label = true
"#;

#[test]
fn converge_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONVERGE);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = dpuc(&["converge", "--config", cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert!(a.starts_with(b"n,trials,metric,mean,stderr,occupancy_le_k\n50,3,excess_error,"));

    let stdout = dpuc(&["converge", "--config", cfg, "--threads", "1"]).stdout;
    assert_eq!(stdout, a);
    let reseeded = dpuc(&["converge", "--config", cfg, "--seed", "99"]).stdout;
    assert_ne!(reseeded, a);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(dpuc(&["converge", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.toml", &CONVERGE.replace("trials = 3", "trials = 0"));
    assert_eq!(dpuc(&["converge", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let fast_delta = write(
        dir.path(),
        "d.toml",
        &format!("{}\n[delta]\nkind = \"exponential\"\nrate = 0.1\n", CONVERGE.replace("\"pcl\"", "\"pcde\"")),
    );
    let o = dpuc(&["density", "--config", fast_delta.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
    // wrong subcommand for the algorithm
    let ok = write(dir.path(), "ok.toml", CONVERGE);
    assert_eq!(dpuc(&["density", "--config", ok.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dpuc(&["ssl", "--config", ok.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dpuc(&["converge", "--config", ok.to_str().unwrap(), "--threads", "0"]).status.code(), Some(2));
    assert_eq!(dpuc(&["converge"]).status.code(), Some(2));
}

#[test]
fn audit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", AUDIT);
    let o = dpuc(&["audit", "--config", good.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS"));
    assert!(o.stdout.starts_with(b"event,p_hat,q_hat,statistic,slack,pass\n"));

    let broken = write(
        dir.path(),
        "broken.toml",
        &AUDIT.replace("epsilon = 1.0", "epsilon = 1.0\nnoise_divisor = 10.0"),
    );
    let o = dpuc(&["audit", "--config", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));

    let far = write(dir.path(), "far.toml", &AUDIT.replace("index = 1", "index = 7"));
    assert_eq!(dpuc(&["audit", "--config", far.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn ssl_and_density_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let ssl = write(
        dir.path(),
        "s.toml",
        r#"
algorithm = "cssl"
trials = 5
epsilon = 1.0
[delta]
kind = "fixed"
value = 1e-4
[distribution]
kind = "threshold"
cut = 0.5
[ssl]
alpha = 0.1
beta = 0.1
n_unlabeled = 500
m_grid = [20, 40]
"#,
    );
    let o = dpuc(&["ssl", "--config", ssl.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("m_labeled,n_unlabeled,trials,success_rate,stderr\n20,500,5,"));

    let density = write(dir.path(), "d.toml", &CONVERGE.replace("\"pcl\"", "\"pcde\""));
    let o = dpuc(&["density", "--config", density.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains(",l1,"));
}
