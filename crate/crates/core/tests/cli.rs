use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use cofed::cli::RunConfigFile;
use cofed::orchestrator::{read_manifest, run_round, RoundReport};

const SMALL: &str = r#"
master_seed = 11
alpha = 0.3

[data]
source = "synthetic"
test_per_subclass = 20

[data.taxonomy]
n_superclasses = 5
subclasses_per_superclass = 2
instances_per_subclass = 80
dim = 4

[data.partition]
superclasses_per_participant = { min = 2, max = 3 }
instances_per_superclass = 10

[data.unlabeled]
size = 200

[[participants]]
kind = "logistic"
train = { epochs = 20 }

[[participants]]
kind = "knn"

[[participants]]
kind = "naive_bayes"
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cofed"));
    c.env_remove("COFED_OUTPUT_ROOT");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for out in ["a", "b"] {
        run_ok(bin().args(["run"]).arg(&cfg).args(["--out"]).arg(tmp.path().join(out)));
    }
    for f in ["report.txt", "report.jsonl", "report.json", "artifacts.json", "config.toml"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(f)).unwrap(),
            std::fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    // The written report equals the library's own run.
    let report: RoundReport = serde_json::from_str(&read(tmp.path().join("a/report.json"))).unwrap();
    let expected = run_round(&RunConfigFile::parse(SMALL).unwrap().federation().unwrap()).unwrap();
    assert_eq!(report, expected.report);
    // The canonical config re-parses to the same thing.
    let canonical = RunConfigFile::parse(&read(tmp.path().join("a/config.toml"))).unwrap();
    assert_eq!(canonical, RunConfigFile::parse(SMALL).unwrap());
}

#[test]
fn records_format_is_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = run_ok(
        bin()
            .args(["--format", "records", "run"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join("r")),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["record"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "participant").count(), 3);
    assert_eq!(kinds.last().unwrap(), "summary");
}

#[test]
fn output_root_env_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    run_ok(
        bin()
            .env("COFED_OUTPUT_ROOT", tmp.path().join("root"))
            .args(["--seed", "99", "run"])
            .arg(&cfg)
            .args(["--out", "x"]),
    );
    let written = RunConfigFile::parse(&read(tmp.path().join("root/x/config.toml"))).unwrap();
    assert_eq!(written.master_seed, 99);
}

#[test]
fn sweep_alpha_table_has_one_row_per_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = run_ok(
        bin()
            .args(["sweep-alpha"])
            .arg(&cfg)
            .args(["--alphas", "0,0.25,0.5,0.75,1", "--out"])
            .arg(tmp.path().join("s")),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let counts: Vec<usize> = rows
        .iter()
        .map(|r| r.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert_eq!(*counts.last().unwrap(), 0);
    assert!(tmp.path().join("s/sweep_alpha.jsonl").exists());
}

#[test]
fn sweep_size_uses_config_list() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replacen("alpha = 0.3\n", "alpha = 0.3\n[sweep]\nsizes = [50, 100, 200]\n", 1);
    let cfg = write_config(tmp.path(), &text);
    let out = run_ok(bin().args(["sweep-size"]).arg(&cfg).arg("--out").arg(tmp.path().join("z")));
    let text = String::from_utf8(out.stdout).unwrap();
    let sizes: Vec<&str> = text.lines().skip(1).map(|r| r.split_whitespace().next().unwrap()).collect();
    assert_eq!(sizes, ["50", "100", "200"]);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing_kind = SMALL.replace("kind = \"knn\"\n", "");
    let cfg = write_config(tmp.path(), &missing_kind);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("participant 1"), "{err}");

    let cfg = write_config(tmp.path(), &format!("bogus_key = 1\n{SMALL}"));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = bin().arg("run").arg(tmp.path().join("nope.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), &SMALL.replace("alpha = 0.3", "alpha = 1.5"));
    assert_eq!(bin().arg("run").arg(&cfg).output().unwrap().status.code(), Some(2));
}

#[test]
fn generate_data_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for out in ["d1", "d2"] {
        run_ok(
            bin()
                .args(["generate-data", "--config"])
                .arg(&cfg)
                .args(["--mode", "non-iid", "--out"])
                .arg(tmp.path().join(out)),
        );
    }
    let m1 = read_manifest(&tmp.path().join("d1/manifest.json")).unwrap();
    let m2 = read_manifest(&tmp.path().join("d2/manifest.json")).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(m1.participants.len(), 3);
    assert_eq!(m1.public.rows, 200);
    for p in &m1.participants {
        let supers: Vec<_> = p.owned_subclasses.iter().map(|o| o.superclass).collect();
        assert_eq!(supers, p.label_space.categories());
        for o in &p.owned_subclasses {
            assert!((1..=2).contains(&o.subclasses.len()));
        }
        assert_eq!(p.train.rows, 10 * p.label_space.len());
    }

    // Default flags: ten participants and one public file.
    run_ok(bin().args(["generate-data", "--out"]).arg(tmp.path().join("d3")));
    let m3 = read_manifest(&tmp.path().join("d3/manifest.json")).unwrap();
    assert_eq!(m3.participants.len(), 10);
    assert!(tmp.path().join("d3").join(&m3.public.path).exists());
}

#[test]
fn file_backed_run_matches_synthetic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    run_ok(bin().args(["generate-data", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("data")));
    let participants = &SMALL[SMALL.find("[[participants]]").unwrap()..];
    let files = format!(
        "master_seed = 11\nalpha = 0.3\n[data]\nsource = \"files\"\nmanifest = \"data/manifest.json\"\n{participants}"
    );
    let fcfg = tmp.path().join("files.toml");
    std::fs::write(&fcfg, files).unwrap();
    run_ok(bin().arg("run").arg(&fcfg).arg("--out").arg(tmp.path().join("from_files")));
    run_ok(bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("synthetic")));
    assert_eq!(
        read(tmp.path().join("from_files/report.json")),
        read(tmp.path().join("synthetic/report.json"))
    );

    // A tampered file is caught by the manifest hash.
    let public = tmp.path().join("data/public.csv");
    let mut text = read(&public);
    text.push_str(&text.lines().last().unwrap().to_string());
    text.push('\n');
    std::fs::write(&public, text).unwrap();
    let out = bin().arg("run").arg(&fcfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sha256"));
}

#[test]
fn analyze_appends_to_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let dir = tmp.path().join("r");
    run_ok(bin().arg("run").arg(&cfg).arg("--out").arg(&dir));
    let out = run_ok(bin().arg("analyze").arg(&dir));
    assert!(String::from_utf8_lossy(&out.stdout).contains("eps_f'"));
    let lines = read(dir.join("analysis.jsonl"));
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "analysis");

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(bin().arg("analyze").arg(&empty).output().unwrap().status.code(), Some(3));
}

/// Starts `cofed serve` on an ephemeral port and returns the child with
/// the bound address.
fn spawn_serve(cfg: &Path, out: &Path, extra: &[&str]) -> (Child, String) {
    let mut child = bin()
        .arg("serve")
        .arg(cfg)
        .args(["--bind", "127.0.0.1:0", "--out"])
        .arg(out)
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line}")).to_string();
    (child, addr)
}

const SINGLE: &str = r#"
master_seed = 4
alpha = 0.3
[data]
source = "synthetic"
test_per_subclass = 20
[data.taxonomy]
n_superclasses = 4
subclasses_per_superclass = 2
instances_per_subclass = 60
dim = 3
[data.partition]
superclasses_per_participant = { min = 2, max = 3 }
instances_per_superclass = 10
[data.unlabeled]
size = 100
[[participants]]
kind = "logistic"
train = { epochs = 10 }
"#;

#[test]
fn serve_and_join_match_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SINGLE);
    let (server, addr) = spawn_serve(&cfg, &tmp.path().join("serve"), &[]);
    let join = run_ok(
        bin()
            .args(["--format", "records", "join"])
            .arg(&cfg)
            .args(["--participant", "0", "--connect", &addr, "--out"])
            .arg(tmp.path().join("join")),
    );
    let status = server.wait_with_output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let expected = run_round(&RunConfigFile::parse(SINGLE).unwrap().federation().unwrap()).unwrap();
    let line = String::from_utf8(join.stdout).unwrap();
    let mut got: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    got.as_object_mut().unwrap().remove("record");
    assert_eq!(got, serde_json::to_value(&expected.report.participants[0]).unwrap());
}

#[test]
fn join_with_wrong_public_dataset_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SINGLE);
    let (mut server, addr) = spawn_serve(&cfg, &tmp.path().join("serve"), &["--timeout-secs", "2"]);
    let other = tmp.path().join("other.toml");
    std::fs::write(&other, SINGLE.replace("size = 100", "size = 101")).unwrap();
    let out = bin()
        .arg("join")
        .arg(&other)
        .args(["--participant", "0", "--connect", &addr])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));
    assert!(!server.wait().unwrap().success());
}

#[test]
fn serve_times_out_without_enough_participants() {
    let tmp = tempfile::tempdir().unwrap();
    let two = SINGLE.replace("[[participants]]", "[[participants]]\nkind = \"knn\"\n[[participants]]");
    let cfg = write_config(tmp.path(), &two);
    let (server, addr) = spawn_serve(&cfg, &tmp.path().join("serve"), &["--timeout-secs", "1"]);
    let join = bin()
        .arg("join")
        .arg(&cfg)
        .args(["--participant", "0", "--connect", &addr])
        .output()
        .unwrap();
    assert_eq!(join.status.code(), Some(4));
    let out = server.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("timed out"));
}
