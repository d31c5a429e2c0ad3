use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_equivquad"));
    c.env_remove("EQUIVQUAD_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const QUICK: &str = r#"
architecture = "ARCH"
seed = 3
total_steps = STEPS

[train]
warmup_steps = 100
batch_size = 32
eval_interval = 100
eval_episodes = 2

[env]
max_steps = 100
"#;

fn quick(arch: &str, steps: usize) -> String {
    QUICK.replace("ARCH", arch).replace("STEPS", &steps.to_string())
}

const STILL_ENV: &str = r#"
architecture = "mod-emlp"

[env.init]
position = 0.0
velocity = 0.0
angular_velocity = 0.0
attitude = 0.0
"#;

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> f64 {
    let i = rows[0].iter().position(|h| h == name).unwrap();
    rows[1][i].parse().unwrap()
}

fn train(dir: &Path, arch: &str, steps: usize, out: &str) -> PathBuf {
    let cfg = write(dir, &format!("{arch}-{steps}.toml"), &quick(arch, steps));
    let o = run(&["--quiet", "--out", dir.join(out).to_str().unwrap(), "train", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(out).join(format!("{arch}-seed3"))
}

#[test]
fn zero_step_training_writes_initial_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = train(tmp.path(), "mod-emlp", 0, "runs");
    for f in ["config.toml", "curve.csv", "final.ckpt", "best.ckpt"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let rows = read_csv(&run_dir.join("curve.csv"));
    assert_eq!(rows[0], ["step", "eval_mean", "eval_std", "actor_loss", "critic_loss"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "0");
}

#[test]
fn training_is_deterministic_and_checkpoints_periodically() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = quick("mono-mlp", 300);
    text = text.replace("seed = 3", "seed = 3\ncheckpoint_interval = 200");
    let cfg = write(tmp.path(), "det.toml", &text);
    let mut curves = Vec::new();
    for out in ["a", "b"] {
        let o = run(&["--quiet", "--out", tmp.path().join(out).to_str().unwrap(), "--config", cfg.to_str().unwrap(), "train"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let d = tmp.path().join(out).join("mono-mlp-seed3");
        curves.push(std::fs::read(d.join("curve.csv")).unwrap());
        assert!(d.join("checkpoints/step-00000200.ckpt").exists());
    }
    assert_eq!(curves[0], curves[1]);
    assert_eq!(read_csv_bytes(&curves[0]).len(), 5);
}

fn read_csv_bytes(b: &[u8]) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new().has_headers(false).from_reader(b).records().map(Result::unwrap).collect()
}

#[test]
fn global_seed_and_environment_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &quick("mod-mlp", 0));
    let o = bin()
        .env("EQUIVQUAD_OUT", tmp.path().join("envroot"))
        .args(["--quiet", "--seed", "9", "train", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let d = tmp.path().join("envroot/mod-mlp-seed9");
    assert!(d.join("final.ckpt").exists());
    let snapshot = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 9"), "{snapshot}");
}

#[test]
fn missing_architecture_exits_2_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "seed = 1\n");
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("architecture"), "{}", stderr(&o));
}

#[test]
fn config_errors_carry_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "architecture = \"mod-emlp\"\n\n[train]\ngamma = 0.9\nbogus = 1\n");
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:5:"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "bad2.toml", "architecture = \"mod-emlp\"\n[env]\nmax_steps = 10\ndt = 0.0\n");
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad2.toml:4:1: `env.dt`"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_3_and_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let text = quick("mono-mlp", 2000).replace("[env]\n", "[env]\ndt = 1.0\nworkspace_bound = 1e12\n");
    let cfg = write(tmp.path(), "div.toml", &text);
    let o = run(&["--quiet", "--out", tmp.path().to_str().unwrap(), "train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let d = tmp.path().join("mono-mlp-seed3");
    assert!(d.join("curve.csv").exists());
    assert!(d.join("diverged.ckpt").exists());
    assert!(d.join("config.toml").exists());
}

#[test]
fn hover_oracle_eval_and_rollout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "still.toml", STILL_ENV);
    let out = tmp.path().join("o");
    let o = run(&["--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "eval", "--hover-oracle", "--episodes", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("metrics.csv"));
    assert_eq!(column(&rows, "rmse_eb1"), 0.0);
    assert_eq!(column(&rows, "rmse_ex"), 0.0);
    assert_eq!(column(&rows, "episodes"), 3.0);

    let o = run(&[
        "--quiet",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "rollout",
        "--hover-oracle",
        "--duration",
        "1.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("trajectory.csv"));
    assert_eq!(rows.len() - 1, (1.5f64 / 0.005).round() as usize + 1);
    assert_eq!(rows[0][0], "t");
}

#[test]
fn rotated_eval_of_equivariant_checkpoint_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = train(tmp.path(), "mod-emlp", 0, "runs");
    let ckpt = run_dir.join("final.ckpt");
    let mut metrics = Vec::new();
    for (angle, out) in [("0", "r0"), ("73", "r73"), ("-150", "r150")] {
        let out = tmp.path().join(out);
        let o = run(&[
            "--quiet",
            "--out",
            out.to_str().unwrap(),
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--rotate",
            angle,
            "--yaw-rate",
            "20",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        metrics.push(read_csv(&out.join("metrics.csv")));
    }
    for name in ["score_mean", "rmse_ex", "rmse_ev", "rmse_eomega", "rmse_eb1", "mean_f", "max_m3"] {
        let base = column(&metrics[0], name);
        for m in &metrics[1..] {
            assert!((column(m, name) - base).abs() < 1e-6, "{name}");
        }
    }
}

#[test]
fn checkpoint_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = train(tmp.path(), "mod-mlp", 0, "runs");
    let ckpt = run_dir.join("final.ckpt");
    let cfg = write(tmp.path(), "emlp.toml", "architecture = \"mod-emlp\"\n");
    let o = run(&["--quiet", "--config", cfg.to_str().unwrap(), "eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let msg = stderr(&o);
    assert!(msg.contains("mod-mlp") && msg.contains("mod-emlp"), "{msg}");

    let bytes = std::fs::read(&ckpt).unwrap();
    let cut = tmp.path().join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    let o = run(&["--quiet", "eval", "--checkpoint", cut.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corrupt"), "{}", stderr(&o));
}

fn symmetry(extra: &[&str]) -> Output {
    let mut args = vec!["check-symmetry", "--cases", "4", "--steps", "200", "--network-samples", "5"];
    args.extend_from_slice(extra);
    run(&args)
}

fn failed_lines(o: &Output) -> Vec<String> {
    stderr(o).lines().filter(|l| l.ends_with("FAILED")).map(str::to_string).collect()
}

#[test]
fn symmetry_suite_passes_and_detects_injected_fault() {
    let o = symmetry(&[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("[dynamics]"));

    let o = symmetry(&["--inject-fault", "flip-rho-theta"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    let line = msg.lines().find(|l| l.contains("rotation/position")).unwrap();
    assert!(line.ends_with("FAILED"), "{line}");
    let err: f64 = line.split("max error").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(err > 0.1, "{err}");
}

#[test]
fn symmetry_suite_flags_baseline_networks_only() {
    let tmp = tempfile::tempdir().unwrap();
    let baseline = train(tmp.path(), "mod-mlp", 0, "b").join("final.ckpt");
    let o = symmetry(&["--checkpoint", baseline.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let failed = failed_lines(&o);
    assert!(!failed.is_empty());
    let msg = stderr(&o);
    let network_section = msg.split("[network]").nth(1).unwrap();
    assert!(failed.iter().all(|l| network_section.contains(l.as_str())), "{msg}");

    let equivariant = train(tmp.path(), "mod-emlp", 0, "e").join("final.ckpt");
    let o = symmetry(&["--checkpoint", equivariant.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn export_curves_summarises_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = train(tmp.path(), "mod-emlp", 200, "runs");
    let b = train(tmp.path(), "mod-mlp", 200, "runs");
    let out = tmp.path().join("export");
    let o = run(&["--quiet", "--out", out.to_str().unwrap(), "export-curves", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves = read_csv(&out.join("curves.csv"));
    assert_eq!(curves[0][..4], ["run", "architecture", "seed", "step"]);
    assert_eq!(curves.len(), 1 + 2 * 3);
    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!(summary.len(), 3);
    assert_eq!(summary[1][1], "mod-emlp");
    assert_eq!(summary[2][1], "mod-mlp");
}

#[test]
fn inputs_are_not_modified() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = train(tmp.path(), "mod-emlp", 0, "runs");
    let ckpt = run_dir.join("final.ckpt");
    let before = std::fs::read(&ckpt).unwrap();
    let o = run(&["--quiet", "--out", tmp.path().join("e").to_str().unwrap(), "eval", "--checkpoint", ckpt.to_str().unwrap(), "--episodes", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&ckpt).unwrap(), before);
}
