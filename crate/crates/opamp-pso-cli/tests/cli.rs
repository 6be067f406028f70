//! End-to-end checks through the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opamp-pso"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn opamp_run_writes_one_csv_per_seed_with_full_histories() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"opamp-analytic\"\noutput_dir = \"out\"\nseeds = [0,1,2,3,4,5,6,7,8,9]\n",
    );
    let out = run_in(dir.path(), &["run", "--config", "cfg.toml"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    for seed in 0..10 {
        let text =
            std::fs::read_to_string(dir.path().join(format!("out/seed-{seed}.csv"))).unwrap();
        assert!(!text.contains('\r'), "LF endings only");
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,gbest_fitness,w,regenerations,retries"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 100, "exactly one data row per iteration");
        let fitness: Vec<f64> = rows
            .iter()
            .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        for pair in fitness.windows(2) {
            assert!(pair[1] <= pair[0], "gbest_fitness must be non-increasing");
        }
    }
    let summary = std::fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("pass = true"));
    assert!(summary.contains("w12 = "));
}

#[test]
fn reruns_reproduce_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"bench\"\nseeds = [7, 8]\n\n[pso]\nswarm_size = 8\nmax_iterations = 25\n",
    );
    for out_dir in ["a", "b"] {
        let out = run_in(
            dir.path(),
            &["run", "--config", "cfg.toml", "--out", out_dir],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["seed-7.csv", "seed-8.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across reruns");
    }
}

#[test]
fn zero_iterations_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"bench\"\n\n[pso]\nmax_iterations = 0\n",
    );
    let out = run_in(dir.path(), &["run", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("max_iterations"), "stderr: {stderr}");
}

#[test]
fn unknown_problem_lists_alternatives() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"simulated-annealing\"\n",
    );
    let out = run_in(dir.path(), &["run", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in ["opamp-analytic", "opamp-spice", "bench"] {
        assert!(stderr.contains(name), "stderr: {stderr}");
    }
}

#[test]
fn generation_exhaustion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"bench\"\nseeds = [0]\n\n[pso]\nmax_generation_attempts = 1\n\n\
         [bench]\nfeasible_fraction = 1e-9\n",
    );
    let out = run_in(dir.path(), &["run", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("generation"), "stderr: {stderr}");
}

#[test]
fn export_netlist_with_explicit_published_sizing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("models.lib"), "* empty models\n").unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"opamp-spice\"\n\n[spice]\nmodel_include_path = \"models.lib\"\n",
    );
    let out = run_in(
        dir.path(),
        &[
            "export-netlist",
            "--config",
            "cfg.toml",
            "--w12",
            "266e-9",
            "--w34",
            "783e-9",
            "--w58",
            "126e-9",
            "--w6",
            "1115e-9",
            "--w7",
            "191e-9",
            "--ibias",
            "29.7e-6",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let netlist = std::fs::read_to_string(dir.path().join("out/netlist.sp")).unwrap();
    assert!(netlist.contains("W=1115n"));
    assert!(netlist.contains("W=266n"));
    assert!(!netlist.contains('{'), "all placeholders resolved");
}

#[test]
fn missing_model_include_for_spice_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cfg.toml", "problem = \"opamp-spice\"\n");
    let out = run_in(
        dir.path(),
        &[
            "export-netlist",
            "--config",
            "cfg.toml",
            "--from-summary",
            "nonexistent.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("model_include_path"), "stderr: {stderr}");
}

#[test]
fn bench_subcommand_prints_both_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.toml",
        "problem = \"bench\"\nseeds = [0, 1, 2]\n\n[pso]\nswarm_size = 8\nmax_iterations = 20\n\
         velocity_clamp = 0.5\n",
    );
    let out = run_in(dir.path(), &["bench", "--config", "cfg.toml"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hybrid"));
    assert!(stdout.contains("standard"));
}
