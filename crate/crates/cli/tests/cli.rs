//! Black-box tests of the `rainbow` binary: exit codes, output files and
//! the documented command semantics.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rainbow_cli::config::ExperimentConfig;
use rainbow_cli::results::RunRow;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn results(&self) -> PathBuf {
        self.root.join("results")
    }

    fn write_config(&self, name: &str, cfg: &ExperimentConfig) -> PathBuf {
        let path = self.path(name);
        cfg.save(&path).unwrap();
        path
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rainbow"))
            .env("RAINBOW_RESULTS_DIR", self.results())
            .args(args)
            .output()
            .expect("binary runs")
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world.vocab = 8;
    cfg.world.contexts = 4;
    cfg.world.t_max = 10;
    cfg.data.prompts = 120;
    cfg.eval.n_eval = 400;
    cfg
}

fn read_rows(path: &Path) -> Vec<RunRow> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect()
}

#[test]
fn invalid_config_exits_with_two() {
    let ws = Workspace::new();
    let mut cfg = small_config();
    cfg.data.prompts = 0;
    let path = ws.path("bad.toml");
    // Bypass save-side validation to exercise the binary's own check.
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = ws.run(&["gen-data", "--config", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("prompts"));
}

#[test]
fn missing_config_exits_with_two() {
    let ws = Workspace::new();
    let out = ws.run(&["gen-data", "--config", "nowhere.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_writes_dataset_and_sidecar() {
    let ws = Workspace::new();
    let config = ws.write_config("config.toml", &small_config());
    let dataset = ws.path("pairs.jsonl");
    let out = ws.run(&[
        "gen-data",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dataset.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let loaded = rainbow_core::PreferenceDataset::load_from_path(&dataset).unwrap();
    assert_eq!(loaded.len(), 120);
    assert_eq!(loaded.provenance, rainbow_core::Provenance::BestWorstOfK);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("pairs.jsonl.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["provenance"], "BestWorstOfK");
    assert_eq!(meta["prompts"], 120);
    assert!(meta["reward_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn rejection_sampled_datasets_carry_the_provenance() {
    let ws = Workspace::new();
    let mut cfg = small_config();
    cfg.data.method = rainbow_core::SampleMethod::RsPlus;
    cfg.sampler.pool_size = 8;
    cfg.sampler.accept_size = 4;
    let config = ws.write_config("config.toml", &cfg);
    let dataset = ws.path("rs.jsonl");
    let out = ws.run(&[
        "gen-data",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dataset.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("rs.jsonl.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["provenance"], "RejectionSampled");
}

#[test]
fn seed_flag_overrides_the_config() {
    let ws = Workspace::new();
    let config = ws.write_config("config.toml", &small_config());
    let a = ws.path("a.jsonl");
    let b = ws.path("b.jsonl");
    let c = ws.path("c.jsonl");
    for (path, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = ws.run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn train_emits_one_eval_row_per_epoch() {
    let ws = Workspace::new();
    let config = ws.write_config("config.toml", &small_config());
    let dataset = ws.path("pairs.jsonl");
    assert!(ws
        .run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ])
        .status
        .success());
    let out = ws.run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_rows(&ws.results().join("train_results.jsonl"));
    assert_eq!(rows.len(), 3, "three epochs, three rows");
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.epoch, Some(i + 1));
        assert!(row.train_loss.is_some());
        assert!(row.win_rate.is_some());
        assert_eq!(row.config_hash.len(), 64);
    }
    // Rows with equal hashes must be bit-equal, so per-epoch rows carry
    // distinct hashes.
    assert_ne!(rows[0].config_hash, rows[1].config_hash);
    assert_ne!(rows[1].config_hash, rows[2].config_hash);
    assert!(ws.results().join("policy.bin").exists());
    assert!(ws.results().join("loss_trace.tsv").exists());
    for epoch in 1..=3 {
        assert!(ws
            .results()
            .join(format!("checkpoint_epoch_{epoch}.bin"))
            .exists());
    }
}

#[test]
fn dimension_mismatch_exits_with_two() {
    let ws = Workspace::new();
    let config = ws.write_config("config.toml", &small_config());
    let dataset = ws.path("pairs.jsonl");
    assert!(ws
        .run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ])
        .status
        .success());

    let mut other = small_config();
    other.world.vocab = 9;
    let other_config = ws.write_config("other.toml", &other);
    let out = ws.run(&[
        "train",
        "--config",
        other_config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn zero_lr_training_keeps_the_initial_accuracy() {
    let ws = Workspace::new();
    let mut cfg = small_config();
    cfg.train.lr = 0.0;
    let config = ws.write_config("config.toml", &cfg);
    let dataset = ws.path("pairs.jsonl");
    assert!(ws
        .run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ])
        .status
        .success());
    let out = ws.run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // A null update leaves the policy at the reference: zero implicit
    // rewards tie every held-out pair, exactly like the initial policy.
    let rows = read_rows(&ws.results().join("train_results.jsonl"));
    for row in &rows {
        assert_eq!(row.pairwise_accuracy, Some(0.0));
    }
    let trained =
        rainbow_core::PolicyModel::load_from_path(ws.results().join("policy.bin")).unwrap();
    let mut saved = Vec::new();
    trained.save(&mut saved).unwrap();
    let reference = {
        let world = rainbow_cli::runs::build_world(&cfg).unwrap();
        let mut buf = Vec::new();
        world.reference.save(&mut buf).unwrap();
        buf
    };
    assert_eq!(saved, reference, "lr = 0 must be a bit-exact null update");
}

#[test]
fn mixing_weight_changes_the_loss_trace() {
    let ws = Workspace::new();
    let dataset = ws.path("pairs.jsonl");
    let base = small_config();
    let config = ws.write_config("config.toml", &base);
    assert!(ws
        .run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ])
        .status
        .success());

    let mut traces = Vec::new();
    for alpha in [0.0, 1.0] {
        let mut cfg = base.clone();
        cfg.loss.alpha = alpha;
        let config = ws.write_config(&format!("alpha_{alpha}.toml"), &cfg);
        let out = ws.run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            ws.path(&format!("policy_{alpha}.bin")).to_str().unwrap(),
        ]);
        assert!(out.status.success());
        traces.push(std::fs::read(ws.results().join("loss_trace.tsv")).unwrap());
    }
    assert_ne!(
        traces[0], traces[1],
        "alpha = 0 and alpha = 1 trained identically"
    );
    assert_ne!(
        std::fs::read(ws.path("policy_0.bin")).unwrap(),
        std::fs::read(ws.path("policy_1.bin")).unwrap()
    );
}

#[test]
fn eval_reports_the_reference_matchup() {
    let ws = Workspace::new();
    let config = ws.write_config("config.toml", &small_config());
    let dataset = ws.path("pairs.jsonl");
    assert!(ws
        .run(&[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dataset.to_str().unwrap(),
        ])
        .status
        .success());
    let out = ws.run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = read_rows(&ws.results().join("eval_results.jsonl"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, "reference");
    // Self-play sits near a half win rate.
    let win = rows[0].win_rate.unwrap();
    assert!((win - 0.5).abs() < 0.1, "win rate {win}");
}

#[test]
fn shipped_default_config_matches_the_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let shipped = ExperimentConfig::load(&path).unwrap();
    assert_eq!(shipped, ExperimentConfig::default());
}

#[test]
fn shipped_ablation_grid_parses() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let spec = rainbow_cli::ablate::GridSpec::load(&root.join("ablation_grid.toml")).unwrap();
    assert_eq!(spec.stage.len(), 3);
    assert_eq!(spec.stage.iter().map(|s| s.points.len()).sum::<usize>(), 6);
    let base = spec.base_config(&root.join("ablation_grid.toml")).unwrap();
    assert_eq!(base.world.vocab, 8);
}

#[test]
fn ablate_rejects_empty_grids() {
    let ws = Workspace::new();
    let grid = ws.path("grid.toml");
    std::fs::write(&grid, "stage = []\n").unwrap();
    let out = ws.run(&["ablate", "--config", grid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no stages"));
}

#[test]
fn ablate_runs_match_the_jobs_flag() {
    let ws = Workspace::new();
    let base = ws.path("base.toml");
    small_config().save(&base).unwrap();
    let grid = ws.path("grid.toml");
    std::fs::write(
        &grid,
        r#"
config = "base.toml"

[[stage]]
name = "LN"
points = [
    { "loss.length_norm" = true },
    { "loss.length_norm" = false },
]
"#,
    )
    .unwrap();
    let serial = ws.run(&["ablate", "--config", grid.to_str().unwrap(), "--jobs", "1"]);
    assert!(
        serial.status.success(),
        "{}",
        String::from_utf8_lossy(&serial.stderr)
    );
    let serial_runs = std::fs::read(ws.results().join("ablate_runs.tsv")).unwrap();

    let parallel = ws.run(&["ablate", "--config", grid.to_str().unwrap(), "--jobs", "4"]);
    assert!(parallel.status.success());
    let parallel_runs = std::fs::read(ws.results().join("ablate_runs.tsv")).unwrap();
    assert_eq!(
        serial_runs, parallel_runs,
        "parallelism changed the results"
    );
}
