use ezlearn::domain::{InterceptionModel, LearningCase};
use ezlearn::experiment::{run_mc, run_single, single_truth, write_run, ScenarioConfig};
use ezlearn::selection::SelectionGrid;
use std::fs;
use std::path::PathBuf;

fn small(case: LearningCase, model: InterceptionModel) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default_for(case, model);
    cfg.seed = 77;
    cfg.optimizer.n_p = 16;
    cfg.max_agents = 3;
    cfg.grid = SelectionGrid { n_alpha: 16, n_psi: 8, ..SelectionGrid::default() };
    cfg.metrics_resolution = 64;
    cfg.planner.enabled = false;
    cfg
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ezlearn-it-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn infinite_threshold_stops_after_one_agent() {
    let mut cfg = small(LearningCase::Case1A, InterceptionModel::Boundary);
    cfg.optimizer.sigma_thresh = [1e300; 6];
    let out = run_single(&cfg, &single_truth(&cfg), cfg.seed).unwrap();
    assert_eq!(out.history.steps.len(), 1);
    assert!(out.history.converged);
    let dir = scratch("one-step");
    write_run(&out, &dir).unwrap();
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("history.json")).unwrap()).unwrap();
    assert_eq!(written["history"]["steps"].as_array().unwrap().len(), 1);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn same_seed_writes_identical_bytes() {
    let mut cfg = small(LearningCase::Case1A, InterceptionModel::Boundary);
    cfg.planner.enabled = true;
    cfg.planner.max_step = Some(1);
    let dirs = [scratch("det-a"), scratch("det-b")];
    for dir in &dirs {
        write_run(&run_single(&cfg, &single_truth(&cfg), cfg.seed).unwrap(), dir).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3, "{names:?}");
    for name in &names {
        assert_eq!(fs::read(dirs[0].join(name)).unwrap(), fs::read(dirs[1].join(name)).unwrap(), "{name:?} differs");
    }
    let header = fs::read_to_string(dirs[0].join("metrics.csv")).unwrap();
    assert!(header.starts_with(&format!("# schema_version=1 config_hash={} master_seed=77", cfg.hash())));
    dirs.iter().for_each(|d| fs::remove_dir_all(d).unwrap());
}

#[test]
fn single_run_has_zero_spread() {
    let mut cfg = small(LearningCase::Case2A, InterceptionModel::Boundary);
    cfg.n_runs = 1;
    let mc = run_mc(&cfg).unwrap();
    assert!(!mc.aggregate.is_empty());
    for row in &mc.aggregate {
        assert_eq!(row.n, 1);
        assert_eq!((row.q25, row.q75), (row.median, row.median), "{row:?}");
    }
    let step = &mc.runs[0].metrics[1];
    assert_eq!(mc.row(1, "union_ratio").unwrap().median, step.union_ratio);
}

#[test]
fn cases_share_the_truth_sequence() {
    let mut a = small(LearningCase::Case1A, InterceptionModel::Boundary);
    let mut b = small(LearningCase::Case2B, InterceptionModel::Interior);
    a.n_runs = 2;
    b.n_runs = 2;
    let (ma, mb) = (run_mc(&a).unwrap(), run_mc(&b).unwrap());
    assert_eq!(ma.truths, mb.truths);
    assert_eq!(ma.metadata.master_seed, mb.metadata.master_seed);
    assert_ne!(ma.metadata.config_hash, mb.metadata.config_hash);
}
