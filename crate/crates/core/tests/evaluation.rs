use std::path::PathBuf;

use sdwec::baselines::combine_predictions;
use sdwec::dataset;
use sdwec::evaluation::{
    prepare_repetition, run_experiment, sdwec_method, sparsity_accuracy_sweep, timing_scaling_study,
    ExperimentConfig, NamedParams, SingleTree, TimingConfig,
};
use sdwec::model::EnsembleModel;
use sdwec::report;
use sdwec::solver::SdwecParams;
use sdwec::tree::TreeConfig;

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(format!("{name}.csv"))
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(data_path("wine"));
    c.pool_size = 25;
    c.repetitions = 3;
    c.base_seed = 5;
    c
}

#[test]
fn one_repetition_smoke() {
    let mut c = small_config();
    c.repetitions = 1;
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.repetitions.len(), 1);
    let methods: Vec<&str> = r.mean_accuracy.keys().map(String::as_str).collect();
    assert_eq!(methods, ["bagging", "sdwec-A", "sdwec-B", "single", "wmv"]);
    for v in r.mean_accuracy.values().chain(r.mean_sparsity.values()) {
        assert!((0.0..=1.0).contains(v));
    }
}

#[test]
fn runs_are_deterministic_and_means_are_arithmetic() {
    let c = small_config();
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(report::results_csv(&a), report::results_csv(&b));
    for (k, v) in &a.mean_accuracy {
        let m: f64 = a.repetitions.iter().map(|r| r.accuracy[k]).sum::<f64>() / 3.0;
        assert_eq!(*v, m);
        assert_eq!(b.mean_accuracy[k], *v);
    }
    for (k, v) in &a.mean_sparsity {
        let rep: Vec<f64> = a.repetitions.iter().map(|r| r.sparsity[k]).collect();
        let rep_b: Vec<f64> = b.repetitions.iter().map(|r| r.sparsity[k]).collect();
        assert_eq!(rep, rep_b);
        assert_eq!(*v, rep.iter().sum::<f64>() / 3.0);
    }
}

#[test]
fn harness_accounting_matches_recomputation() {
    let c = small_config();
    let data = c.load_dataset().unwrap();
    let r = run_experiment(&c).unwrap();
    let plan = dataset::make_run_plan(data.n_rows(), c.repetitions, c.base_seed).unwrap();
    for (rep, split) in r.repetitions.iter().zip(&plan.splits) {
        let prep = prepare_repetition(&data, split, rep.repetition, &c).unwrap();
        for preset in &c.presets {
            let w = &rep.weights[&preset.name];
            let zeros = w.weights.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(rep.sparsity[&preset.name], zeros as f64 / w.len() as f64);
            let hits = (0..prep.h_test.rows())
                .filter(|&s| {
                    let label = if zeros == w.len() {
                        1
                    } else {
                        combine_predictions(prep.h_test.row(s), &w.weights).unwrap()
                    };
                    label == prep.y_test[s]
                })
                .count();
            assert_eq!(rep.accuracy[&sdwec_method(&preset.name)], hits as f64 / prep.y_test.len() as f64);
        }
    }
}

#[test]
fn single_point_sweep_matches_run() {
    let mut c = small_config();
    c.presets = vec![NamedParams::new("F", SdwecParams::new(1.0, 10.0, 20.0, 0.1))];
    let run = run_experiment(&c).unwrap();
    let rows = sparsity_accuracy_sweep(&c, &[c.presets[0].params]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].mean_sparsity, run.mean_sparsity["F"]);
    assert_eq!(rows[0].mean_accuracy, run.mean_accuracy["sdwec-F"]);
    assert!(sparsity_accuracy_sweep(&c, &[]).is_err());
}

#[test]
fn preset_sweep_orders_sparsity() {
    let c = small_config();
    let rows = sparsity_accuracy_sweep(&c, &[SdwecParams::preset_a(), SdwecParams::preset_b()]).unwrap();
    assert!(rows[0].mean_sparsity < rows[1].mean_sparsity);
}

#[test]
fn single_tree_variants() {
    let mut c = small_config();
    c.repetitions = 1;
    c.single_tree = SingleTree::FullTrain;
    let full = run_experiment(&c).unwrap();
    assert!(full.mean_accuracy["single"] > 0.5);
}

#[test]
fn missing_dataset_names_path() {
    let c = ExperimentConfig::new("/nonexistent/data.csv");
    let err = run_experiment(&c).unwrap_err().to_string();
    assert!(err.contains("/nonexistent/data"), "{err}");
}

#[test]
fn saved_model_reproduces_repetition() {
    let c = small_config();
    let data = c.load_dataset().unwrap();
    let r = run_experiment(&c).unwrap();
    let model = EnsembleModel::train(&data, &c, 1).unwrap();
    assert_eq!(model.split_seed, r.repetitions[1].seed);
    for m in &model.members {
        assert_eq!(&m.weights, &r.repetitions[1].weights[&m.name]);
    }
}

#[test]
fn written_reports() {
    let c = small_config();
    let r = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = report::write_run(dir.path(), &r).unwrap();
    assert_eq!(files.len(), 2 + 3 * 2);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 5 + 5);
    let diag = dir.path().join(report::diagnostics_file_name("wine", "B", r.repetitions[0].seed));
    assert_eq!(std::fs::read_to_string(diag).unwrap().lines().count(), 26);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["pool_size"], 25);
}

#[test]
fn timing_study_shape() {
    let data = dataset::load_with_sidecar(data_path("wine")).unwrap();
    let cfg = TimingConfig {
        l_values: vec![5, 10],
        m_values: vec![50, 100, 150],
        params: SdwecParams::preset_b(),
        tree: TreeConfig::default(),
        seed: 1,
        trials: 1,
    };
    let study = timing_scaling_study(&data, &cfg).unwrap();
    assert_eq!(study.rows.len(), 6);
    assert!(study.fit_vs_m(10).is_some());
    assert!(study.fit_vs_l(150).is_some());
    let mut too_big = cfg.clone();
    too_big.m_values = vec![10_000];
    assert!(timing_scaling_study(&data, &too_big).is_err());
    let single = TimingConfig {
        l_values: vec![5],
        m_values: vec![50],
        ..cfg
    };
    let s = timing_scaling_study(&data, &single).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert!(s.fits.is_empty());
}
