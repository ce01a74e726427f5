//! Target labels must only ever influence the oracle and the final score.

use std::path::Path;

use shift_hpo::datasets::{generate_toy, split_source, ToyConfig};
use shift_hpo::density_ratio::{fit_ulsif, UlsifConfig};
use shift_hpo::harness::{build_objective, run_mscs, EstimatorKind, RunConfig};
use shift_hpo::learners::{LearnerSpec, LossKind};
use shift_hpo::Error;

fn write_task(path: &Path, n: usize, shift: f64, poison: bool) {
    let mut text = String::from("a,b,y\n");
    for i in 0..n {
        let a = shift + ((i * 31 % n) as f64 / n as f64 - 0.5) * 3.0;
        let b = ((i * 17 % n) as f64 / n as f64 - 0.5) * 2.0;
        let y = if poison { 1e6 - i as f64 } else { a - 0.5 * b + 1.0 };
        text += &format!("{a},{b},{y}\n");
    }
    std::fs::write(path, text).unwrap();
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

fn config(dir: &Path, target: &str, estimator: &str) -> RunConfig {
    let text = format!(
        r#"{{"estimator": "{estimator}", "learner": "weighted_ridge", "loss": "squared",
            "space": [{{"name": "reg", "low": 0.001, "high": 10, "scale": "log"}}],
            "budget": 7, "n_init": 3, "seeds": [0, 5],
            "data": {{"csv": {{"target_path": {:?}, "source_paths": [{:?}, {:?}], "label_column": "y"}}}}}}"#,
        dir.join(target),
        dir.join("s1.csv"),
        dir.join("s2.csv")
    );
    RunConfig::from_json(&text).unwrap()
}

#[test]
fn poisoned_target_labels_do_not_change_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_task(&d.join("clean.csv"), 120, 0.0, false);
    write_task(&d.join("poisoned.csv"), 120, 0.0, true);
    write_task(&d.join("s1.csv"), 150, 0.8, false);
    write_task(&d.join("s2.csv"), 150, -0.6, false);
    for est in ["naive", "unbiased", "variance_reduced"] {
        let clean = run_mscs(&config(d, "clean.csv", est)).unwrap();
        let poisoned = run_mscs(&config(d, "poisoned.csv", est)).unwrap();
        for (a, b) in clean.seeds.iter().zip(&poisoned.seeds) {
            assert_eq!(json(&a.history), json(&b.history), "{est}");
            assert_eq!(a.incumbent, b.incumbent);
            assert!(b.final_score > 1e9, "held-out labels score the final model");
        }
    }
    let clean = run_mscs(&config(d, "clean.csv", "oracle")).unwrap();
    let poisoned = run_mscs(&config(d, "poisoned.csv", "oracle")).unwrap();
    assert_ne!(json(&clean.seeds[0].history), json(&poisoned.seeds[0].history));
}

#[test]
fn label_access_is_tied_to_the_oracle() {
    let data = generate_toy(&ToyConfig::new(1, 200, 1.0, 1.0, 3)).unwrap();
    let split = split_source(&data.sources[0], 0.3, 0.7, 1).unwrap();
    let ratio = fit_ulsif(&data.target, split.density.features(), &UlsifConfig::default()).unwrap();
    let labeled = data.oracle_target().unwrap();
    let build = |kind, labels| {
        build_objective(
            kind,
            std::slice::from_ref(&split),
            std::slice::from_ref(&ratio),
            &data.target,
            labels,
            LearnerSpec::ConstantPredictor,
            LossKind::SquaredHalf,
        )
    };
    assert!(matches!(build(EstimatorKind::Oracle, None), Err(Error::Config { .. })));
    assert!(build(EstimatorKind::Oracle, Some(&labeled)).is_ok());
    for kind in [EstimatorKind::Naive, EstimatorKind::Unbiased, EstimatorKind::VarianceReduced] {
        assert!(matches!(build(kind, Some(&labeled)), Err(Error::Config { .. })));
        assert!(build(kind, None).is_ok());
    }
}
