//! End-to-end use of the public API: generate data, train, checkpoint,
//! reload and predict.

use proptest::prelude::*;
use scalewave::datasets::{generate_task, read_manifest, write_manifest, GaborAtom, SignalModel, SyntheticTask};
use scalewave::group::GroupElement;
use scalewave::models::{preset, Model};
use scalewave::trainer::{evaluate, train, Checkpoint, Dataset, TrainConfig};

fn small_task() -> SyntheticTask {
    SyntheticTask {
        per_class: [8, 4, 4],
        ..SyntheticTask::desk()
    }
}

#[test]
fn train_save_reload_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_task(&small_task(), 3).unwrap();
    let manifest = dir.path().join("m.jsonl");
    write_manifest(&manifest, &data).unwrap();
    assert_eq!(read_manifest(&manifest).unwrap(), data);

    let arch = preset("desk-wnet").unwrap();
    let (tr, va, te) = (
        Dataset::from_examples(&data.train).unwrap(),
        Dataset::from_examples(&data.val).unwrap(),
        Dataset::from_examples(&data.test).unwrap(),
    );
    let mut model = Model::build(&arch, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let out = train(&mut model, &tr, &va, &cfg, Some(dir.path())).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(dir.path().join("best.swck").exists());
    assert!(dir.path().join("metrics.csv").exists());

    let path = dir.path().join("last.swck");
    out.last.save(&path).unwrap();
    let mut reloaded = Checkpoint::load(&path).unwrap().to_model().unwrap();
    let (x, _) = te.batch(&[0, 1, 2]).unwrap();
    assert_eq!(model.predict(&x).unwrap(), reloaded.predict(&x).unwrap());
    let (a, b) = (evaluate(&mut model, &te, 4).unwrap(), evaluate(&mut reloaded, &te, 4).unwrap());
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert!(a.accuracy.is_some() && a.tagging.is_none());
}

#[test]
fn task_generation_is_seeded() {
    let t = small_task();
    assert_eq!(generate_task(&t, 9).unwrap(), generate_task(&t, 9).unwrap());
    assert_ne!(generate_task(&t, 9).unwrap().train, generate_task(&t, 10).unwrap().train);
}

proptest! {
    // L_g L_h f = L_{gh} f on analytic signals
    #[test]
    fn signal_action_is_a_representation(
        u1 in -20.0..20.0f64, k1 in -2i32..3, u2 in -20.0..20.0f64, k2 in -2i32..3, x in -50.0..50.0f64,
    ) {
        let f = SignalModel::new(vec![GaborAtom { amplitude: 1.0, center: 3.0, width: 5.0, frequency: 0.05, phase: 0.4 }]);
        let g = GroupElement::new(u1, 2f64.powi(k1)).unwrap();
        let h = GroupElement::new(u2, 2f64.powi(k2)).unwrap();
        let lhs = f.transformed(h).transformed(g).eval(x);
        let rhs = f.transformed(g.product(h)).eval(x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }
}
