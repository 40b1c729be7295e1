use dlpa_core::dataset::{read_header, sidecar_path, write_sidecar, Dataset, TEST_SEED_OFFSET};
use dlpa_core::experiment::{evaluate_split, generate, Method};
use dlpa_core::net::{train, LossKind, Split, TrainConfig};
use dlpa_core::precoding::AbHpDesign;
use dlpa_core::{PsoConfig, Scenario};

fn small() -> (Scenario, AbHpDesign) {
    let sc = Scenario::microcell(8, 1, 3);
    let design = AbHpDesign::for_scenario(&sc).unwrap();
    (sc, design)
}

#[test]
fn hundred_sample_file_revalidates() {
    let (sc, design) = small();
    let ds = generate(&sc, &design, &PsoConfig::default(), 100, 7, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.ds");
    ds.save(&path).unwrap();
    write_sidecar(&path, &ds, &sc, &PsoConfig::default(), 0.0, 1).unwrap();
    assert!(sidecar_path(&path).exists());

    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, ds);
    back.validate().unwrap();
    assert!(back.samples.iter().all(|s| s.label.iter().copied().fold(0.0, f64::max) == 1.0));
    let header = read_header(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!((header.count, header.num_users, header.input_size), (100, 3, (4 * design.num_rf_chains() + 2) * 3));
}

#[test]
fn test_seeds_are_disjoint_from_training_seeds() {
    let (sc, design) = small();
    let pso = PsoConfig { max_iters: 20, ..PsoConfig::default() };
    let tr = generate(&sc, &design, &pso, 50, 1, 1).unwrap();
    let te = generate(&sc, &design, &pso, 50, 1 + TEST_SEED_OFFSET, 1).unwrap();
    let train_seeds: std::collections::HashSet<u64> = tr.samples.iter().map(|s| s.seed).collect();
    assert!(te.samples.iter().all(|s| !train_seeds.contains(&s.seed)));
}

#[test]
fn memorized_training_set_tracks_the_oracle() {
    let (sc, design) = small();
    let ds = generate(&sc, &design, &PsoConfig::default(), 16, 3, 1).unwrap();
    let (x, y) = (ds.features(), ds.labels());
    // labels span several decades and the budget share of a weak user
    // scales with its baseband gain, so the fit has to be very tight
    let cfg = TrainConfig {
        epochs: 12_000,
        batch_size: 16,
        loss: LossKind::Mae,
        hidden: vec![256, 128],
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(Split::new(x.view(), y.view()).unwrap(), None, &cfg).unwrap();
    let res = evaluate_split("train", &sc, &design, &ds, Some(&out.model), 1).unwrap();
    let rel = res.relative_pct(Method::DlPa).unwrap();
    assert!(rel >= 99.5, "DL-PA at {rel:.3}% of PSO-PA, final loss {:?}", out.history.train_loss.last());
}
