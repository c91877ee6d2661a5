use amc_fl::data::{generate_dataset, Dataset, GenerateSpec, ScenarioKind, ScenarioSpec};
use amc_fl::fl::{
    aggregate_fedavg, aggregate_fedvaccine, local_train, run_federation, AlgorithmKind, FlConfig,
};
use amc_fl::nn::{init_model, ArchWidths, Architecture, OptimizerConfig, TrainConfig};
use amc_fl::rng::stream;
use amc_fl::signal::{FrameConfig, ModulationScheme};

const LEN: usize = 32;

fn fixture() -> (Architecture, Dataset<f32>, Dataset<f32>) {
    let mut spec = GenerateSpec::new(
        vec![ModulationScheme::Bpsk, ModulationScheme::Qam16, ModulationScheme::Gfsk],
        vec![-4, 6, 16],
        6,
    );
    spec.frame = FrameConfig {
        frame_len: LEN,
        ..FrameConfig::default()
    };
    let pool = generate_dataset(3, &spec).unwrap();
    spec.first_index = 6;
    spec.frames_per_cell = 4;
    let test = generate_dataset(3, &spec).unwrap();
    let arch = Architecture::amc(
        LEN,
        3,
        &ArchWidths {
            conv1: 4,
            conv2: 4,
            dense: 8,
            dropout: 0.5,
        },
    );
    (arch, pool, test)
}

fn config(kind: ScenarioKind) -> FlConfig {
    FlConfig {
        seed: 11,
        clients: 4,
        rounds: 3,
        train: TrainConfig {
            epochs: 2,
            batch_size: 8,
            optimizer: OptimizerConfig::adam(1e-3),
            prox_mu: 0.0,
        },
        prox_mu: 0.01,
        clusters: 2,
        theta: -4,
        queue_capacity: 30,
        scenario: ScenarioSpec::new(kind, 20),
        parallel: false,
    }
}

#[test]
fn reruns_are_identical() {
    let (arch, pool, test) = fixture();
    for kind in AlgorithmKind::ALL {
        let a = run_federation(kind, &config(ScenarioKind::Iid), &arch, &pool, &test.frames).unwrap();
        let b = run_federation(kind, &config(ScenarioKind::Iid), &arch, &pool, &test.frames).unwrap();
        assert_eq!(a.1, b.1, "{kind}");
        let strip = |v: Vec<amc_fl::fl::RoundMetrics>| {
            v.into_iter()
                .map(|mut m| {
                    m.wall_seconds = 0.0;
                    m
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(a.0.clone()), strip(b.0), "{kind}");
        assert_eq!(a.0.len(), 3, "{kind}");
    }
}

#[test]
fn all_algorithms_see_identical_draws() {
    let (arch, pool, test) = fixture();
    let cfg = config(ScenarioKind::ClassImbalance);
    let hashes: Vec<Vec<String>> = AlgorithmKind::ALL
        .iter()
        .map(|&k| {
            run_federation(k, &cfg, &arch, &pool, &test.frames)
                .unwrap()
                .0
                .into_iter()
                .map(|m| m.data_hash)
                .collect()
        })
        .collect();
    assert!(hashes.iter().all(|h| *h == hashes[0]));
}

#[test]
fn parallel_matches_serial() {
    let (arch, pool, test) = fixture();
    for kind in [AlgorithmKind::FedVaccine, AlgorithmKind::FedAvg, AlgorithmKind::FedSgd, AlgorithmKind::DistL] {
        let mut cfg = config(ScenarioKind::Iid);
        let serial = run_federation(kind, &cfg, &arch, &pool, &test.frames).unwrap();
        cfg.parallel = true;
        let par = run_federation(kind, &cfg, &arch, &pool, &test.frames).unwrap();
        assert_eq!(serial.1, par.1, "{kind}");
    }
}

#[test]
fn fedprox_with_zero_mu_is_fedavg() {
    let (arch, pool, test) = fixture();
    let mut cfg = config(ScenarioKind::Iid);
    cfg.prox_mu = 0.0;
    let a = run_federation(AlgorithmKind::FedAvg, &cfg, &arch, &pool, &test.frames).unwrap();
    let b = run_federation(AlgorithmKind::FedProx, &cfg, &arch, &pool, &test.frames).unwrap();
    assert_eq!(a.1, b.1);
}

#[test]
fn distl_reports_every_client() {
    let (arch, pool, test) = fixture();
    let (m, _) = run_federation(AlgorithmKind::DistL, &config(ScenarioKind::Iid), &arch, &pool, &test.frames).unwrap();
    for r in &m {
        let acc = r.client_accuracy.as_ref().unwrap();
        assert_eq!(acc.len(), 4);
        let mean = acc.iter().sum::<f64>() / 4.0;
        assert!((mean - r.accuracy).abs() < 1e-12);
    }
}

#[test]
fn cl_sees_every_round_sample() {
    let (arch, pool, test) = fixture();
    let mut cfg = config(ScenarioKind::VolumeImbalance);
    cfg.theta = -20;
    let (m, _) = run_federation(AlgorithmKind::Cl, &cfg, &arch, &pool, &test.frames).unwrap();
    for r in &m {
        assert_eq!(r.samples_seen, r.deltas.iter().sum::<usize>());
        assert!(r.deltas.iter().all(|&d| d <= 20));
    }
}

#[test]
fn gl_curve_has_one_row_per_epoch() {
    let (arch, pool, test) = fixture();
    let (m, _) = run_federation(AlgorithmKind::Gl, &config(ScenarioKind::Iid), &arch, &pool, &test.frames).unwrap();
    assert_eq!(m.len(), 3);
    assert!(m.iter().all(|r| r.samples_seen == m[0].samples_seen));
}

#[test]
fn chain_with_one_client_is_local_training() {
    let (arch, pool, test) = fixture();
    let mut cfg = config(ScenarioKind::Iid);
    cfg.clients = 1;
    cfg.rounds = 1;
    cfg.clusters = 1;
    cfg.queue_capacity = 0;
    let (_, w) = run_federation(AlgorithmKind::FedVaccineChain, &cfg, &arch, &pool, &test.frames).unwrap();
    let (_, avg) = run_federation(AlgorithmKind::FedAvg, &cfg, &arch, &pool, &test.frames).unwrap();
    assert_eq!(w, avg);
}

#[test]
fn feature_variance_rounds_are_single_snr() {
    let (arch, pool, test) = fixture();
    let mut cfg = config(ScenarioKind::FeatureVariance);
    cfg.scenario.fv_min = 5;
    cfg.scenario.fv_max = 9;
    cfg.theta = -20;
    let (m, _) = run_federation(AlgorithmKind::FedAvg, &cfg, &arch, &pool, &test.frames).unwrap();
    assert!(m.iter().flat_map(|r| &r.deltas).all(|&d| (5..=9).contains(&d)));
}

#[test]
fn blend_differs_from_mean() {
    let (arch, pool, _) = fixture();
    let w0 = init_model::<f32>(&arch, 1).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (a, da) = local_train(&arch, &w0, &pool.frames[..20], &tc, &mut stream(1, &[])).unwrap().unwrap();
    let (b, db) = local_train(&arch, &w0, &pool.frames[20..40], &tc, &mut stream(2, &[])).unwrap().unwrap();
    let fv = aggregate_fedvaccine(&w0, &[(&a, da), (&b, db)]).unwrap();
    let avg = aggregate_fedavg(&[&a, &b], &[da as f64, db as f64]).unwrap();
    assert_ne!(fv, avg);
    // The blend moves 1/n of the way from W_prev toward the weighted mean.
    let mut expect = w0.clone();
    let mut diff = avg.clone();
    diff.axpy(-1.0, &w0);
    expect.axpy(0.5, &diff);
    assert!(fv.dist_sq(&expect) < 1e-10);
}

#[test]
fn zero_epochs_return_init() {
    let (arch, pool, _) = fixture();
    let w0 = init_model::<f32>(&arch, 1).unwrap();
    let tc = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (p, d) = local_train(&arch, &w0, &pool.frames, &tc, &mut stream(1, &[])).unwrap().unwrap();
    assert_eq!(p, w0);
    assert_eq!(d, pool.len());
    assert!(local_train(&arch, &w0, &[], &tc, &mut stream(1, &[])).unwrap().is_none());
}
