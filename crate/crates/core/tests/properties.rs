use amc_fl::data::{
    filter_by_snr, js_divergence, read_dataset, write_dataset, Dataset, DatasetMeta, LabelDistribution, ReplayQueue,
};
use amc_fl::fl::{aggregate_fedavg, aggregate_fedvaccine, partition_clusters};
use amc_fl::nn::{LayerParams, ModelParams, Tensor};
use amc_fl::rng::stream;
use amc_fl::signal::{ModulationScheme, SignalFrame};
use proptest::prelude::*;

fn distribution(n: usize) -> impl Strategy<Value = LabelDistribution> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], n).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| LabelDistribution::from_probs(v.iter().map(|x| x / s).collect()).unwrap())
    })
}

fn pair() -> impl Strategy<Value = (LabelDistribution, LabelDistribution)> {
    (2usize..12).prop_flat_map(|n| (distribution(n), distribution(n)))
}

fn frames(len: usize, classes: u8) -> impl Strategy<Value = Vec<SignalFrame<f32>>> {
    prop::collection::vec(
        (
            0..classes,
            (-10i32..10).prop_map(|s| 2 * s),
            prop::collection::vec(-4.0f32..4.0, 2 * len),
        )
            .prop_map(|(l, s, iq)| SignalFrame::new(iq, l, s)),
        0..24,
    )
}

fn dataset(len: usize, classes: u8, frames: Vec<SignalFrame<f32>>) -> Dataset<f32> {
    let mut snrs: Vec<i32> = frames.iter().map(|f| f.snr_db).collect();
    snrs.sort_unstable();
    snrs.dedup();
    Dataset::new(
        frames,
        DatasetMeta {
            seed: 0,
            schemes: ModulationScheme::ALL[..classes as usize].to_vec(),
            snrs,
            frame_len: len,
        },
    )
}

fn model(values: &[f64]) -> ModelParams<f64> {
    ModelParams {
        layers: vec![
            LayerParams {
                weight: Tensor::from_vec(&[2, 2], values[0..4].to_vec()).unwrap(),
                bias: Tensor::from_vec(&[2], values[4..6].to_vec()).unwrap(),
            },
            LayerParams {
                weight: Tensor::from_vec(&[3], values[6..9].to_vec()).unwrap(),
                bias: Tensor::from_vec(&[1], values[9..10].to_vec()).unwrap(),
            },
        ],
    }
}

fn flat(m: &ModelParams<f64>) -> Vec<f64> {
    m.tensors().flat_map(|t| t.data().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn js_is_symmetric_bounded_and_zero_only_on_equality((p, q) in pair()) {
        let pq = js_divergence(&p, &q).unwrap();
        let qp = js_divergence(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&pq));
        prop_assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        if p.probs != q.probs {
            prop_assert!(pq > 0.0);
        }
    }

    #[test]
    fn queue_respects_capacity_and_never_raises_divergence(
        cap in 0usize..30,
        batches in prop::collection::vec(prop::collection::vec(0u8..4, 0..20), 1..6),
    ) {
        let mut q = ReplayQueue::<f32>::new(cap, 4);
        for (round, labels) in batches.iter().enumerate() {
            let fs: Vec<_> = labels.iter().map(|&l| SignalFrame::new(vec![0.0, 0.0], l, 0)).collect();
            q.insert(&fs, round as u64);
            let before = q.js_to_uniform();
            let removed = q.evict();
            prop_assert!(q.len() <= cap);
            if let (false, Some(a), Some(b)) = (removed.is_empty(), before, q.js_to_uniform()) {
                prop_assert!(b <= a + 1e-15, "JS rose from {a} to {b}");
            }
        }
    }

    #[test]
    fn codec_round_trips(len in 1usize..8, classes in 1u8..9, seed_frames in frames(7, 8)) {
        let fs: Vec<_> = seed_frames
            .into_iter()
            .map(|f| SignalFrame::new(f.iq[..2 * len].to_vec(), f.label % classes, f.snr_db))
            .collect();
        let ds = dataset(len, classes, fs);
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();
        let back: Dataset<f32> = read_dataset(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back.frames, &ds.frames);
        prop_assert_eq!(back.meta.frame_len, len);
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn snr_filter_is_idempotent_and_monotone(fs in frames(2, 3), a in -10i32..10, b in -10i32..10) {
        let ds = dataset(2, 3, fs);
        let (lo, hi) = (2 * a.min(b), 2 * a.max(b));
        let once = filter_by_snr(&ds, lo);
        prop_assert_eq!(&filter_by_snr(&once, lo).frames, &once.frames);
        prop_assert!(once.frames.iter().all(|f| f.snr_db >= lo));
        prop_assert_eq!(filter_by_snr(&once, hi).frames, filter_by_snr(&ds, hi).frames);
        prop_assert!(filter_by_snr(&ds, hi).len() <= once.len());
    }

    #[test]
    fn cluster_plans_partition_near_equally(n in 1usize..=64, c_frac in 0.0f64..1.0, seed: u64) {
        let c = 1 + ((n - 1) as f64 * c_frac) as usize;
        let ids: Vec<usize> = (0..n).collect();
        let plan = partition_clusters(&ids, c, &mut stream(seed, &[])).unwrap();
        prop_assert_eq!(plan.cluster_count(), c);
        let mut all: Vec<usize> = plan.clusters.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, ids.clone());
        let sizes: Vec<usize> = plan.clusters.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(plan, partition_clusters(&ids, c, &mut stream(seed, &[])).unwrap());
    }

    #[test]
    fn fedvaccine_blend_is_prev_plus_mean_step(
        prev in prop::collection::vec(-2.0f64..2.0, 10),
        members in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 10), 1usize..1000), 1..6),
    ) {
        let w = model(&prev);
        let ms: Vec<_> = members.iter().map(|(v, d)| (model(v), *d)).collect();
        let pairs: Vec<_> = ms.iter().map(|(m, d)| (m, *d)).collect();
        let got = flat(&aggregate_fedvaccine(&w, &pairs).unwrap());
        let refs: Vec<_> = ms.iter().map(|(m, _)| m).collect();
        let q: Vec<f64> = ms.iter().map(|(_, d)| *d as f64).collect();
        let avg = flat(&aggregate_fedavg(&refs, &q).unwrap());
        let n = ms.len() as f64;
        for ((g, a), p) in got.iter().zip(&avg).zip(&prev) {
            prop_assert!((g - (p + (a - p) / n)).abs() < 1e-9);
        }
    }

    #[test]
    fn fedavg_of_identical_models_is_that_model(
        v in prop::collection::vec(-2.0f64..2.0, 10),
        weights in prop::collection::vec(0.1f64..10.0, 1..6),
    ) {
        let m = model(&v);
        let refs: Vec<_> = weights.iter().map(|_| &m).collect();
        let got = flat(&aggregate_fedavg(&refs, &weights).unwrap());
        for (g, x) in got.iter().zip(&v) {
            prop_assert!((g - x).abs() < 1e-12);
        }
    }
}

#[test]
fn codec_handles_empty_and_single_frame_sets() {
    for fs in [Vec::new(), vec![SignalFrame::new(vec![1.0f32, -1.0, 0.5, 0.25], 2, -20)]] {
        let ds = dataset(2, 3, fs);
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();
        let back: Dataset<f32> = read_dataset(bytes.as_slice()).unwrap();
        assert_eq!(back.frames, ds.frames);
    }
}
