//! Self-check oracles bundled for the `verify` command.

use rand::Rng;
use serde::Serialize;

use crate::data::{
    generate_dataset, js_divergence, GenerateSpec, LabelDistribution, ReplayQueue, ScenarioKind,
    ScenarioSpec,
};
use crate::error::Result;
use crate::experiments::top_eigenpairs;
use crate::fl::{aggregate_fedavg, aggregate_fedvaccine, run_federation, AlgorithmKind, FlConfig};
use crate::nn::{
    cross_entropy, init_model, ArchWidths, Architecture, LayerParams, LayerSpec, ModelParams,
    OptimizerConfig, Padding, Tensor, TrainConfig,
};
use crate::rng::stream;
use crate::signal::{
    frame_stream, measure_snr, snr_grid, synthesize_frame, FrameConfig, ImpairmentSpec,
    ModulationScheme, SignalFrame,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, bound: f64, what: &str) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst.is_finite() && worst < bound,
        detail: format!("worst {what} {worst:.3e} (bound {bound:.0e})"),
    }
}

/// Architectures covering every layer kind, including both padding modes and
/// a trailing softmax.
pub fn gradient_check_architectures() -> Vec<Architecture> {
    vec![
        Architecture::amc(
            8,
            3,
            &ArchWidths {
                conv1: 2,
                conv2: 3,
                dense: 5,
                dropout: 0.5,
            },
        ),
        Architecture {
            input: [2, 3, 5],
            layers: vec![
                LayerSpec::Conv2D {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: [3, 2],
                    padding: Padding::Same,
                },
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 45,
                    outputs: 4,
                },
                LayerSpec::Softmax,
            ],
        },
    ]
}

/// Largest relative error between analytic gradients and central differences
/// (step `h`) over every parameter of `arch`, for one seed. Biases are
/// randomized, and parameters whose perturbation flips the sign of any ReLU
/// input are skipped since the loss is not differentiable across the kink.
pub fn gradient_check(arch: &Architecture, seed: u64, h: f64) -> Result<f64> {
    let mut p = init_model::<f64>(arch, seed)?;
    let mut r = stream(seed, &[0x6772_6164]);
    for l in &mut p.layers {
        l.bias.data_mut().iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    }
    let n = 3;
    let mut shape = vec![n];
    shape.extend_from_slice(&arch.input);
    let x = Tensor::from_vec(&shape, (0..n * arch.input_len()).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let labels: Vec<usize> = (0..n).map(|i| i % arch.classes()).collect();
    let (_, g) = arch.backward(&p, &x, &labels, &mut stream(seed, &[1]))?;
    let relus: Vec<usize> = (0..arch.layers.len())
        .filter(|&i| matches!(arch.layers[i], LayerSpec::ReLU))
        .collect();
    let loss = |q: &ModelParams<f64>| -> Result<(f64, Vec<bool>)> {
        let (logits, trace) = arch.forward_traced(q, &x, true, &mut stream(seed, &[1]))?;
        let signs = relus
            .iter()
            .flat_map(|&i| trace.layer_input(i).iter().map(|v| *v > 0.0))
            .collect();
        Ok((cross_entropy(&logits, &labels)?.0, signs))
    };
    let mut worst: f64 = 0.0;
    let mut q = p.clone();
    for li in 0..p.layers.len() {
        for which in 0..2 {
            let len = if which == 0 { p.layers[li].weight.len() } else { p.layers[li].bias.len() };
            for idx in 0..len {
                let get = |m: &mut ModelParams<f64>| -> *mut f64 {
                    let t = if which == 0 { &mut m.layers[li].weight } else { &mut m.layers[li].bias };
                    &mut t.data_mut()[idx] as *mut f64
                };
                let orig = unsafe { *get(&mut q) };
                unsafe { *get(&mut q) = orig + h };
                let up = loss(&q)?;
                unsafe { *get(&mut q) = orig - h };
                let down = loss(&q)?;
                unsafe { *get(&mut q) = orig };
                if up.1 != down.1 {
                    continue;
                }
                let fd = (up.0 - down.0) / (2.0 * h);
                let an = if which == 0 { g.layers[li].weight.data()[idx] } else { g.layers[li].bias.data()[idx] };
                let scale = fd.abs().max(an.abs());
                if scale > 1e-7 {
                    worst = worst.max((fd - an).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

pub fn check_gradients(seeds: u64) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for arch in gradient_check_architectures() {
        for s in 0..seeds {
            worst = worst.max(gradient_check(&arch, s, 1e-4)?);
        }
    }
    Ok(outcome("gradient", worst, 1e-4, "relative error"))
}

/// Largest |measured - target| SNR over `per_cell` frames of every scheme and
/// grid SNR.
pub fn snr_calibration_error(per_cell: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for scheme in ModulationScheme::ALL {
        for snr in snr_grid() {
            for i in 0..per_cell {
                let f: SignalFrame<f64> =
                    synthesize_frame(scheme, snr, &ImpairmentSpec::default(), &mut frame_stream(7, scheme, snr, i))?;
                let clean = f.clean.as_ref().expect("clean kept");
                let noise = f.noise().expect("clean kept");
                worst = worst.max((measure_snr(clean, &noise)? - snr as f64).abs());
            }
        }
    }
    Ok(worst)
}

pub fn check_snr(per_cell: u64) -> Result<CheckOutcome> {
    Ok(outcome("snr-calibration", snr_calibration_error(per_cell)?, 0.5, "dB deviation"))
}

fn random_dist<R: Rng>(r: &mut R, n: usize) -> LabelDistribution {
    let mut v: Vec<f64> = (0..n)
        .map(|_| if r.random::<f64>() < 0.2 { 0.0 } else { r.random::<f64>() })
        .collect();
    if v.iter().sum::<f64>() == 0.0 {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    LabelDistribution {
        probs: v.into_iter().map(|x| x / s).collect(),
        kappa: 0.05,
    }
}

pub fn check_divergence(pairs: usize) -> Result<CheckOutcome> {
    let mut r = stream(3, &[]);
    let mut failures = Vec::new();
    for _ in 0..pairs {
        let n = r.random_range(2..10);
        let p = random_dist(&mut r, n);
        let q = random_dist(&mut r, n);
        let pq = js_divergence(&p, &q)?;
        let qp = js_divergence(&q, &p)?;
        if (pq - qp).abs() >= 1e-12 {
            failures.push("asymmetric");
        }
        if !(0.0..=std::f64::consts::LN_2).contains(&pq) {
            failures.push("out of range");
        }
        if js_divergence(&p, &p)? != 0.0 {
            failures.push("nonzero self divergence");
        }
        if p != q && pq == 0.0 {
            failures.push("zero for distinct inputs");
        }
    }
    let hand = js_divergence(
        &LabelDistribution::from_probs(vec![0.5, 0.5])?,
        &LabelDistribution::from_probs(vec![0.25, 0.75])?,
    )?;
    if (hand - 0.033824).abs() > 1e-5 {
        failures.push("hand value");
    }
    Ok(CheckOutcome {
        name: "divergence",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{pairs} random pairs, JS([.5,.5],[.25,.75]) = {hand:.6}")
        } else {
            failures.join(", ")
        },
    })
}

fn random_params<R: Rng>(r: &mut R, shapes: &[(Vec<usize>, Vec<usize>)]) -> ModelParams<f64> {
    let t = |r: &mut R, s: &[usize]| {
        Tensor::from_vec(s, (0..s.iter().product()).map(|_| r.random_range(-1.0..1.0)).collect()).expect("shape")
    };
    ModelParams {
        layers: shapes
            .iter()
            .map(|(w, b)| LayerParams {
                weight: t(r, w),
                bias: t(r, b),
            })
            .collect(),
    }
}

pub fn check_aggregation(sets: usize) -> Result<CheckOutcome> {
    let mut r = stream(5, &[]);
    let shapes = vec![(vec![3, 4], vec![4]), (vec![2, 2, 3], vec![2])];
    let mut worst: f64 = 0.0;
    for _ in 0..sets {
        let prev = random_params(&mut r, &shapes);
        let m = r.random_range(1..6);
        let ws: Vec<ModelParams<f64>> = (0..m).map(|_| random_params(&mut r, &shapes)).collect();
        let ds: Vec<usize> = (0..m).map(|_| r.random_range(1..500)).collect();
        let pairs: Vec<_> = ws.iter().zip(&ds).map(|(w, d)| (w, *d)).collect();
        let got = aggregate_fedvaccine(&prev, &pairs)?;
        let total: f64 = ds.iter().map(|&d| d as f64).sum();
        for (ti, (gt, pt)) in got.tensors().zip(prev.tensors()).enumerate() {
            for e in 0..gt.len() {
                let mut want = 0.0;
                for (w, &d) in ws.iter().zip(&ds) {
                    let rho = d as f64 / total;
                    let wi = w.tensors().nth(ti).expect("tensor").data()[e];
                    want += (1.0 - rho) * pt.data()[e] + rho * wi;
                }
                want /= m as f64;
                worst = worst.max((gt.data()[e] - want).abs());
            }
        }
        let refs: Vec<&ModelParams<f64>> = ws.iter().collect();
        let q: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
        let avg = aggregate_fedavg(&refs, &q)?;
        for (ti, at) in avg.tensors().enumerate() {
            for e in 0..at.len() {
                let want: f64 = ws
                    .iter()
                    .zip(&q)
                    .map(|(w, qi)| qi / total * w.tensors().nth(ti).expect("tensor").data()[e])
                    .sum();
                worst = worst.max((at.data()[e] - want).abs());
            }
        }
        let same: Vec<_> = ds.iter().map(|&d| (&prev, d)).collect();
        if aggregate_fedvaccine(&prev, &same)?.dist_sq(&prev) > 1e-24 {
            worst = f64::INFINITY;
        }
    }
    Ok(outcome("aggregation", worst, 1e-6, "absolute deviation"))
}

/// Small federation comparing FedProx(mu = 0) with FedAvg parameter by
/// parameter.
pub fn check_fedprox_reduction() -> Result<CheckOutcome> {
    let mut spec = GenerateSpec::new(vec![ModulationScheme::Bpsk, ModulationScheme::Qpsk], vec![0, 10], 8);
    spec.frame = FrameConfig {
        frame_len: 16,
        ..FrameConfig::default()
    };
    let pool = generate_dataset::<f32>(1, &spec)?;
    let arch = Architecture::amc(
        16,
        2,
        &ArchWidths {
            conv1: 2,
            conv2: 2,
            dense: 4,
            dropout: 0.5,
        },
    );
    let cfg = FlConfig {
        seed: 2,
        clients: 3,
        rounds: 2,
        train: TrainConfig {
            epochs: 2,
            batch_size: 4,
            optimizer: OptimizerConfig::adam(1e-3),
            prox_mu: 0.0,
        },
        prox_mu: 0.0,
        clusters: 1,
        theta: -20,
        queue_capacity: 0,
        scenario: ScenarioSpec::new(ScenarioKind::Iid, 10),
        parallel: false,
    };
    let (_, a) = run_federation(AlgorithmKind::FedAvg, &cfg, &arch, &pool, &pool.frames)?;
    let (_, b) = run_federation(AlgorithmKind::FedProx, &cfg, &arch, &pool, &pool.frames)?;
    Ok(CheckOutcome {
        name: "fedprox-reduction",
        passed: a == b,
        detail: "FedProx with mu = 0 against FedAvg".into(),
    })
}

/// Random insert/evict interleavings; counts capacity breaches and JS
/// increases.
pub fn check_queue(trials: usize) -> Result<CheckOutcome> {
    let mut r = stream(8, &[]);
    let mut breaches = 0;
    let mut increases = 0;
    for t in 0..trials {
        let classes = r.random_range(2..6);
        let cap = r.random_range(0..12);
        let mut q = ReplayQueue::<f32>::new(cap, classes);
        for round in 0..r.random_range(1..5) {
            let skew = r.random_range(0..classes);
            let batch: Vec<SignalFrame<f32>> = (0..r.random_range(0..10))
                .map(|i| {
                    let label = if r.random::<f64>() < 0.5 { skew } else { r.random_range(0..classes) };
                    SignalFrame::new(vec![t as f32, i as f32], label as u8, 0)
                })
                .collect();
            q.insert(&batch, round);
            let pre = q.js_to_uniform();
            let removed = q.evict();
            if q.len() > cap {
                breaches += 1;
            }
            if !removed.is_empty() {
                if let (Some(a), Some(b)) = (pre, q.js_to_uniform()) {
                    if b > a {
                        increases += 1;
                    }
                }
            }
        }
    }
    Ok(CheckOutcome {
        name: "queue",
        passed: breaches == 0 && increases == 0,
        detail: format!("{trials} trials: {breaches} capacity breaches, {increases} JS increases"),
    })
}

/// Cyclic Jacobi eigenvalue iteration for small symmetric matrices, used as a
/// dense reference. Returns eigenvalues descending with matching columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    (
        order.iter().map(|&i| m[i][i]).collect(),
        order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect(),
    )
}

/// Power iteration against the Jacobi reference on random 5x5 covariances
/// with a guaranteed eigen-gap.
pub fn check_pca(trials: usize) -> Result<CheckOutcome> {
    let mut r = stream(9, &[]);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let cov = random_covariance(&mut r, 5);
        let (ev, evec) = jacobi_eigen(&cov);
        let (pv, pvec, _) = top_eigenpairs(&cov, 5, t as u64);
        for k in 0..pv.len() {
            worst = worst.max((pv[k] - ev[k]).abs());
            let sign = if pvec[k].iter().zip(&evec[k]).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in pvec[k].iter().zip(&evec[k]) {
                worst = worst.max((a - sign * b).abs());
            }
            for j in 0..pv.len() {
                let d: f64 = pvec[k].iter().zip(&pvec[j]).map(|(a, b)| a * b).sum();
                worst = worst.max((d - f64::from(u8::from(j == k))).abs());
            }
        }
    }
    Ok(outcome("pca", worst, 1e-6, "deviation"))
}

/// `Q diag(lambda) Q^T` with a random orthogonal `Q` (Gram-Schmidt) and
/// eigenvalues at least 20% apart.
pub fn random_covariance<R: Rng>(r: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut lambda = Vec::with_capacity(n);
    let mut l = r.random_range(0.5..2.0);
    for _ in 0..n {
        lambda.push(l);
        l *= r.random_range(1.25..2.0);
    }
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| lambda[k] * q[k][i] * q[k][j]).sum()).collect())
        .collect()
}

/// The full bundle as run by the `verify` command.
pub fn run_all() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_gradients(10)?,
        check_snr(100)?,
        check_divergence(1000)?,
        check_aggregation(100)?,
        check_fedprox_reduction()?,
        check_queue(10_000)?,
        check_pca(20)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_known_matrix() {
        let (ev, vecs) = jacobi_eigen(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((ev[0] - 3.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!((vecs[0][0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn full_bundle_passes() {
        for c in run_all().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
