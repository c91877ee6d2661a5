use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    aggregate_fedavg, aggregate_fedvaccine, local_train, partition_clusters, AlgorithmKind,
    ClientState, FlConfig, RoundMetrics,
};
use crate::data::{filter_by_snr, sample_scenario, scenario_stream, Dataset, ReplayQueue, StratifiedPool};
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, full_gradient, init_model, train_with_state, Architecture, Evaluation, ModelParams,
    OptimizerState, TrainConfig,
};
use crate::rng::{self, domain, StreamRng};
use crate::scalar::Scalar;
use crate::signal::SignalFrame;

/// Training stream of one client in one round.
pub fn client_stream(seed: u64, client: usize, round: usize) -> StreamRng {
    rng::stream(seed, &[domain::TRAIN, client as u64, round as u64])
}

type Trained<T> = Option<(ModelParams<T>, usize)>;

/// Server and clients of one algorithm run.
pub struct Federation<'a, T: Scalar> {
    arch: &'a Architecture,
    cfg: FlConfig,
    kind: AlgorithmKind,
    pool: StratifiedPool<'a, T>,
    test: &'a [SignalFrame<T>],
    pub clients: Vec<ClientState<T>>,
    pub global: ModelParams<T>,
    round: usize,
    server_opt: OptimizerState<T>,
}

impl<'a, T: Scalar> Federation<'a, T> {
    /// Initializes `W` from the run seed; every algorithm starts from the
    /// same parameters.
    pub fn new(
        kind: AlgorithmKind,
        cfg: FlConfig,
        arch: &'a Architecture,
        pool: &'a Dataset<T>,
        test: &'a [SignalFrame<T>],
    ) -> Result<Self> {
        cfg.validate(kind)?;
        if test.is_empty() {
            return Err(Error::Empty("test set is empty".into()));
        }
        if arch.classes() != pool.class_count() {
            return Err(Error::Config(format!(
                "network has {} outputs but the pool has {} classes",
                arch.classes(),
                pool.class_count()
            )));
        }
        let global = init_model(arch, rng::derive_seed(cfg.seed, &[domain::INIT]))?;
        let classes = pool.class_count();
        let clients = (0..cfg.clients)
            .map(|id| ClientState {
                id,
                model: (kind == AlgorithmKind::DistL).then(|| global.clone()),
                queue: ReplayQueue::new(cfg.queue_capacity, classes),
                current: Vec::new(),
                delta: 0,
            })
            .collect();
        Ok(Self {
            arch,
            kind,
            pool: StratifiedPool::new(pool)?,
            test,
            clients,
            global,
            round: 0,
            server_opt: OptimizerState::new(cfg.train.optimizer),
            cfg,
        })
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Raw per-client draws for `round` and their combined hash. Depends only
    /// on the seed, client and round, so every algorithm sees the same data.
    fn draw_round(&self, round: usize) -> Result<(Vec<Dataset<T>>, String)> {
        let mut h = Sha256::new();
        let mut out = Vec::with_capacity(self.cfg.clients);
        for i in 0..self.cfg.clients {
            let mut r = scenario_stream(self.cfg.seed, i, round as u64);
            let (_, ds) = sample_scenario(&self.cfg.scenario, &self.pool, &mut r)?;
            h.update(ds.content_hash().as_bytes());
            out.push(ds);
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok((out, hash))
    }

    /// Queue insert, threshold filter, eviction and replay append.
    fn prepare_clients(&mut self, raw: Vec<Dataset<T>>, round: usize) {
        let theta = self.cfg.theta;
        let use_queue = self.kind.uses_queue();
        for (c, ds) in self.clients.iter_mut().zip(raw) {
            let mut cur = filter_by_snr(&ds, theta).frames;
            if use_queue {
                c.queue.insert(&ds.frames, round as u64);
                c.queue.evict();
                if round > 1 {
                    cur.extend(
                        c.queue
                            .contents_before(round as u64)
                            .into_iter()
                            .filter(|f| f.snr_db >= theta),
                    );
                }
            }
            c.delta = cur.len();
            c.current = cur;
        }
    }

    fn local_config(&self) -> TrainConfig {
        TrainConfig {
            prox_mu: if self.kind == AlgorithmKind::FedProx {
                self.cfg.prox_mu
            } else {
                0.0
            },
            ..self.cfg.train
        }
    }

    /// Trains the listed clients from `init`; results are in `ids` order
    /// whether or not they ran concurrently.
    fn train_clients(&self, init: &ModelParams<T>, ids: &[usize], round: usize) -> Result<Vec<Trained<T>>> {
        let tc = self.local_config();
        let job = |&i: &usize| {
            let mut r = client_stream(self.cfg.seed, i, round);
            local_train(self.arch, init, &self.clients[i].current, &tc, &mut r)
        };
        if self.cfg.parallel {
            ids.par_iter().map(job).collect()
        } else {
            ids.iter().map(job).collect()
        }
    }

    fn metrics(&self, round: usize, eval: Evaluation, hash: String, started: Instant) -> RoundMetrics {
        RoundMetrics {
            round,
            algorithm: self.kind,
            accuracy: eval.accuracy,
            loss: eval.loss,
            per_snr: eval.per_snr,
            deltas: self.clients.iter().map(|c| c.delta).collect(),
            skipped_clients: self
                .clients
                .iter()
                .filter(|c| c.delta == 0)
                .map(|c| c.id)
                .collect(),
            skipped_clusters: Vec::new(),
            client_accuracy: None,
            samples_seen: self.clients.iter().map(|c| c.delta).sum(),
            data_hash: hash,
            wall_seconds: started.elapsed().as_secs_f64(),
        }
    }

    fn begin_round(&mut self) -> Result<(usize, String, Instant)> {
        let started = Instant::now();
        self.round += 1;
        let r = self.round;
        let (raw, hash) = self.draw_round(r)?;
        self.prepare_clients(raw, r);
        Ok((r, hash, started))
    }

    /// One global epoch of cluster-wise sequential FedVaccine. Each cluster
    /// starts from the `W` left by the previous cluster.
    pub fn run_round_fedvaccine(&mut self) -> Result<RoundMetrics> {
        let (r, hash, started) = self.begin_round()?;
        let ids: Vec<usize> = (0..self.cfg.clients).collect();
        let plan = partition_clusters(
            &ids,
            self.cfg.clusters,
            &mut rng::stream(self.cfg.seed, &[domain::CLUSTER, r as u64]),
        )?;
        let mut skipped_clusters = Vec::new();
        for (ci, members) in plan.clusters.iter().enumerate() {
            let trained = self.train_clients(&self.global, members, r)?;
            let pairs: Vec<(&ModelParams<T>, usize)> =
                trained.iter().flatten().map(|(p, d)| (p, *d)).collect();
            if pairs.is_empty() {
                skipped_clusters.push(ci);
                continue;
            }
            self.global = aggregate_fedvaccine(&self.global, &pairs)?;
        }
        let eval = evaluate(self.arch, &self.global, self.test)?;
        let mut m = self.metrics(r, eval, hash, started);
        m.skipped_clusters = skipped_clusters;
        Ok(m)
    }

    /// One global epoch without clusters: the model visits clients in index
    /// order and the last client's parameters become `W`.
    pub fn run_round_chain(&mut self) -> Result<RoundMetrics> {
        let (r, hash, started) = self.begin_round()?;
        for i in 0..self.cfg.clients {
            if let Some((p, _)) = self.train_clients(&self.global, &[i], r)?.pop().flatten() {
                self.global = p;
            }
        }
        let eval = evaluate(self.arch, &self.global, self.test)?;
        Ok(self.metrics(r, eval, hash, started))
    }

    /// FedAvg, FedProx, FedSGD, CL or DistL round.
    pub fn run_round_baseline(&mut self) -> Result<RoundMetrics> {
        match self.kind {
            AlgorithmKind::FedAvg | AlgorithmKind::FedProx => {
                let (r, hash, started) = self.begin_round()?;
                let ids: Vec<usize> = (0..self.cfg.clients).collect();
                let trained = self.train_clients(&self.global, &ids, r)?;
                let (ps, ws): (Vec<&ModelParams<T>>, Vec<f64>) =
                    trained.iter().flatten().map(|(p, d)| (p, *d as f64)).unzip();
                if !ps.is_empty() {
                    self.global = aggregate_fedavg(&ps, &ws)?;
                }
                let eval = evaluate(self.arch, &self.global, self.test)?;
                Ok(self.metrics(r, eval, hash, started))
            }
            AlgorithmKind::FedSgd => {
                let (r, hash, started) = self.begin_round()?;
                let b = self.cfg.train.batch_size;
                let job = |c: &ClientState<T>| -> Result<Option<(ModelParams<T>, f64)>> {
                    if c.current.is_empty() {
                        return Ok(None);
                    }
                    let mut rr = client_stream(self.cfg.seed, c.id, r);
                    let g = full_gradient(self.arch, &self.global, &c.current, b, &mut rr)?;
                    Ok(Some((g, c.current.len() as f64)))
                };
                let grads: Vec<_> = if self.cfg.parallel {
                    self.clients.par_iter().map(job).collect::<Result<_>>()?
                } else {
                    self.clients.iter().map(job).collect::<Result<_>>()?
                };
                let (gs, ws): (Vec<&ModelParams<T>>, Vec<f64>) =
                    grads.iter().flatten().map(|(g, w)| (g, *w)).unzip();
                if !gs.is_empty() {
                    let g = aggregate_fedavg(&gs, &ws)?;
                    self.server_opt.step(&mut self.global, &g)?;
                }
                let eval = evaluate(self.arch, &self.global, self.test)?;
                Ok(self.metrics(r, eval, hash, started))
            }
            AlgorithmKind::Cl => {
                let (r, hash, started) = self.begin_round()?;
                let pooled: Vec<SignalFrame<T>> =
                    self.clients.iter().flat_map(|c| c.current.iter().cloned()).collect();
                let mut srng = rng::stream(self.cfg.seed, &[domain::SERVER, r as u64]);
                let tc = self.cfg.train;
                train_with_state(self.arch, &mut self.global, &pooled, &tc, &mut self.server_opt, &mut srng)?;
                let eval = evaluate(self.arch, &self.global, self.test)?;
                Ok(self.metrics(r, eval, hash, started))
            }
            AlgorithmKind::DistL => {
                let (r, hash, started) = self.begin_round()?;
                let tc = self.local_config();
                let seed = self.cfg.seed;
                let arch = self.arch;
                let job = |c: &mut ClientState<T>| -> Result<()> {
                    let mut rr = client_stream(seed, c.id, r);
                    let init = c.model.take().expect("distributed clients own a model");
                    c.model = Some(match local_train(arch, &init, &c.current, &tc, &mut rr)? {
                        Some((p, _)) => p,
                        None => init,
                    });
                    Ok(())
                };
                if self.cfg.parallel {
                    self.clients.par_iter_mut().try_for_each(job)?;
                } else {
                    self.clients.iter_mut().try_for_each(job)?;
                }
                let evals = self
                    .clients
                    .iter()
                    .map(|c| evaluate(arch, c.model.as_ref().expect("model"), self.test))
                    .collect::<Result<Vec<_>>>()?;
                let n = evals.len() as f64;
                let mut per_snr: BTreeMap<i32, f64> = BTreeMap::new();
                for e in &evals {
                    for (k, v) in &e.per_snr {
                        *per_snr.entry(*k).or_default() += v / n;
                    }
                }
                let mean = Evaluation {
                    accuracy: evals.iter().map(|e| e.accuracy).sum::<f64>() / n,
                    loss: evals.iter().map(|e| e.loss).sum::<f64>() / n,
                    per_snr,
                };
                let mut m = self.metrics(r, mean, hash, started);
                m.client_accuracy = Some(evals.iter().map(|e| e.accuracy).collect());
                Ok(m)
            }
            other => Err(Error::Config(format!("{other} is not a per-round baseline"))),
        }
    }

    /// Advances one global epoch. Global learning is not round-based; use
    /// [`Self::run`] for it.
    pub fn step(&mut self) -> Result<RoundMetrics> {
        match self.kind {
            AlgorithmKind::FedVaccine => self.run_round_fedvaccine(),
            AlgorithmKind::FedVaccineChain => self.run_round_chain(),
            AlgorithmKind::Gl => Err(Error::Config(
                "global learning trains once on all rounds; call run".into(),
            )),
            _ => self.run_round_baseline(),
        }
    }

    /// Runs all `T` rounds. For global learning every round's data is pooled
    /// first and the server model is then trained for `T` epochs, one metric
    /// row per epoch.
    pub fn run(mut self) -> Result<(Vec<RoundMetrics>, ModelParams<T>)> {
        let rounds = self.cfg.rounds;
        if self.kind != AlgorithmKind::Gl {
            let metrics = (0..rounds).map(|_| self.step()).collect::<Result<Vec<_>>>()?;
            return Ok((metrics, self.global));
        }
        let mut pooled = Vec::new();
        let mut hashes = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let (_, hash, _) = self.begin_round()?;
            for c in &mut self.clients {
                pooled.append(&mut c.current);
            }
            hashes.push(hash);
        }
        let tc = TrainConfig {
            epochs: 1,
            ..self.cfg.train
        };
        let mut metrics = Vec::with_capacity(rounds);
        for (e, hash) in hashes.into_iter().enumerate() {
            let started = Instant::now();
            let mut srng = rng::stream(self.cfg.seed, &[domain::SERVER, e as u64 + 1]);
            train_with_state(self.arch, &mut self.global, &pooled, &tc, &mut self.server_opt, &mut srng)?;
            let eval = evaluate(self.arch, &self.global, self.test)?;
            let mut m = self.metrics(e + 1, eval, hash, started);
            m.deltas = vec![0; self.cfg.clients];
            m.skipped_clients.clear();
            m.samples_seen = pooled.len();
            metrics.push(m);
        }
        Ok((metrics, self.global))
    }
}

/// Builds a federation and runs it to completion.
pub fn run_federation<T: Scalar>(
    kind: AlgorithmKind,
    cfg: &FlConfig,
    arch: &Architecture,
    pool: &Dataset<T>,
    test: &[SignalFrame<T>],
) -> Result<(Vec<RoundMetrics>, ModelParams<T>)> {
    Federation::new(kind, cfg.clone(), arch, pool, test)?.run()
}
