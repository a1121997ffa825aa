//! Round orchestration: client selection, the count-exchange balancing
//! protocol, local training and FedAvg / simple-mean aggregation.
//!
//! A round is
//!
//! 1. the server samples `m` clients with data;
//! 2. with balancing on, each selected client reports its label counts, the
//!    server replies with the per-label maximum, and every client tops up
//!    each label by synthesizing transformed copies of its own images;
//! 3. every client trains from the same incoming global model;
//! 4. the server averages the returned parameters.
//!
//! Only counts and parameters cross the client/server boundary; they are
//! kept as explicit [`ProtocolMessage`] values so a run can be audited.

use std::time::Instant;

use log::warn;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::synthesize;
use crate::data::{label_histogram, LabeledExample};
use crate::error::{invalid, Result};
use crate::metrics::{evaluate, global_objective, weight_divergence, RoundRecord};
use crate::model::{init_params, local_train, Architecture, ModelParams, OptimizerKind};
use crate::partition::ClientShard;
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Weighted by client example counts.
    #[serde(alias = "fedavg")]
    FedAvg,
    SimpleMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    None,
    AugmentBalance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub num_rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub aggregator: Aggregator,
    pub balancing: Balancing,
    pub optimizer: OptimizerKind,
    pub arch: Architecture,
    pub master_seed: u64,
    /// Track divergence from a paired centralized run.
    pub track_divergence: bool,
    /// Fill the wall-time column. Off by default so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            num_rounds: 100,
            clients_per_round: 5,
            local_epochs: 1,
            batch_size: 16,
            aggregator: Aggregator::FedAvg,
            balancing: Balancing::None,
            optimizer: OptimizerKind::adadelta(0.005),
            arch: Architecture::Softmax,
            master_seed: 0,
            track_divergence: false,
            record_wall_time: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.clients_per_round < 1 || self.clients_per_round > num_clients {
            return invalid(format!(
                "clients_per_round {} must be in [1, {num_clients}]",
                self.clients_per_round
            ));
        }
        if self.local_epochs < 1 {
            return invalid("local_epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return invalid("batch_size must be at least 1");
        }
        self.optimizer.validate()
    }
}

/// Messages exchanged in a round, in the order they are sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ProtocolMessage {
    /// Client to server: local label histogram.
    Counts {
        round: usize,
        client_id: usize,
        histogram: Vec<usize>,
    },
    /// Server to selected clients: per-label targets.
    Targets { round: usize, targets: Vec<usize> },
    /// Client to server: trained parameters and aggregation weight.
    Update {
        round: usize,
        client_id: usize,
        n_k: usize,
        params: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    /// Ascending client ids.
    pub selected: Vec<usize>,
    pub pre_histograms: Vec<Vec<usize>>,
    pub post_histograms: Vec<Vec<usize>>,
    pub targets: Option<Vec<usize>>,
    /// `(client_id, label)` pairs that could not be balanced because the
    /// client holds no example of that label.
    pub skipped: Vec<(usize, usize)>,
    pub n_k: Vec<usize>,
    pub messages: Vec<ProtocolMessage>,
    pub global: ModelParams,
}

/// Uniform sample of `m` distinct ids from `eligible`, returned ascending.
pub fn select_clients(eligible: &[usize], m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if m > eligible.len() {
        return Err(crate::error::Error::NotEnoughClients {
            requested: m,
            eligible: eligible.len(),
        });
    }
    let mut picked: Vec<usize> = index::sample(rng, eligible.len(), m)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Per-label maximum over the reported histograms.
pub fn compute_balance_targets(histograms: &[Vec<usize>]) -> Vec<usize> {
    let width = histograms.iter().map(Vec::len).max().unwrap_or(0);
    let mut targets = vec![0; width];
    for h in histograms {
        for (t, &c) in targets.iter_mut().zip(h) {
            *t = (*t).max(c);
        }
    }
    targets
}

/// A shard topped up to the targets. Synthetic examples follow the
/// originals.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedShard {
    pub examples: Vec<LabeledExample>,
    pub histogram: Vec<usize>,
    /// Labels with a positive target that the client has no example of.
    pub skipped: Vec<usize>,
}

pub fn balance_shard(
    shard: &ClientShard,
    targets: &[usize],
    rng: &mut RngStream,
) -> Result<BalancedShard> {
    let num_classes = shard.label_histogram.len();
    if targets.len() != num_classes {
        return invalid(format!(
            "{} targets for {num_classes} labels",
            targets.len()
        ));
    }
    let mut examples = shard.examples.clone();
    let mut skipped = Vec::new();
    for (label, (&have, &want)) in shard.label_histogram.iter().zip(targets).enumerate() {
        let deficit = want.saturating_sub(have);
        if deficit == 0 {
            continue;
        }
        if have == 0 {
            warn!(
                "client {} has no examples of label {label}; cannot reach target {want}",
                shard.client_id
            );
            skipped.push(label);
            continue;
        }
        let pool: Vec<_> = shard
            .examples
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.image.clone())
            .collect();
        let mut label_rng = rng.fork();
        for image in synthesize(&pool, deficit, &mut label_rng)? {
            examples.push(LabeledExample { image, label });
        }
    }
    let histogram = label_histogram(&examples, num_classes);
    Ok(BalancedShard {
        examples,
        histogram,
        skipped,
    })
}

/// FedAvg (`sum n_k/n * w_k`) or the unweighted mean, summed in input order.
pub fn aggregate(updates: &[(ModelParams, usize)], aggregator: Aggregator) -> Result<ModelParams> {
    let Some((first, _)) = updates.first() else {
        return invalid("aggregate needs at least one update");
    };
    for (p, n) in updates {
        first.check_compatible(p)?;
        if *n == 0 {
            return invalid("every update needs n_k >= 1");
        }
    }
    let weights = aggregation_weights(updates.iter().map(|(_, n)| *n), aggregator);
    let mut out = first.zeros_like();
    for ((p, _), w) in updates.iter().zip(weights) {
        out.add_scaled(p, w)?;
    }
    Ok(out)
}

pub fn aggregation_weights(
    counts: impl ExactSizeIterator<Item = usize> + Clone,
    aggregator: Aggregator,
) -> Vec<f64> {
    let m = counts.len();
    match aggregator {
        Aggregator::FedAvg => {
            let total: usize = counts.clone().sum();
            counts.map(|n| n as f64 / total as f64).collect()
        }
        Aggregator::SimpleMean => vec![1.0 / m as f64; m],
    }
}

fn flatten(params: &ModelParams) -> Vec<f64> {
    params.values().collect()
}

/// Trained params, n_k, post-balance histogram, skipped labels.
type ClientResult = (ModelParams, usize, Vec<usize>, Vec<usize>);

/// One federated round starting from `global`.
pub fn run_round(
    global: &ModelParams,
    shards: &[ClientShard],
    cfg: &FederationConfig,
    round: usize,
) -> Result<RoundOutcome> {
    cfg.validate(shards.len())?;
    let eligible: Vec<usize> = shards
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.client_id)
        .collect();
    let seed = cfg.master_seed;
    let r = round as u64;
    let selected = select_clients(
        &eligible,
        cfg.clients_per_round,
        &mut RngStream::lane(seed, Purpose::Select, u64::MAX, r),
    )?;
    let by_id = |id: usize| {
        shards
            .iter()
            .find(|s| s.client_id == id)
            .expect("selected from shards")
    };
    let chosen: Vec<&ClientShard> = selected.iter().map(|&id| by_id(id)).collect();
    let pre_histograms: Vec<Vec<usize>> =
        chosen.iter().map(|s| s.label_histogram.clone()).collect();

    let mut messages = Vec::new();
    let targets = match cfg.balancing {
        Balancing::None => None,
        Balancing::AugmentBalance => {
            for s in &chosen {
                messages.push(ProtocolMessage::Counts {
                    round,
                    client_id: s.client_id,
                    histogram: s.label_histogram.clone(),
                });
            }
            let reported: Vec<Vec<usize>> = messages
                .iter()
                .filter_map(|m| match m {
                    ProtocolMessage::Counts { histogram, .. } => Some(histogram.clone()),
                    _ => None,
                })
                .collect();
            let targets = compute_balance_targets(&reported);
            messages.push(ProtocolMessage::Targets {
                round,
                targets: targets.clone(),
            });
            Some(targets)
        }
    };

    // clients are independent: each uses only its own (client, round) lanes
    let results: Vec<Result<ClientResult>> = chosen
        .par_iter()
        .map(|shard| {
            let id = shard.client_id as u64;
            let (examples, histogram, skipped) = match &targets {
                None => (
                    shard.examples.clone(),
                    shard.label_histogram.clone(),
                    Vec::new(),
                ),
                Some(t) => {
                    let mut lane = RngStream::lane(seed, Purpose::Augment, id, r);
                    let b = balance_shard(shard, t, &mut lane)?;
                    (b.examples, b.histogram, b.skipped)
                }
            };
            let params = local_train(
                global,
                &examples,
                cfg.local_epochs,
                cfg.batch_size,
                cfg.optimizer,
                &mut RngStream::lane(seed, Purpose::Train, id, r),
            )?;
            Ok((params, examples.len(), histogram, skipped))
        })
        .collect();

    let mut updates = Vec::with_capacity(results.len());
    let mut post_histograms = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (&id, res) in selected.iter().zip(results) {
        let (params, n_k, hist, skip) = res?;
        skipped.extend(skip.into_iter().map(|label| (id, label)));
        post_histograms.push(hist);
        messages.push(ProtocolMessage::Update {
            round,
            client_id: id,
            n_k,
            params: flatten(&params),
        });
        updates.push((params, n_k));
    }
    let n_k: Vec<usize> = updates.iter().map(|(_, n)| *n).collect();
    let new_global = aggregate(&updates, cfg.aggregator)?;
    Ok(RoundOutcome {
        round,
        selected,
        pre_histograms,
        post_histograms,
        targets,
        skipped,
        n_k,
        messages,
        global: new_global,
    })
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub records: Vec<RoundRecord>,
    pub final_params: ModelParams,
}

pub fn initial_params(
    cfg: &FederationConfig,
    image_shape: (usize, usize),
    num_classes: usize,
) -> Result<ModelParams> {
    init_params(
        cfg.arch,
        image_shape,
        num_classes,
        &mut RngStream::new(cfg.master_seed, Purpose::Init),
    )
}

/// Pooled training data in central-index order.
fn pooled(shards: &[ClientShard]) -> Vec<LabeledExample> {
    let mut all: Vec<(usize, &LabeledExample)> = shards
        .iter()
        .flat_map(|s| s.indices.iter().copied().zip(&s.examples))
        .collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, e)| e.clone()).collect()
}

/// Runs `num_rounds` rounds, evaluating on `test` after each one (and once
/// before the first). `observe` sees every round outcome as it completes.
pub fn run_experiment_with(
    cfg: &FederationConfig,
    shards: &[ClientShard],
    test: &[LabeledExample],
    mut observe: impl FnMut(&RoundOutcome, &RoundRecord) -> Result<()>,
) -> Result<ExperimentRun> {
    cfg.validate(shards.len())?;
    let first = shards
        .iter()
        .flat_map(|s| s.examples.first())
        .next()
        .or(test.first());
    let Some(first) = first else {
        return invalid("no data to infer the image shape from");
    };
    let num_classes = shards.first().map(|s| s.label_histogram.len()).unwrap_or(0);
    let mut global = initial_params(cfg, first.image.shape(), num_classes)?;

    let reference_data = if cfg.track_divergence {
        pooled(shards)
    } else {
        Vec::new()
    };
    let mut reference = global.clone();

    let record_for = |round: usize,
                      params: &ModelParams,
                      reference: &ModelParams,
                      started: Instant|
     -> Result<RoundRecord> {
        let (test_accuracy, test_loss) = evaluate(params, test)?;
        let objective = global_objective(params, shards, None)?;
        let divergence = if cfg.track_divergence {
            Some(weight_divergence(params, reference)?)
        } else {
            None
        };
        Ok(RoundRecord {
            round,
            test_accuracy,
            test_loss,
            global_objective: objective,
            weight_divergence: divergence,
            wall_time_s: cfg
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64()),
        })
    };

    let mut records = Vec::with_capacity(cfg.num_rounds + 1);
    records.push(record_for(0, &global, &reference, Instant::now())?);
    for round in 1..=cfg.num_rounds {
        let started = Instant::now();
        let outcome = run_round(&global, shards, cfg, round)?;
        global = outcome.global.clone();
        if cfg.track_divergence {
            reference = local_train(
                &reference,
                &reference_data,
                cfg.local_epochs,
                cfg.batch_size,
                cfg.optimizer,
                &mut RngStream::lane(
                    cfg.master_seed,
                    Purpose::Centralized,
                    u64::MAX,
                    round as u64,
                ),
            )?;
        }
        let record = record_for(round, &global, &reference, started)?;
        observe(&outcome, &record)?;
        records.push(record);
    }
    Ok(ExperimentRun {
        records,
        final_params: global,
    })
}

pub fn run_experiment(
    cfg: &FederationConfig,
    shards: &[ClientShard],
    test: &[LabeledExample],
) -> Result<ExperimentRun> {
    run_experiment_with(cfg, shards, test, |_, _| Ok(()))
}

/// Centralized baseline: `local_epochs` epochs on the pooled data per
/// round-equivalent, same init and optimizer. Reports the same CSV schema
/// with the divergence column empty. `observe` receives each checkpoint.
pub fn run_centralized(
    cfg: &FederationConfig,
    train: &[LabeledExample],
    num_classes: usize,
    test: &[LabeledExample],
    mut observe: impl FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<ExperimentRun> {
    if cfg.local_epochs < 1 || cfg.batch_size < 1 {
        return invalid("local_epochs and batch_size must be at least 1");
    }
    let Some(first) = train.first() else {
        return invalid("centralized training needs data");
    };
    let mut params = initial_params(cfg, first.image.shape(), num_classes)?;
    let pooled_shard = ClientShard {
        client_id: 0,
        indices: (0..train.len()).collect(),
        examples: train.to_vec(),
        label_histogram: label_histogram(train, num_classes),
    };
    let shards = std::slice::from_ref(&pooled_shard);
    let mut records = Vec::with_capacity(cfg.num_rounds + 1);
    for round in 0..=cfg.num_rounds {
        let started = Instant::now();
        if round > 0 {
            params = local_train(
                &params,
                train,
                cfg.local_epochs,
                cfg.batch_size,
                cfg.optimizer,
                &mut RngStream::lane(
                    cfg.master_seed,
                    Purpose::Centralized,
                    u64::MAX,
                    round as u64,
                ),
            )?;
        }
        observe(round, &params)?;
        let (test_accuracy, test_loss) = evaluate(&params, test)?;
        records.push(RoundRecord {
            round,
            test_accuracy,
            test_loss,
            global_objective: global_objective(&params, shards, None)?,
            weight_divergence: None,
            wall_time_s: cfg
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64()),
        });
    }
    Ok(ExperimentRun {
        records,
        final_params: params,
    })
}
