use fedaug_core::data::{decode_dataset, encode_dataset, generate_synthetic, split_train_test};
use fedaug_core::federation::{
    aggregate, initial_params, run_experiment, run_round, Aggregator, Balancing, FederationConfig,
};
use fedaug_core::metrics::{final_accuracy, metrics_csv, parse_metrics_csv};
use fedaug_core::model::{decode_checkpoint, encode_checkpoint, Architecture, OptimizerKind};
use fedaug_core::partition::{partition, shard_statistics, PartitionSpec};
use fedaug_core::rng::{Purpose, RngStream};

fn setup(
    seed: u64,
    spec: PartitionSpec,
) -> (
    Vec<fedaug_core::partition::ClientShard>,
    Vec<fedaug_core::data::LabeledExample>,
) {
    let ds = generate_synthetic(
        4,
        500,
        (16, 16),
        0.1,
        &mut RngStream::new(seed, Purpose::Synthetic),
    )
    .unwrap();
    let (train, test) =
        split_train_test(&ds, 0.1, &mut RngStream::new(seed, Purpose::Split)).unwrap();
    let shards = partition(&train, &spec, &mut RngStream::new(seed, Purpose::Partition)).unwrap();
    (shards, test.into_examples())
}

fn config(seed: u64) -> FederationConfig {
    FederationConfig {
        num_rounds: 50,
        clients_per_round: 5,
        optimizer: OptimizerKind::Sgd { lr: 0.05 },
        master_seed: seed,
        ..Default::default()
    }
}

#[test]
fn iid_beats_strong_skew_after_50_rounds() {
    let (iid, test) = setup(0, PartitionSpec::iid(10));
    let (skewed, _) = setup(0, PartitionSpec::dirichlet(10, 0.3));
    let a = run_experiment(&config(0), &iid, &test).unwrap();
    let b = run_experiment(&config(0), &skewed, &test).unwrap();
    let (fa, fb) = (final_accuracy(&a.records, 1), final_accuracy(&b.records, 1));
    assert!(fa > fb, "iid {fa} vs dirichlet {fb}");
}

#[test]
fn balanced_rounds_without_skips_weight_clients_equally() {
    let (shards, _) = setup(1, PartitionSpec::dirichlet(10, 5.0));
    let cfg = FederationConfig {
        balancing: Balancing::AugmentBalance,
        ..config(1)
    };
    let start = initial_params(&cfg, (16, 16), 4).unwrap();
    let mut clean = 0;
    for round in 1..=6 {
        let out = run_round(&start, &shards, &cfg, round).unwrap();
        if !out.skipped.is_empty() {
            continue;
        }
        clean += 1;
        assert!(out.n_k.windows(2).all(|w| w[0] == w[1]));
        assert!(out.post_histograms.windows(2).all(|w| w[0] == w[1]));
        let mean_cfg = FederationConfig {
            aggregator: Aggregator::SimpleMean,
            ..cfg.clone()
        };
        let mean = run_round(&start, &shards, &mean_cfg, round).unwrap();
        for (x, y) in out.global.values().zip(mean.global.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert!(clean > 0);
    let stats = shard_statistics(&shards, 4);
    assert_eq!(stats.column_sums(), {
        let mut sums = vec![0; 4];
        for s in &shards {
            for (a, b) in sums.iter_mut().zip(&s.label_histogram) {
                *a += b;
            }
        }
        sums
    });
}

#[test]
fn artifacts_round_trip() {
    let ds = generate_synthetic(
        3,
        10,
        (5, 7),
        0.05,
        &mut RngStream::new(2, Purpose::Synthetic),
    )
    .unwrap();
    let decoded = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
    assert_eq!(decoded.histogram(), ds.histogram());
    for (a, b) in decoded.examples().iter().zip(ds.examples()) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.image, b.image.quantized());
    }

    let (shards, test) = setup(3, PartitionSpec::dirichlet(6, 1.0));
    let cfg = FederationConfig {
        num_rounds: 3,
        clients_per_round: 3,
        arch: Architecture::TinyConv { filters: 2 },
        track_divergence: true,
        ..config(3)
    };
    let run = run_experiment(&cfg, &shards, &test).unwrap();
    let restored = decode_checkpoint(&encode_checkpoint(&run.final_params)).unwrap();
    assert_eq!(restored, run.final_params);
    let csv = metrics_csv(&run.records);
    assert_eq!(parse_metrics_csv(&csv).unwrap(), run.records);
}

#[test]
fn fedavg_weights_by_example_count() {
    let cfg = config(4);
    let a = initial_params(&cfg, (4, 4), 2).unwrap();
    let b = initial_params(
        &FederationConfig {
            master_seed: 5,
            ..cfg
        },
        (4, 4),
        2,
    )
    .unwrap();
    let fed = aggregate(&[(a.clone(), 3), (b.clone(), 1)], Aggregator::FedAvg).unwrap();
    for ((f, x), y) in fed.values().zip(a.values()).zip(b.values()) {
        assert!((f - (0.75 * x + 0.25 * y)).abs() < 1e-15);
    }
}
