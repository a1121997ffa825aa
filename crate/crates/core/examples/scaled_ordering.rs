//! Runs the scaled IID / Dirichlet / Dirichlet+balance comparison and
//! prints final accuracy and stability per seed.
//!
//! cargo run --release -p fedaug-core --example scaled_ordering -- [alpha] [arch]

use fedaug_core::data::{generate_synthetic, split_train_test};
use fedaug_core::federation::{run_experiment, Balancing, FederationConfig};
use fedaug_core::metrics::{final_accuracy, stability_stats};
use fedaug_core::model::{Architecture, OptimizerKind};
use fedaug_core::partition::{partition, PartitionSpec};
use fedaug_core::rng::{Purpose, RngStream};

fn main() -> fedaug_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).map_or(0.3, |a| a.parse().expect("alpha"));
    let arch = match args.get(2).map(String::as_str) {
        Some("mlp") => Architecture::Mlp { hidden: 32 },
        Some("conv") => Architecture::TinyConv { filters: 4 },
        _ => Architecture::Softmax,
    };
    let mut sums = [0.0f64; 3];
    let mut stab_wins = 0;
    for seed in 0..5u64 {
        let mut stds = [0.0f64; 3];
        let ds = generate_synthetic(
            4,
            500,
            (16, 16),
            0.1,
            &mut RngStream::new(seed, Purpose::Synthetic),
        )?;
        let (train, test) = split_train_test(&ds, 0.1, &mut RngStream::new(seed, Purpose::Split))?;
        let mut line = format!("seed {seed}:");
        for (j, (name, spec, balancing)) in [
            ("iid", PartitionSpec::iid(10), Balancing::None),
            ("dir", PartitionSpec::dirichlet(10, alpha), Balancing::None),
            (
                "dir+bal",
                PartitionSpec::dirichlet(10, alpha),
                Balancing::AugmentBalance,
            ),
        ]
        .into_iter()
        .enumerate()
        {
            let shards = partition(&train, &spec, &mut RngStream::new(seed, Purpose::Partition))?;
            let cfg = FederationConfig {
                num_rounds: 60,
                clients_per_round: 5,
                local_epochs: 1,
                batch_size: 16,
                optimizer: OptimizerKind::Sgd { lr: 0.05 },
                arch,
                balancing,
                master_seed: seed,
                ..Default::default()
            };
            let run = run_experiment(&cfg, &shards, test.examples())?;
            let acc = final_accuracy(&run.records, 5);
            let std = stability_stats(&run.records, 20)?.unwrap_or(f64::NAN);
            sums[j] += acc / 5.0;
            stds[j] = std;
            line.push_str(&format!("  {name} acc={acc:.4} std={std:.4}"));
        }
        stab_wins += usize::from(stds[2] < stds[1]);
        println!("{line}");
    }
    println!(
        "mean iid={:.4} dir={:.4} bal={:.4} gap={:.4} gain={:.4} stability wins={stab_wins}/5",
        sums[0],
        sums[1],
        sums[2],
        sums[0] - sums[1],
        sums[2] - sums[1]
    );
    Ok(())
}
