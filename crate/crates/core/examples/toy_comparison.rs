//! Compare uniform, loss-based and submodular batch sampling on Gaussian blobs.
//!
//! `cargo run --release -p smdl-core --example toy_comparison -- [noise] [seeds]`

use std::time::Instant;

use smdl_core::synth::{gen_blobs, BlobSpec};
use smdl_core::{train, ObjectiveWeights, SamplerKind, SelectionConfig, TrainerConfig};

fn main() -> smdl_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let noise: f64 = args
        .next()
        .map_or(BlobSpec::default().noise, |a| a.parse().expect("noise"));
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seeds"));
    let spec = BlobSpec {
        noise,
        ..Default::default()
    };
    let (train_set, test_set) = gen_blobs(&spec, 0)?;
    for sampler in [SamplerKind::Uniform, SamplerKind::LossBased, SamplerKind::Smdl] {
        let started = Instant::now();
        let mut finals = Vec::new();
        for seed in 0..seeds {
            let cfg = TrainerConfig {
                epochs: 20,
                sampler,
                hidden: 32,
                learning_rate: 0.1,
                ..Default::default()
            };
            let sel = SelectionConfig {
                batch_size: 32,
                seed,
                ..Default::default()
            };
            let out = train(&train_set, &test_set, &cfg, &sel, &ObjectiveWeights::default())?;
            finals.push(out.summary().final_accuracy);
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!(
            "{sampler:>10}: mean final acc {mean:.4} {finals:?} ({:.1?})",
            started.elapsed()
        );
    }
    Ok(())
}
