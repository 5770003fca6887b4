//! Clusters a planted-prototype dataset and prints precision and recovery.
//!
//! `cargo run --release -p apc-core --example planted -- [protos] [dim] [rows] [density] [noise] [k] [p] [seed]`

use std::time::Instant;

use apc_core::awc::{cluster_awc, ClusteringConfig};
use apc_core::baselines::{cluster_bmf, cluster_brb_kmeans, BaselineConfig};
use apc_core::ingest::{generate_synthetic, SyntheticSpec};
use apc_core::metrics::partition_agreement;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let spec = SyntheticSpec::new(
        arg(0, 32.0) as usize,
        arg(1, 512.0) as usize,
        arg(2, 10_000.0) as usize,
        arg(3, 0.5),
        arg(4, 0.02),
        arg(7, 42.0) as u64,
    );
    let (k, p) = (arg(5, 32.0) as usize, arg(6, 0.5));
    let data = generate_synthetic(&spec).expect("valid spec");

    let t = Instant::now();
    let awc = cluster_awc(
        &data.matrix,
        &ClusteringConfig::new(k, p).with_seed(spec.seed),
    )
    .unwrap();
    let agree =
        partition_agreement(data.planted.cluster_of(), awc.assignment.cluster_of()).unwrap();
    println!(
        "awc   precision {:.4} agreement {:.4} iters {} ({:.2?})",
        awc.report.precision,
        agree,
        awc.trace.len(),
        t.elapsed()
    );

    let bin = data.matrix.to_binary();
    for (name, out) in [
        (
            "bmf",
            cluster_bmf(&bin, &BaselineConfig::new(k).with_seed(spec.seed)).unwrap(),
        ),
        (
            "brbk",
            cluster_brb_kmeans(&bin, &BaselineConfig::new(k).with_seed(spec.seed)).unwrap(),
        ),
    ] {
        let agree =
            partition_agreement(data.planted.cluster_of(), out.assignment.cluster_of()).unwrap();
        println!(
            "{name:5} precision {:.4} agreement {:.4} iters {}",
            out.report.precision, agree, out.iterations
        );
    }
}
