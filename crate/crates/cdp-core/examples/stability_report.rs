//! Run the codebook stability study and print the curve.

use cdp_core::eval::{stability_study, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let template_size: usize = args.get(1).map_or(228, |s| s.parse().unwrap());
    let n_reference: usize = args.get(2).map_or(720, |s| s.parse().unwrap());

    let cfg = ExperimentConfig {
        template_size,
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    let sizes = [1, 2, 5, 10, 20, 50, 100];
    let started = std::time::Instant::now();
    let points = stability_study(&sizes, n_reference, 10, &cfg).expect("stability study failed");
    eprintln!(
        "stability study (L={template_size}, reference {n_reference}) in {:.1?}",
        started.elapsed()
    );
    println!("size,mean_d1,std_d1");
    for p in &points {
        println!("{},{:.6},{:.6}", p.size, p.mean_d1, p.std_d1);
    }
}
