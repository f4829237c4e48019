//! Run the default desk-scale grid experiment and print the AUC table.

use cdp_core::eval::{run_experiment, ExperimentConfig, FakeKind, Printer};

fn main() {
    let cfg = ExperimentConfig::default();
    let started = std::time::Instant::now();
    let report = run_experiment(&cfg).expect("experiment failed");
    eprintln!("experiment finished in {:.1?}", started.elapsed());

    print!("{:8}", "metric");
    for printer in Printer::ALL {
        for fake in FakeKind::ALL {
            print!("  {printer}|f^{fake}");
        }
        print!("  {printer}-avg");
    }
    println!("  total");
    for total in &report.totals {
        let metric = total.metric;
        print!("{:8}", metric.id());
        for printer in Printer::ALL {
            for fake in FakeKind::ALL {
                let cell = report
                    .cells
                    .iter()
                    .find(|c| c.original == printer && c.fake == fake && c.metric == metric)
                    .unwrap();
                print!("  {:7.4}", cell.mean_auc);
            }
            let avg = report
                .printer_averages
                .iter()
                .find(|a| a.original == printer && a.metric == metric)
                .unwrap();
            print!("  {:6.4}", avg.mean_auc);
        }
        println!("  {:6.4}", total.mean_auc);
    }
    println!();
    for mu in &report.chosen_mu {
        println!(
            "run {} printer {} {:7}: mu = {}",
            mu.seed,
            mu.original,
            mu.metric.id(),
            mu.mu.map_or("none".into(), |m| format!("{m:.2}")),
        );
    }
}
