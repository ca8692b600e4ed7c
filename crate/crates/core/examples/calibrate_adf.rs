//! Simulates the null distribution of the constant-only ADF t-statistic
//! (lag order 1) and prints the 1%, 5% and 10% quantiles per series length.
//!
//! cargo run --release -p codriver --example calibrate_adf

use codriver::numstat::RandomSource;
use codriver::stationarity::adf_statistic;
use rayon::prelude::*;

const REPLICATES: u64 = 100_000;

fn main() {
    for (k, n) in [250usize, 500, 1000].into_iter().enumerate() {
        let mut stats: Vec<f64> = (0..REPLICATES)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RandomSource::new(0xADF0 + k as u64, rep);
                let mut y = 0.0;
                let walk: Vec<f64> = (0..n)
                    .map(|_| {
                        y += rng.standard_normal();
                        y
                    })
                    .collect();
                adf_statistic(&walk, 1).expect("random walk regression")
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        let q = |p: f64| stats[(p * REPLICATES as f64) as usize];
        println!("({n}, [{:.4}, {:.4}, {:.4}]),", q(0.01), q(0.05), q(0.10));
    }
}
