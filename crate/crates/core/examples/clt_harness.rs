//! Monte Carlo check of the entropic CLT with normal-interval coverage.

use rot_infer::cli::{eot_experiment_measures, eot_reference};
use rot_infer::entropic::SinkhornConfig;
use rot_infer::inference::{clt_experiment, CltConfig, CoverageMethod, DiscretePopulation, EntropicStat, ReferenceValue};
use rot_infer::measures::SeedPolicy;

fn main() -> rot_infer::Result<()> {
    let (mu, nu) = eot_experiment_measures();
    let reference = eot_reference(&mu, &nu, 1.0)?;
    let stat = EntropicStat { config: SinkhornConfig::default(), target: Some(nu) };
    let cfg = CltConfig {
        n: 500,
        reps: 200,
        level: 0.95,
        seed: SeedPolicy::new(9),
        coverage: CoverageMethod::Normal,
        reference: Some(ReferenceValue { value: reference, provenance: "Sinkhorn, tol 1e-12".into() }),
    };
    let report = clt_experiment(&stat, &DiscretePopulation::new(mu), None, &cfg)?;
    println!("reference S = {reference:.6}");
    println!("KS distance to N(0,1): {:.4}", report.ks_distance);
    println!("normal-interval coverage: {:.3}", report.coverage.unwrap_or(f64::NAN));
    println!(
        "replicate variance {:.5} vs mean plug-in variance {:.5}",
        report.replicate_variance,
        report.mean_plugin_variance().unwrap_or(f64::NAN)
    );
    Ok(())
}
