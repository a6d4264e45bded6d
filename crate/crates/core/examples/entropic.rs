//! Entropic OT: Sinkhorn, the ε-rescaling, potentials and a bootstrap interval.

use rot_infer::entropic::{eot_estimate, eot_with_eps, sinkhorn, EotTarget, SinkhornConfig, WeightedCloud};
use rot_infer::inference::{bootstrap, normal_ci, DiscretePopulation, EntropicStat, Population, ResampleConfig};
use rot_infer::measures::{SampleMatrix, SeedPolicy};

fn main() -> rot_infer::Result<()> {
    let u = WeightedCloud::uniform(SampleMatrix::from_column(&[0.0, 1.0])?);
    let s = sinkhorn(&u, &u, &SinkhornConfig::default())?;
    println!("uniform{{0,1}} vs itself: S = {:.6}, diagonal mass {:.6}", s.value, s.plan(0, 0));
    for eps in [0.1, 1.0, 10.0] {
        println!("  eps = {eps:>4}: S_eps = {:.6}", eot_with_eps(&u, &u, eps)?.value);
    }

    let mu = WeightedCloud::new(
        SampleMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])?,
        vec![0.1, 0.2, 0.3, 0.4],
    )?;
    let nu = WeightedCloud::new(SampleMatrix::from_rows(&[[0.5, 0.5], [1.5, 0.2], [0.2, 1.4]])?, vec![0.5, 0.25, 0.25])?;
    let n = 2000;
    let x = DiscretePopulation::new(mu.clone()).sample(n, &mut SeedPolicy::new(1).rng(0));

    let e = eot_estimate(&x, EotTarget::Fixed(&nu), &SinkhornConfig::default())?;
    let truth = sinkhorn(&mu, &nu, &SinkhornConfig { tol: 1e-12, ..Default::default() })?.value;
    println!("one-sample S(mu_n, nu) = {:.5} (population {truth:.5}), Var(phi) = {:.5}", e.value, e.variances.v1);
    let (lo, hi) = normal_ci(e.value, e.variances.v1, n, 0.95)?;
    println!("normal 95% interval    [{lo:.5}, {hi:.5}]");
    let stat = EntropicStat { config: SinkhornConfig::default(), target: Some(nu) };
    let b = bootstrap(&stat, &x, None, &ResampleConfig::new(400, 0.95, 2))?;
    println!("bootstrap 95% interval [{:.5}, {:.5}]", b.ci.0, b.ci.1);
    Ok(())
}
