//! Average-sliced `W_2^2` with its plug-in variance and a normal interval,
//! compared with a bootstrap interval.

use rot_infer::inference::{bootstrap, normal_ci, AvgSliced, Population, ResampleConfig, UniformBox};
use rot_infer::measures::{sample_sphere, SeedPolicy};
use rot_infer::sliced::{avg_sliced_wp, sliced_wp_with_variance};

fn main() -> rot_infer::Result<()> {
    let n = 1000;
    let mut rng = SeedPolicy::new(1).rng(0);
    let x = UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }.sample(n, &mut rng);
    let y = UniformBox { lo: vec![1.0, 0.0], hi: vec![2.0, 1.0] }.sample(n, &mut rng);
    let dirs = sample_sphere(2, 200, &SeedPolicy::new(2))?;

    let est = avg_sliced_wp(&x, &y, 2.0, &dirs)?;
    let (_, var) = sliced_wp_with_variance(&x, &y, 2.0, &dirs)?;
    println!("sliced W2^2 = {:.5} over {} directions", est.value, est.k);
    println!("plug-in variance v2 = {:.5}, w2 = {:.5}", var.v2, var.w2.unwrap_or(0.0));

    let (lo, hi) = normal_ci(est.value, var.total(), n, 0.95)?;
    println!("normal 95% interval    [{lo:.5}, {hi:.5}]");
    let b = bootstrap(&AvgSliced::new(2.0, dirs), &x, Some(&y), &ResampleConfig::new(200, 0.95, 3))?;
    println!("bootstrap 95% interval [{:.5}, {:.5}]", b.ci.0, b.ci.1);
    println!("variance of √n(T* − T) {:.5} vs v2 + w2 {:.5}", b.variance, var.total());
    Ok(())
}
