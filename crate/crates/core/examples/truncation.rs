//! Conditioning a 1D measure on a ball and the resulting transport bound.

use rot_infer::measures::Discrete1D;
use rot_infer::ot1d::wp_quantile;
use rot_infer::smooth::{truncate, truncation_bound, Ball1D};

fn main() -> rot_infer::Result<()> {
    let mu = Discrete1D::new(vec![-2.0, -0.5, 0.0, 0.7, 1.5, 3.0], vec![0.05, 0.2, 0.3, 0.25, 0.15, 0.05])?;
    let (lo, hi) = mu.support();
    for radius in [0.5, 1.0, 2.0, 5.0] {
        let ball = Ball1D { center: 0.0, radius };
        let (cond, mass) = truncate(&mu, ball)?;
        let exact = wp_quantile(&cond, &mu, 2.0)?;
        let bound = truncation_bound(2.0, mass, hi - lo)?;
        println!("radius {radius}: mass {mass:.2}, W2^2 = {exact:.4} <= bound {bound:.4}");
    }
    Ok(())
}
