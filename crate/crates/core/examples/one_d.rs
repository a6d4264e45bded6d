//! Exact 1D transport: three formulas for `W_p^p` and the dual potentials.

use rot_infer::measures::Discrete1D;
use rot_infer::ot1d::{c_transform, dual_potentials_1d, w1_cdf, wp_order_stats, wp_quantile};

fn main() -> rot_infer::Result<()> {
    let x = vec![-0.3, 0.1, 0.4, 1.7, 2.0];
    let y = vec![0.0, 0.5, 0.9, 1.1, 3.2];
    let mu = Discrete1D::uniform(x.clone())?;
    let nu = Discrete1D::uniform(y.clone())?;

    for p in [1.0, 2.0, 3.0] {
        println!(
            "p = {p}: quantile {:.6}  order statistics {:.6}",
            wp_quantile(&mu, &nu, p)?,
            wp_order_stats(&x, &y, p)?
        );
    }
    println!("W1 via CDFs: {:.6}", w1_cdf(&mu, &nu));

    // weighted atoms of different sizes go through the quantile formula
    let nu3 = Discrete1D::new(vec![0.0, 1.0, 2.5], vec![0.2, 0.5, 0.3])?;
    println!("W2^2 to a 3-atom measure: {:.6}", wp_quantile(&mu, &nu3, 2.0)?);

    let d = dual_potentials_1d(&x, &y, 2.0)?;
    println!("phi = {:?}", d.phi);
    println!("psi = {:?}", d.psi);
    println!(
        "dual objective {:.6} = W2^2 {:.6}; max constraint violation {:.1e}",
        d.dual_objective(),
        d.value,
        d.max_violation(&x, &y)
    );
    let psi_c = y
        .iter()
        .map(|&t| c_transform(&d.phi, &mu, t, 2.0))
        .collect::<rot_infer::Result<Vec<_>>>()?;
    println!("c-transform of phi at y: {psi_c:?}");
    Ok(())
}
