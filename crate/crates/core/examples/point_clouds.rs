//! Exact `W_p` between two point clouds by optimal assignment.

use rot_infer::measures::{SampleMatrix, SeedPolicy};
use rot_infer::ot_nd::{exact_wp_with_plan, hungarian, CostMatrix};
use rand::Rng;

fn main() -> rot_infer::Result<()> {
    let c = CostMatrix::from_rows(&[[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])?;
    let a = hungarian(&c);
    println!("3×3 assignment {:?} with cost {}", a.perm, a.cost);

    let mut rng = SeedPolicy::new(7).rng(0);
    let n = 200;
    let x = SampleMatrix::new((0..2 * n).map(|_| rng.random::<f64>()).collect(), n, 2)?;
    let y = x.map(|v| v + 0.25);
    let plan = exact_wp_with_plan(&x, &y, 2.0)?;
    println!("W2 between a cloud and its translate by (0.25, 0.25): {:.6}", plan.cost.sqrt());
    println!("identity matching: {}", plan.perm.iter().enumerate().all(|(i, &j)| i == j));
    Ok(())
}
