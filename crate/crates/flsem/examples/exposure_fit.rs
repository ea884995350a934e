//! Sparse function-on-scalar exposure fitting with group support detection
//! and root finding.
//!
//! ```sh
//! cargo run --example exposure_fit
//! ```

use flsem::datagen::{generate, SimConfig};
use flsem::exposure::{fgsdar_fit_with_ctx, fixed_point_check, GramContext, LambdaChoice};
use flsem::metrics::mse_b;
use flsem::numerics::KernelSpec;

fn main() {
    let cfg = SimConfig::example1(200, 20, 0.3, 0.5, 7);
    let ds = generate(&cfg).unwrap();
    let truth = ds.truth.as_ref().unwrap();

    let kernel = KernelSpec::OrnsteinUhlenbeck;
    let ctx = GramContext::new(&kernel, &ds.grid).unwrap();

    let fit = fgsdar_fit_with_ctx(
        &ds.x,
        &ds.z,
        &ds.grid,
        &kernel,
        &ctx,
        5,
        &LambdaChoice::Gcv,
        50,
    )
    .unwrap();

    println!("active set: {:?} (truth: {:?})", fit.active_set, truth.exposure_support());
    println!(
        "lambda_K = {:.2e} (GCV)  iterations = {}  converged = {}",
        fit.lambda_k, fit.iterations, fit.converged
    );
    println!("objective value = {:.6}", fit.loss);

    let values = fit.coef_on_grid(&ctx);
    for l in 0..5 {
        let est: Vec<f64> = values.row(l).iter().copied().collect();
        let err = mse_b(&est, &truth.coef_on_grid[l], ds.grid.delta());
        println!("  MSE_C{} = {:.5}", l + 1, err);
    }

    let stable = fixed_point_check(&fit, &ds.x, &ds.z, None).unwrap();
    println!("hard-thresholding fixed point: {stable}");
}
