//! Minimal tour: exact pattern density of a block measure, then a tilted
//! fixed-point solve. Mirrors the example in the workspace README.

use permlab::patterns::t_sigma_measure_exact;
use permlab::variational::{solve_el, SolveConfig};
use permlab::{mu_ell, Pattern};

fn main() -> Result<(), permlab::Error> {
    let mu = mu_ell(0.5)?;
    let inv = Pattern::parse("21")?;
    assert!((t_sigma_measure_exact(&inv, &mu)? - 0.375).abs() < 1e-12);

    let cfg = SolveConfig { grid_m: 32, ..SolveConfig::default() };
    let (_field, report) = solve_el(&inv, &mu, 1.0, &cfg)?;
    println!("t_sigma at tilt 1: {}", report.t_sigma);
    assert!(report.converged && report.t_sigma > 0.375);
    Ok(())
}
