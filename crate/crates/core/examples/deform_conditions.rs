//! Build a deformation package from a parallel section and verify the
//! compatibility conditions, including the redundant Ricci equation.
use num_complex::Complex64 as C64;
use sbrana::deform::{build_normal_data, verify_conditions, DeformationPackage};
use sbrana::gallery;
use sbrana::gauss::GaussData;
use sbrana::sbrana::TransportOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chart = gallery::chart("translation_p1");
    let grid = chart.grid.with_resolution(5);
    let phi = [C64::new(1.5, 0.0), C64::new(-2.5, 0.0)];
    let pkg = DeformationPackage::build(&chart, &grid, &grid.base, &phi, &TransportOptions::default())?;
    let gd = GaussData::new(chart)?;
    let rep = verify_conditions(&gd, &pkg)?;
    println!("index mu = {}", pkg.mu);
    println!("{rep:#?}");
    let base = grid.base_index();
    let shape = gd.shape_values(&grid.params(&base), &[-0.5, -0.5])?;
    let nd = build_normal_data(&pkg, &base, &shape)?;
    println!("normal metric eigenvalues {:?} ({}+, {}-)", nd.metric, nd.n_plus, nd.n_minus);
    Ok(())
}
