//! Integrate the genuine deformations of the flat torus for two parameters
//! and write the sampled immersions as CSV.
use num_complex::Complex64 as C64;
use sbrana::deform::{integrate_immersion, DeformationPackage, ImmersionOptions};
use sbrana::gallery;
use sbrana::gauss::GaussData;
use sbrana::sbrana::TransportOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chart = gallery::chart("flat_torus_p1");
    let grid = chart.grid.with_resolution(16);
    let gd = GaussData::new(chart.clone())?;
    for phi in [[1.0, -2.0], [-0.5, -0.5]] {
        let phic: Vec<C64> = phi.iter().map(|&x| C64::new(x, 0.0)).collect();
        let pkg = DeformationPackage::build(&chart, &grid, &grid.base, &phic, &TransportOptions::default())?;
        let imm = integrate_immersion(&gd, &pkg, &ImmersionOptions::default())?;
        let r = &imm.residuals;
        println!(
            "phi = {phi:?}: R^{} signature {} (mu {}), pullback {:.1e}, sweep {:.1e}",
            imm.ambient_dim, imm.signature, imm.mu, r.pullback, r.sweep
        );
        let path = std::env::temp_dir().join(format!("torus_{}_{}.csv", phi[0], phi[1]));
        std::fs::write(&path, imm.csv(&[vec![0.0], vec![0.3]]))?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
