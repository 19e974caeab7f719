//! Control experiment: a nearly degenerate parameter must reproduce the
//! original hypersurface up to congruence.
use sbrana::deform::{zero_deformation_control, ImmersionOptions};
use sbrana::gallery;
use sbrana::gauss::GaussData;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gd = GaussData::new(gallery::chart("translation_p1"))?;
    let grid = gd.chart().grid.with_resolution(6);
    let opts = ImmersionOptions {
        w0: Some(vec![-0.5, -0.5]),
        ..ImmersionOptions::default()
    };
    let rep = zero_deformation_control(&gd, &grid, &opts)?;
    println!("phi = {:?}, mu = {}", rep.phi, rep.mu);
    println!("Procrustes residual against the original: {:.2e}", rep.procrustes);
    Ok(())
}
