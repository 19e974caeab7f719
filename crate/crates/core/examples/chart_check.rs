//! Load gallery charts and check integrability, immersion consistency and
//! the p = 1 intersection-type Laplace invariant.
use sbrana::gallery;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["flat_torus_p2", "translation_p2", "complex_translation_p1", "second_species_p1"] {
        let chart = gallery::chart(name);
        chart.check_conjugation(1e-9)?;
        let integ = chart.integrability_on_grid()?;
        print!("{name:24} p={} integrability {:.2e}", chart.p(), integ.max);
        if integ.vacuous {
            print!(" (vacuous)");
        }
        if chart.immersion().is_some() {
            let g = chart.geometric_consistency(&chart.sample_points())?;
            print!("  immersion {:.2e}", g.max());
        }
        if chart.p() == 1 {
            print!("  intersection-type {:.2e}", chart.intersection_type_on_grid()?);
        }
        println!();
    }
    Ok(())
}
