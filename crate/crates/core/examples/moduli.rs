//! Moduli of admissible deformation parameters: slice dimension, indices
//! and the sign buckets of the index-zero part.
use sbrana::gallery;
use sbrana::moduli::{index_of, moduli_space, quotient_signature, ModuliOptions};
use sbrana::sbrana::{trivial_holonomy, HolonomyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["flat_torus_p1", "flat_torus_p2", "second_species_p1"] {
        let chart = gallery::chart(name);
        let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default())?;
        let m = moduli_space(&chart, &h, &ModuliOptions::default())?;
        println!("{name}: dimension {}, U_0 buckets {}", m.dimension, m.u0_components);
        for b in &m.buckets {
            let rep = &b.representatives[0];
            let sig = quotient_signature(&rep.phi, chart.conj(), 1e-9)?;
            println!(
                "  {} mu={} count={:5}  index {} = negative directions {}",
                b.signs,
                b.mu,
                b.count,
                index_of(&rep.phi, chart.conj(), 1e-9)?,
                sig.n_minus
            );
        }
    }
    Ok(())
}
