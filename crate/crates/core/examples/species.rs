//! Trivial-holonomy kernel of the Sbrana bundle and the species of each chart.
use sbrana::gallery;
use sbrana::sbrana::{trivial_holonomy, HolonomyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["flat_torus_p1", "flat_torus_p3", "translation_p2", "second_species_p1", "full_rank_p1"] {
        let chart = gallery::chart(name);
        let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default())?;
        println!(
            "{name:18} p={} kernel dim {} species {} generic {} annihilation {:.1e}",
            h.p,
            h.kernel.len(),
            h.species,
            h.generic,
            h.stack_annihilation
        );
        if let Some(w) = &h.witness {
            let w: Vec<String> = w.iter().map(|z| format!("{:.4}", z.re)).collect();
            println!("{:18} witness [{}]", "", w.join(", "));
        }
    }
    Ok(())
}
