//! Shared dimension of curve pairs, the orthogonal splitting of their spans
//! and the honest-deformation interval of a polar pair.
use sbrana::curves::{honest_interval, orthogonal_split, shared_dimension, CurvePair, IntervalOptions};
use sbrana::gallery;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["curves_disjoint", "curves_exponential", "curves_rotation", "curves_shared_axis", "polar_pair"] {
        let pair = CurvePair::from_section(gallery::load(name)?.curves.as_ref().unwrap())?;
        let sd = shared_dimension(&pair, 64, 1e-8)?;
        print!("{name:20} I = {}", sd.dimension);
        match orthogonal_split(&pair, 64, 1e-8) {
            Ok(s) => print!("  dim V1 = {}, dim V2 = {}, l = {}", s.v1.len(), s.v2.len(), s.l),
            Err(e) => print!("  split: {e}"),
        }
        println!();
    }
    let polar = CurvePair::from_section(gallery::load("polar_pair")?.curves.as_ref().unwrap())?;
    let h = honest_interval(&polar, &IntervalOptions::default())?;
    println!("polar pair: honest interval ({}, {}), window interval {:?}", h.lower, h.upper, h.window);
    let flat = CurvePair::from_section(gallery::load("lorentz_plane_pair")?.curves.as_ref().unwrap())?;
    println!("lorentz plane pair: {}", honest_interval(&flat, &IntervalOptions::default()).unwrap_err());
    Ok(())
}
