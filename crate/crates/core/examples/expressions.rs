//! Parse an expression and read exact derivatives off its truncated Taylor jet.
use num_complex::Complex64 as C64;
use sbrana::exprlang::{parse, JetSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = parse("exp(u0*u1)*sin(u1) - u0^3/3")?;
    println!("expression: {e}");
    let x = [C64::new(0.3, 0.0), C64::new(0.7, 0.0)];
    let j = e.jet(&JetSpace::shared(2, 3), &x)?;
    println!("value      {:.12}", j.value().re);
    println!("d/du0      {:.12}", j.d1(0).re);
    println!("d/du1      {:.12}", j.d1(1).re);
    println!("d2/du0du1  {:.12}", j.d2(0, 1).re);
    println!("d3/du0du1^2 {:.12}", j.partial(&[1, 2]).re);
    Ok(())
}
