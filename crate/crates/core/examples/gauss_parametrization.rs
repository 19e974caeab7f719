//! Gauss parametrization of a rank p+1 hypersurface from a spherical
//! immersion and its support function; rank and support checks.
use sbrana::gallery;
use sbrana::gauss::{GaussData, RankOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gd = GaussData::new(gallery::chart("translation_p1"))?;
    let grid = gd.chart().grid.with_resolution(4);
    let fibers = vec![vec![-0.5, -0.5], vec![-0.4, -0.6]];
    let rep = gd.hypersurface_rank_check(&grid, &fibers, &RankOptions::default())?;
    println!(
        "translation_p1: ambient R^{}, expected rank {}, rank drops {}, support {:.1e}, shape vs P {:.1e}",
        rep.n + 1,
        rep.expected_rank,
        rep.rank_drops,
        rep.max_support,
        rep.max_shape_vs_p
    );
    let t = gd.chart().grid.base.clone();
    println!("shape values at the base, w = (-0.5, -0.5): {:?}", gd.shape_values(&t, &[-0.5, -0.5])?);
    let csv = gd.sample_cloud_csv(&grid, &fibers)?;
    println!("sample cloud: {} rows, header {}", csv.lines().count() - 1, csv.lines().next().unwrap());
    Ok(())
}
