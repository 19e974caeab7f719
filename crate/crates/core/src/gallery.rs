//! Built-in charts and curve pairs, addressable as `gallery:<name>`.

use crate::chart::{parse_chart_file, ChartError, ChartFile, ConjugateChart};

pub const ENTRIES: &[(&str, &str)] = &[
    ("flat_torus_p1", include_str!("../charts/flat_torus_p1.chart")),
    ("flat_torus_p2", include_str!("../charts/flat_torus_p2.chart")),
    ("flat_torus_p3", include_str!("../charts/flat_torus_p3.chart")),
    ("translation_p1", include_str!("../charts/translation_p1.chart")),
    ("translation_p2", include_str!("../charts/translation_p2.chart")),
    ("complex_translation_p1", include_str!("../charts/complex_translation_p1.chart")),
    ("second_species_p1", include_str!("../charts/second_species_p1.chart")),
    ("full_rank_p1", include_str!("../charts/full_rank_p1.chart")),
    ("cylinder", include_str!("../charts/cylinder.chart")),
    ("curves_rotation", include_str!("../charts/curves_rotation.chart")),
    ("curves_exponential", include_str!("../charts/curves_exponential.chart")),
    ("curves_disjoint", include_str!("../charts/curves_disjoint.chart")),
    ("curves_shared_axis", include_str!("../charts/curves_shared_axis.chart")),
    ("polar_pair", include_str!("../charts/polar_pair.chart")),
    ("lorentz_plane_pair", include_str!("../charts/lorentz_plane_pair.chart")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ChartFile, ChartError> {
    let text = source(name).ok_or_else(|| ChartError::Io(format!("no gallery entry `{name}`")))?;
    parse_chart_file(text)
}

/// Loads a gallery chart; panics on unknown names or entries without a chart.
pub fn chart(name: &str) -> ConjugateChart {
    load(name)
        .unwrap_or_else(|e| panic!("gallery entry {name}: {e}"))
        .chart
        .unwrap_or_else(|| panic!("gallery entry {name} has no chart"))
}

/// Reads `gallery:<name>` or a file path.
pub fn open(spec: &str) -> Result<ChartFile, ChartError> {
    if let Some(name) = spec.strip_prefix("gallery:") {
        return load(name);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| ChartError::Io(format!("{spec}: {e}")))?;
    parse_chart_file(&text)
}
