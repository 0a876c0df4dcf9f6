//! Shared fixtures for the geometry benchmarks.

use deformlab_core::{ChartPoint, MetricModel};

/// Catalog models with a base point well inside each chart.
pub fn fixtures() -> Vec<(MetricModel, ChartPoint)> {
    [
        (MetricModel::flat(2).expect("flat2"), vec![0.3, -0.2]),
        (MetricModel::polar_flat(), vec![2.0, 0.4]),
        (MetricModel::sphere2(1.0).expect("sphere2"), vec![1.2, 0.3]),
        (MetricModel::halfplane(), vec![0.1, 1.0]),
    ]
    .into_iter()
    .map(|(m, x)| {
        let p = m.point(x).expect("inside the chart");
        (m, p)
    })
    .collect()
}

/// An offset of `x` a fifth of the way to the edge of its locality ball.
pub fn nearby(model: &MetricModel, x: &ChartPoint) -> ChartPoint {
    let r = model.locality_radius(x).min(1.0);
    let step = 0.2 * r / std::f64::consts::SQRT_2;
    x.offset(&[step, step])
}
