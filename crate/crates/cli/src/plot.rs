//! Static SVG plots of a run log: trajectory, commanded velocities and the
//! feature error, stacked vertically.

use std::ops::Range;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use hycontrol::harness::LogRecord;
use plotters::prelude::*;

fn span(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    lo - pad..hi + pad
}

fn err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

pub fn render(log: &[LogRecord], out: &Path) -> Result<()> {
    match out.extension().and_then(|e| e.to_str()) {
        Some("svg") => {}
        _ => bail!("only .svg output is supported, got {}", out.display()),
    }
    let root = SVGBackend::new(out, (900, 1200)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let panels = root.split_evenly((3, 1));

    let xs = span(log.iter().flat_map(|r| [r.x_true, r.x]));
    let ys = span(log.iter().flat_map(|r| [r.y_true, r.y]));
    let mut chart = ChartBuilder::on(&panels[0])
        .caption("trajectory (rear axle)", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(xs, ys)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("x (m)")
        .y_desc("y (m)")
        .draw()
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new(log.iter().map(|r| (r.x_true, r.y_true)), &BLUE))
        .map_err(err)?
        .label("true")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(log.iter().map(|r| (r.x, r.y)), &RED))
        .map_err(err)?
        .label("odometry")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(err)?;

    let ts = span(log.iter().map(|r| r.t));
    let vs = span(log.iter().flat_map(|r| [r.nu_cmd, r.omega_cmd]));
    let mut chart = ChartBuilder::on(&panels[1])
        .caption("commanded velocities", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(ts.clone(), vs)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .draw()
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new(log.iter().map(|r| (r.t, r.nu_cmd)), &BLUE))
        .map_err(err)?
        .label("nu (m/s)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(log.iter().map(|r| (r.t, r.omega_cmd)), &GREEN))
        .map_err(err)?
        .label("omega (rad/s)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], GREEN));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(err)?;

    let es = span(log.iter().filter_map(|r| r.max_feature_err).chain([0.0]));
    let mut chart = ChartBuilder::on(&panels[2])
        .caption("max feature error", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(ts, es)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc("px")
        .draw()
        .map_err(err)?;
    chart
        .draw_series(
            log.iter()
                .filter_map(|r| r.max_feature_err.map(|e| Circle::new((r.t, e), 1, BLACK.filled()))),
        )
        .map_err(err)?;

    root.present().map_err(err)?;
    Ok(())
}
