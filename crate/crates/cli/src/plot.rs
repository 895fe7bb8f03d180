//! SVG plots rendered from the run artifacts.

use std::fmt::Display;
use std::path::Path;

use plotters::prelude::*;
use terra_core::bicycle::VehicleParams;
use terra_core::eval::surrogate_axle_forces;
use terra_core::mlp::Mlp;
use terra_core::sim::TrajectoryLog;
use terra_core::terramech::TerrainParams;
use terra_core::ukf::EstimateRecord;
use terra_core::{Result, TerraError};

const SIZE: (u32, u32) = (900, 540);

fn perr(e: impl Display) -> TerraError {
    TerraError::Serialization(format!("plot: {e}"))
}

/// Padded [min, max] range of an iterator of finite values.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let pad = 0.05 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

/// Sinkage-exponent estimate over time with a ±2σ band and the truth.
pub fn n_trace(path: &Path, estimates: &[EstimateRecord], n_true: f64) -> Result<()> {
    if estimates.is_empty() {
        return Err(TerraError::InvalidInput("no estimates to plot".into()));
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let t_max = estimates.last().map(|r| r.t).unwrap_or(1.0);
    let (y_lo, y_hi) = padded_range(
        estimates
            .iter()
            .flat_map(|r| [r.mean[6] - 2.0 * r.n_std, r.mean[6] + 2.0 * r.n_std])
            .chain([n_true]),
    );

    let mut chart = ChartBuilder::on(&root)
        .caption("Sinkage exponent estimate", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..t_max, y_lo..y_hi)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc("n [-]")
        .draw()
        .map_err(perr)?;

    chart
        .draw_series(AreaSeries::new(
            estimates
                .iter()
                .map(|r| (r.t, r.mean[6] + 2.0 * r.n_std))
                .chain(
                    estimates
                        .iter()
                        .rev()
                        .map(|r| (r.t, r.mean[6] - 2.0 * r.n_std)),
                ),
            y_lo,
            BLUE.mix(0.15),
        ))
        .map_err(perr)?;
    chart
        .draw_series(LineSeries::new(
            estimates.iter().map(|r| (r.t, r.mean[6])),
            BLUE.stroke_width(2),
        ))
        .map_err(perr)?
        .label("estimate")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], BLUE.stroke_width(2)));
    chart
        .draw_series(LineSeries::new(
            [(0.0, n_true), (t_max, n_true)],
            BLACK.stroke_width(1),
        ))
        .map_err(perr)?
        .label("truth")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], BLACK));

    chart
        .configure_series_labels()
        .border_style(BLACK.mix(0.4))
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}

/// Logged reference lateral forces against the surrogate's prediction
/// from the same states.
pub fn force_overlay(
    path: &Path,
    log: &TrajectoryLog,
    model: &Mlp,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
) -> Result<()> {
    let mut surrogate = Vec::with_capacity(log.records.len());
    for record in &log.records {
        let (fy_f, fy_r) = surrogate_axle_forces(record, model, vehicle, terrain)?;
        surrogate.push((record.t, fy_f, fy_r));
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let t_max = log.records.last().map(|r| r.t).unwrap_or(1.0);
    let (y_lo, y_hi) = padded_range(
        log.records
            .iter()
            .flat_map(|r| [r.fy_front, r.fy_rear])
            .chain(surrogate.iter().flat_map(|&(_, f, r)| [f, r])),
    );

    let mut chart = ChartBuilder::on(&root)
        .caption("Axle lateral force: reference vs surrogate", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..t_max, y_lo..y_hi)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc("axle lateral force [N]")
        .draw()
        .map_err(perr)?;

    let series: [(&str, RGBColor, Box<dyn Fn(usize) -> f64>); 4] = [
        (
            "front reference",
            RED,
            Box::new(|i| log.records[i].fy_front),
        ),
        ("front surrogate", BLUE, Box::new(|i| surrogate[i].1)),
        (
            "rear reference",
            MAGENTA,
            Box::new(|i| log.records[i].fy_rear),
        ),
        ("rear surrogate", CYAN, Box::new(|i| surrogate[i].2)),
    ];
    for (name, color, get) in series {
        chart
            .draw_series(LineSeries::new(
                (0..log.records.len()).map(|i| (log.records[i].t, get(i))),
                color.stroke_width(1),
            ))
            .map_err(perr)?
            .label(name)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color.stroke_width(2)));
    }

    chart
        .configure_series_labels()
        .border_style(BLACK.mix(0.4))
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}

/// Ground-plane path of the plant against the filtered position.
pub fn trajectory_overlay(
    path: &Path,
    log: &TrajectoryLog,
    estimates: &[EstimateRecord],
) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(perr)?;
    let (x_lo, x_hi) = padded_range(
        log.records
            .iter()
            .map(|r| r.state.body.x)
            .chain(estimates.iter().map(|r| r.mean[0])),
    );
    let (y_lo, y_hi) = padded_range(
        log.records
            .iter()
            .map(|r| r.state.body.y)
            .chain(estimates.iter().map(|r| r.mean[1])),
    );

    let mut chart = ChartBuilder::on(&root)
        .caption("Ground-plane trajectory", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(perr)?;
    chart
        .configure_mesh()
        .x_desc("x [m]")
        .y_desc("y [m]")
        .draw()
        .map_err(perr)?;

    chart
        .draw_series(LineSeries::new(
            log.records.iter().map(|r| (r.state.body.x, r.state.body.y)),
            BLACK.stroke_width(2),
        ))
        .map_err(perr)?
        .label("plant")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], BLACK.stroke_width(2)));
    chart
        .draw_series(LineSeries::new(
            estimates.iter().map(|r| (r.mean[0], r.mean[1])),
            BLUE.stroke_width(1),
        ))
        .map_err(perr)?
        .label("filter")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], BLUE.stroke_width(2)));

    chart
        .configure_series_labels()
        .border_style(BLACK.mix(0.4))
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(perr)?;
    root.present().map_err(perr)?;
    Ok(())
}
