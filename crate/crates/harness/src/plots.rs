//! Minimal SVG line plots with CSV backing for every pane.

use crate::episode::EpisodeResult;
use anyhow::Result;
use std::io::Write;
use std::path::Path;

const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One labelled series of (x, y) samples.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Renders labelled polylines with axes and a legend into an SVG file.
pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let (w, h) = (860.0f64, 480.0f64);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for (x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(*x);
                ys.push(*y);
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = move |x: f64| ml + (x - x0) / (x1 - x0).max(1e-12) * pw;
    let sy = move |y: f64| mt + ph - (y - y0) / (y1 - y0).max(1e-12) * ph;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
            sx(xv),
            mt + ph + 18.0,
            xv
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        ml + pw / 2.0,
        h - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            ml + pw - 150.0,
            mt + 16.0 + 16.0 * i as f64,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in v {
        lo = lo.min(*x);
        hi = hi.max(*x);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn write_series_csv(path: &Path, header: &str, series: &[Series]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    let n = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    for i in 0..n {
        let mut row = String::new();
        for (k, s) in series.iter().enumerate() {
            if let Some((x, y)) = s.points.get(i) {
                if k == 0 {
                    row.push_str(&format!("{x:.6}"));
                }
                row.push_str(&format!(",{y:.9}"));
            } else {
                row.push(',');
            }
        }
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Unwraps a modulo-2π angle series into a continuous one.
fn unwrap_angles(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for (t, a) in series {
        if let Some(p) = prev {
            let d = a - p;
            if d > std::f64::consts::PI {
                offset -= std::f64::consts::TAU;
            } else if d < -std::f64::consts::PI {
                offset += std::f64::consts::TAU;
            }
        }
        prev = Some(*a);
        out.push((*t, a + offset));
    }
    out
}

/// Emits the standard panes for one episode: rotor angle (wrapped and
/// unwrapped), rotor speed, top-down trajectories, positional error over
/// time, and the solver residual when the controller produced one. Every
/// pane gets an SVG and a backing CSV.
pub fn emit_plots(result: &EpisodeResult, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let records = &result.records;

    let angle: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.theta)).collect();
    let angle_series = [
        Series {
            label: "theta (mod 2pi)",
            points: angle.clone(),
        },
        Series {
            label: "theta (unwrapped)",
            points: unwrap_angles(&angle),
        },
    ];
    line_plot(
        &out_dir.join("rotor_angle.svg"),
        "Rotor angle",
        "t [s]",
        "theta [rad]",
        &angle_series,
    )?;
    write_series_csv(
        &out_dir.join("rotor_angle.csv"),
        "t,theta_wrapped,theta_unwrapped",
        &angle_series,
    )?;

    let speed_series = [Series {
        label: "omega",
        points: records.iter().map(|r| (r.t, r.omega_applied)).collect(),
    }];
    line_plot(
        &out_dir.join("rotor_speed.svg"),
        "Rotor speed",
        "t [s]",
        "omega [rad/s]",
        &speed_series,
    )?;
    write_series_csv(&out_dir.join("rotor_speed.csv"), "t,omega", &speed_series)?;

    let traj_series = [
        Series {
            label: "estimate",
            points: records
                .iter()
                .map(|r| (r.est.translation.x, r.est.translation.y))
                .collect(),
        },
        Series {
            label: "ground truth",
            points: records
                .iter()
                .map(|r| (r.gt.translation.x, r.gt.translation.y))
                .collect(),
        },
    ];
    line_plot(
        &out_dir.join("trajectory_topdown.svg"),
        "Trajectory (top-down)",
        "x [m]",
        "y [m]",
        &traj_series,
    )?;
    write_series_csv(
        &out_dir.join("trajectory_topdown.csv"),
        "est_x,est_y,gt_y_by_row",
        &traj_series,
    )?;

    let err_series = [Series {
        label: "position error",
        points: records
            .iter()
            .map(|r| (r.t, (r.est.translation - r.gt.translation).norm()))
            .collect(),
    }];
    line_plot(
        &out_dir.join("position_error.svg"),
        "Positional error over time",
        "t [s]",
        "error [m]",
        &err_series,
    )?;
    write_series_csv(&out_dir.join("position_error.csv"), "t,error_m", &err_series)?;

    // optional pane: only controllers with an inner solver produce it
    let residuals: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.mpc_residual.map(|v| (r.t, v)))
        .collect();
    if !residuals.is_empty() {
        let res_series = [Series {
            label: "solver residual",
            points: residuals,
        }];
        line_plot(
            &out_dir.join("mpc_residual.svg"),
            "Controller stationarity residual",
            "t [s]",
            "residual",
            &res_series,
        )?;
        write_series_csv(&out_dir.join("mpc_residual.csv"), "t,residual", &res_series)?;
    }
    Ok(())
}
