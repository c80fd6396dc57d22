//! SVG figures: rate-distortion curves and stacked latency bars.

use std::path::Path;

use plotters::prelude::*;
use s2cformer::evaluation::bdrate::Quality;
use s2cformer::evaluation::{LatencyProfile, RdCurve};

use crate::error::{CliError, CliResult};

fn draw_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad)..(hi + pad)
}

pub fn rd_curves(path: &Path, curves: &[RdCurve], quality: Quality) -> CliResult<()> {
    let err = draw_err(path);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p.bpp);
        x1 = x1.max(p.bpp);
        y0 = y0.min(p.quality);
        y1 = y1.max(p.quality);
    }
    if curves.is_empty() || x0 > x1 {
        return Err(CliError::Data("nothing to plot".into()));
    }
    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let y_desc = match quality {
        Quality::Psnr => "PSNR (dB)",
        Quality::Msssim => "MS-SSIM",
    };
    let mut chart = ChartBuilder::on(&root)
        .caption("Rate-distortion", ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d(padded(x0, x1), padded(y0, y1))
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("bits per pixel")
        .y_desc(y_desc)
        .draw()
        .map_err(&err)?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let xy: Vec<(f64, f64)> = c.points.iter().map(|p| (p.bpp, p.quality)).collect();
        chart
            .draw_series(LineSeries::new(xy.clone(), color.stroke_width(2)))
            .map_err(&err)?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(xy.into_iter().map(|p| Circle::new(p, 4, color.filled())))
            .map_err(&err)?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

/// One bar per variant: spatial, channel and other time of the main block stacks.
pub fn latency_bars(path: &Path, profiles: &[LatencyProfile]) -> CliResult<()> {
    let err = draw_err(path);
    if profiles.is_empty() {
        return Err(CliError::Data("nothing to plot".into()));
    }
    let top = profiles.iter().map(|p| p.main_blocks.sum()).fold(0.0, f64::max) * 1.1;
    let names: Vec<String> = profiles.iter().map(|p| p.variant.clone()).collect();
    let n = profiles.len() as f64;
    let root = SVGBackend::new(path, (160 + 120 * profiles.len() as u32, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Block time by sub-module", ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d(-0.5..n - 0.5, 0.0..top.max(1e-6))
        .map_err(&err)?;
    let label = |x: &f64| {
        let i = x.round();
        if (x - i).abs() < 1e-6 && i >= 0.0 {
            names.get(i as usize).cloned().unwrap_or_default()
        } else {
            String::new()
        }
    };
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(profiles.len() * 2 + 1)
        .x_label_formatter(&label)
        .y_desc("median time (ms)")
        .draw()
        .map_err(&err)?;
    let buckets: [(&str, RGBColor); 3] = [("spatial interaction", RED), ("channel aggregation", BLUE), ("other", RGBColor(150, 150, 150))];
    for (b, (name, color)) in buckets.iter().enumerate() {
        let rects = profiles.iter().enumerate().map(|(i, p)| {
            let t = p.main_blocks;
            let parts = [t.spatial_ms, t.channel_ms, t.other_ms];
            let base: f64 = parts[..b].iter().sum();
            let x = i as f64;
            Rectangle::new([(x - 0.3, base), (x + 0.3, base + parts[b])], color.filled())
        });
        let color = *color;
        chart
            .draw_series(rects)
            .map_err(&err)?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 14, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}
