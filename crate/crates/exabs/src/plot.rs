//! Static per-system ROUGE f1 comparison chart.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::harness::{EvaluationReport, EXTRACTIVE, ORACLE};

const METRICS: [(&str, RGBColor); 3] = [("R-1", RGBColor(66, 110, 180)), ("R-2", RGBColor(230, 140, 50)), ("R-L", RGBColor(90, 160, 90))];

fn systems(report: &EvaluationReport) -> Vec<(String, [f64; 3])> {
    let f = |s: &exabs_core::rouge::RougeTriple| [s.r1.f1, s.r2.f1, s.rl.f1];
    let mut out = vec![(ORACLE.to_owned(), f(&report.oracle.scores)), (EXTRACTIVE.to_owned(), f(&report.extractive.scores))];
    out.extend(report.variants.iter().map(|v| (v.variant.name().to_owned(), f(&v.scores))));
    out
}

pub fn comparison_svg(path: &Path, report: &EvaluationReport) -> Result<()> {
    let rows = systems(report);
    let width = 160 + 150 * rows.len() as u32;
    let root = SVGBackend::new(path, (width, 420)).into_drawing_area();
    let err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let n = rows.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("ROUGE f1 by system", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..n, 0.0..1.0)
        .map_err(|e| err(&e))?;
    let labels: Vec<String> = rows.iter().map(|(s, _)| s.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(rows.len() * 2 + 1)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - i as f64 - 0.5).abs() < 1e-9 {
                labels.get(i).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("f1")
        .draw()
        .map_err(|e| err(&e))?;
    for (m, (name, color)) in METRICS.iter().enumerate() {
        let bars = rows.iter().enumerate().map(|(i, (_, v))| {
            let x0 = i as f64 + 0.15 + 0.23 * m as f64;
            Rectangle::new([(x0, 0.0), (x0 + 0.2, v[m])], color.filled())
        });
        chart
            .draw_series(bars)
            .map_err(|e| err(&e))?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}
