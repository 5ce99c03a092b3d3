//! Data behind the yearly-turnover line chart and the shares-per-class bar
//! chart, with CSV and minimal SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data_model::{StockRecord, TurnoverBins, TurnoverClass, N_CLASSES};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyMean {
    pub company: String,
    pub year: i32,
    pub mean_turnover: f64,
    pub n_records: usize,
}

/// Mean total turnover per (company, calendar year), ordered by company then year.
pub fn yearly_average_turnover(records: &[StockRecord]) -> Vec<YearlyMean> {
    let mut groups: BTreeMap<(&str, i32), (f64, usize)> = BTreeMap::new();
    for r in records {
        let g = groups
            .entry((r.company.as_str(), r.date.year()))
            .or_default();
        g.0 += r.total_turnover;
        g.1 += 1;
    }
    groups
        .into_iter()
        .map(|((company, year), (sum, n))| YearlyMean {
            company: company.to_string(),
            year,
            mean_turnover: sum / n as f64,
            n_records: n,
        })
        .collect()
}

/// Sum of `no_of_shares` per turnover class; classes without records get 0.
pub fn shares_sum_by_class(
    records: &[StockRecord],
    bins: &TurnoverBins,
) -> Result<[f64; N_CLASSES]> {
    let mut sums = [0.0; N_CLASSES];
    for r in records {
        sums[bins.discretize(r.total_turnover)?.index()] += r.no_of_shares;
    }
    Ok(sums)
}

pub fn write_figure3_csv<W: Write>(series: &[YearlyMean], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["company", "year", "mean_turnover"])?;
    for s in series {
        out.write_record([
            s.company.clone(),
            s.year.to_string(),
            format!("{:.2}", s.mean_turnover),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_figure4_csv<W: Write>(sums: &[f64; N_CLASSES], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "sum_no_of_shares"])?;
    for (k, s) in sums.iter().enumerate() {
        out.write_record([TurnoverClass::ALL[k].symbol().to_string(), format!("{s}")])?;
    }
    out.flush()?;
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN} {MARGIN} V{y} H{x}" stroke="black" fill="none"/>"#,
        y = HEIGHT - MARGIN,
        x = WIDTH - MARGIN
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One polyline per company over years.
pub fn figure3_svg(series: &[YearlyMean]) -> String {
    let mut s = svg_open("Average turnover per year");
    if series.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let y0 = series.iter().map(|p| p.year).min().unwrap_or(0);
    let y1 = series.iter().map(|p| p.year).max().unwrap_or(0).max(y0 + 1);
    let top = series
        .iter()
        .map(|p| p.mean_turnover)
        .fold(0.0, f64::max)
        .max(1.0);
    let px = |year: i32| MARGIN + (year - y0) as f64 / (y1 - y0) as f64 * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - v / top * (HEIGHT - 2.0 * MARGIN);

    let mut companies: Vec<&str> = series.iter().map(|p| p.company.as_str()).collect();
    companies.dedup();
    for (i, company) in companies.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = series
            .iter()
            .filter(|p| p.company == *company)
            .map(|p| format!("{:.1},{:.1}", px(p.year), py(p.mean_turnover)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            escape(company)
        );
    }
    for year in y0..=y1 {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{year}</text>"#,
            px(year),
            HEIGHT - MARGIN + 15.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One bar per turnover class.
pub fn figure4_svg(sums: &[f64; N_CLASSES]) -> String {
    let mut s = svg_open("Number of shares per turnover class");
    let top = sums.iter().copied().fold(0.0, f64::max).max(1.0);
    let slot = (WIDTH - 2.0 * MARGIN) / N_CLASSES as f64;
    for (k, &v) in sums.iter().enumerate() {
        let h = v / top * (HEIGHT - 2.0 * MARGIN);
        let x = MARGIN + slot * k as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            HEIGHT - MARGIN - h,
            slot * 0.7,
            PALETTE[0]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            x + slot * 0.35,
            HEIGHT - MARGIN + 15.0,
            TurnoverClass::ALL[k].symbol()
        );
    }
    s.push_str("</svg>\n");
    s
}
