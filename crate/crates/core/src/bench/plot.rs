//! Minimal SVG line charts from sweep CSV output.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::report::CSV_HEADER;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Points of `metric` against rate for every series in the summary rows
/// of `csv_text`. Series are labelled `scenario/mode/placement/transport`.
pub fn series_from_csv(csv_text: &str, metric: &str) -> Result<BTreeMap<String, Vec<(f64, f64)>>, String> {
    let col = CSV_HEADER
        .iter()
        .position(|h| *h == metric)
        .filter(|&i| i >= 6)
        .ok_or_else(|| format!("unknown metric column {metric:?}"))?;
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.get(5) != Some("mean") {
            continue;
        }
        let Some(y) = rec.get(col).and_then(|v| v.parse::<f64>().ok()) else {
            continue;
        };
        let x: f64 = rec
            .get(4)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| "bad rate_pps cell".to_string())?;
        let label = (0..4).map(|i| rec.get(i).unwrap_or("")).collect::<Vec<_>>().join("/");
        out.entry(label).or_default().push((x, y));
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(series: &BTreeMap<String, Vec<(f64, f64)>>, y_label: &str) -> String {
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - y / y1 * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), f * y1);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#, sx(xv), H - MARGIN + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3e}</text>"#, MARGIN - 4.0, sy(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rate (packets/s)</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(y_label));
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(j, &(x, y))| format!("{}{:.1} {:.1}", if j == 0 { 'M' } else { 'L' }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, d.join(" "));
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#, MARGIN + 8.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_summary_series() {
        let csv = format!(
            "{}\n\
scenario1_ids,ids,vm,udp,200,mean,2,,,,,,1,,,,,\n\
scenario1_ids,ids,vm,udp,100,mean,1,,,,,,1,,,,,\n\
scenario1_ids,ids,vm,udp,100,0,9,,,,,,1,,,,,\n\
scenario2_ips,ips,vm,udp,100,mean,3,,,,,,1,,,,,\n",
            CSV_HEADER.join(",")
        );
        let s = series_from_csv(&csv, "throughput_bps").unwrap();
        assert_eq!(s["scenario1_ids/ids/vm/udp"], vec![(100.0, 1.0), (200.0, 2.0)]);
        assert_eq!(s.len(), 2);
        assert!(series_from_csv(&csv, "rate_pps").is_err());
        let svg = render_svg(&s, "throughput_bps");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"2\"").count(), 2);
    }
}
