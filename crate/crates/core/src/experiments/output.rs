//! CSV trajectories and static SVG line plots.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::ExperimentError;

pub const CSV_HEADER: [&str; 9] = ["k", "t", "x", "theta", "u", "lambda", "H", "res_stat", "res_con"];

/// One node of an exported trajectory; `None` is written as an empty field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CsvRow {
    pub k: usize,
    pub t: f64,
    pub x: f64,
    pub theta: f64,
    pub u: Option<f64>,
    pub lambda: Option<f64>,
    pub hamiltonian: Option<f64>,
    pub res_stat: Option<f64>,
    pub res_con: Option<f64>,
}

/// 17 significant digits, so parsing gives back the same `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            num(r.t),
            num(r.x),
            num(r.theta),
            opt(r.u),
            opt(r.lambda),
            opt(r.hamiltonian),
            opt(r.res_stat),
            opt(r.res_con),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ExperimentError::Config(format!("unexpected CSV header {header:?}")));
    }
    let field = |s: &str| -> Result<Option<f64>, ExperimentError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|e| ExperimentError::Config(format!("bad number {s:?}: {e}")))
    };
    let need = |s: &str| -> Result<f64, ExperimentError> {
        field(s)?.ok_or_else(|| ExperimentError::Config("missing required CSV field".into()))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(CsvRow {
            k: rec[0]
                .parse()
                .map_err(|e| ExperimentError::Config(format!("bad index {:?}: {e}", &rec[0])))?,
            t: need(&rec[1])?,
            x: need(&rec[2])?,
            theta: need(&rec[3])?,
            u: field(&rec[4])?,
            lambda: field(&rec[5])?,
            hamiltonian: field(&rec[6])?,
            res_stat: field(&rec[7])?,
            res_con: field(&rec[8])?,
        });
    }
    Ok(rows)
}

/// A plain polyline plot of `(x, y)` data with its ranges printed on the axes.
/// Output depends only on the input.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 56.0;
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            (lo - 0.5 * lo.abs().max(1e-12), hi + 0.5 * hi.abs().max(1e-12))
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&mut finite.iter().map(|p| p.0));
    let (y0, y1) = range(&mut finite.iter().map(|p| p.1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} L{PAD},{b} L{r},{b}" fill="none" stroke="black" stroke-width="1"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#, escape(text));
    };
    label(&mut s, PAD, H - PAD + 16.0, "start", &format!("{x0:.4e}"));
    label(&mut s, W - PAD, H - PAD + 16.0, "end", &format!("{x1:.4e}"));
    label(&mut s, PAD - 4.0, H - PAD, "end", &format!("{y0:.4e}"));
    label(&mut s, PAD - 4.0, PAD + 4.0, "end", &format!("{y1:.4e}"));
    label(&mut s, W / 2.0, H - 14.0, "middle", x_label);
    label(&mut s, 14.0, H / 2.0, "middle", y_label);
    if !finite.is_empty() {
        let mut path = String::new();
        for (i, (x, y)) in finite.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(s, r##"<path d="{path}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
