//! CSV tables and SVG line plots for experiment results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::stability_lab::{FuzzRow, QuasiRow, StabilityReport, SweepResult};

pub const SWEEP_HEADER: &str =
    "delta,seed,lhs_h10,rhs_uT_h1,rhs_u0_l2,rhs_p0_l2,ratio,picard_iters_base,picard_iters_pert";
pub const FUZZ_HEADER: &str = "func_id,lambda,mode,margin,min_passing_lambda";
pub const QUASI_HEADER: &str = "pair_id,lambda,c_f,c1_hat,margin";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per `(δ, seed)`; an undefined ratio is an empty field.
pub fn sweep_csv(rows: &[StabilityReport]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.delta,
            r.seed,
            r.lhs,
            r.rhs_u_terminal,
            r.rhs_u_initial,
            r.rhs_p_initial,
            opt(r.ratio),
            r.picard_iters_base,
            r.picard_iters_pert
        );
    }
    out
}

pub fn fuzz_csv(rows: &[FuzzRow]) -> String {
    let mut out = format!("{FUZZ_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.func_id,
            r.lambda,
            r.mode.as_str(),
            r.margin,
            opt(r.min_passing_lambda)
        );
    }
    out
}

pub fn quasi_csv(rows: &[QuasiRow]) -> String {
    let mut out = format!("{QUASI_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.pair_id,
            r.lambda,
            r.c_f,
            opt(r.c1_hat),
            r.margin
        );
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PAD: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x, mut y) = (
            (f64::INFINITY, f64::NEG_INFINITY),
            (f64::INFINITY, f64::NEG_INFINITY),
        );
        for (px, py) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let widen = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 - r.0 <= f64::EPSILON * r.0.abs().max(1.0) {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                r
            }
        };
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn map(&self, px: f64, py: f64) -> (f64, f64) {
        let sx = PAD + (px - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * PAD);
        let sy = HEIGHT - PAD - (py - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * PAD);
        (sx, sy)
    }

    fn open(&self, title: &str, x_label: &str, y_label: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        );
        let _ = writeln!(
            s,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
        );
        let _ = writeln!(
            s,
            "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            WIDTH - 2.0 * PAD,
            HEIGHT - 2.0 * PAD
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"30\" text-anchor=\"middle\">{title}</text>",
            WIDTH / 2.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label} [{:.3}, {:.3}]</text>",
            WIDTH / 2.0,
            HEIGHT - 20.0,
            self.x.0,
            self.x.1
        );
        let _ = writeln!(
            s,
            "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{y_label} [{:.3}, {:.3}]</text>",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            self.y.0,
            self.y.1
        );
        s
    }

    fn polyline(&self, points: &[(f64, f64)], colour: &str, id: &str) -> String {
        let coords: Vec<String> = points
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|&(px, py)| {
                let (sx, sy) = self.map(px, py);
                format!("{sx:.2},{sy:.2}")
            })
            .collect();
        format!(
            "<polyline data-series=\"{id}\" points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\"/>\n",
            coords.join(" ")
        )
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Margin against `log10 λ`, one polyline per function and mode.
pub fn margin_svg(rows: &[FuzzRow]) -> String {
    let mut series: BTreeMap<(usize, &str), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series
            .entry((r.func_id, r.mode.as_str()))
            .or_default()
            .push((r.lambda.log10(), r.margin));
    }
    let frame = Frame::fit(series.values().flatten().copied().chain([(0.0, 0.0)]));
    let mut s = frame.open("relative margin vs lambda", "log10 lambda", "margin");
    let (_, zy) = frame.map(frame.x.0, 0.0);
    let _ = writeln!(
        s,
        "<line x1=\"{PAD}\" y1=\"{zy:.2}\" x2=\"{}\" y2=\"{zy:.2}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        WIDTH - PAD
    );
    for ((id, mode), pts) in &series {
        let colour = if *mode == "corrected" {
            PALETTE[0]
        } else {
            PALETTE[1]
        };
        s.push_str(&frame.polyline(pts, colour, &format!("{mode}-{id}")));
    }
    s.push_str("</svg>\n");
    s
}

/// `log10 lhs` against `log10 Σ rhs`, one polyline per seed plus the
/// fitted line.
pub fn stability_svg(sweep: &SweepResult) -> String {
    let mut series: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &sweep.rows {
        series
            .entry(r.seed)
            .or_default()
            .push((r.rhs_sum().log10(), r.lhs.log10()));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let frame = Frame::fit(series.values().flatten().copied());
    let title = format!("lhs vs rhs, fitted slope {:.4}", sweep.slope);
    let mut s = frame.open(&title, "log10 rhs", "log10 lhs");
    for (i, (seed, pts)) in series.iter().enumerate() {
        s.push_str(&frame.polyline(pts, PALETTE[i % PALETTE.len()], &format!("seed-{seed}")));
    }
    // fit in natural logs: ln y = m ln x + c, so log10 y = m log10 x + c / ln 10
    let line = |x: f64| sweep.slope * x + sweep.intercept / std::f64::consts::LN_10;
    let (x1, y1) = frame.map(frame.x.0, line(frame.x.0));
    let (x2, y2) = frame.map(frame.x.1, line(frame.x.1));
    let _ = writeln!(
        s,
        "<line class=\"fit\" x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"black\" stroke-dasharray=\"6 3\"/>"
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_report(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::BoundaryMode;
    use crate::forward_solver::SolveTrace;

    fn report(delta: f64, seed: u64, ratio: Option<f64>) -> StabilityReport {
        StabilityReport {
            delta,
            seed,
            lhs: 2.0 * delta,
            lhs_u: delta,
            lhs_p: delta,
            rhs_u_terminal: delta,
            rhs_u_initial: 0.5 * delta,
            rhs_p_initial: 0.5 * delta,
            ratio,
            picard_iters_base: 3,
            picard_iters_pert: 4,
            trace_base: SolveTrace::default(),
            trace_pert: SolveTrace::default(),
        }
    }

    #[test]
    fn empty_tables_are_header_only() {
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
        assert_eq!(fuzz_csv(&[]), format!("{FUZZ_HEADER}\n"));
        assert_eq!(quasi_csv(&[]), format!("{QUASI_HEADER}\n"));
    }

    #[test]
    fn sweep_rows_have_nine_columns() {
        let csv = sweep_csv(&[report(0.1, 0, Some(1.0)), report(0.0, 1, None)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 9));
        assert_eq!(lines[1], "0.1,0,0.2,0.1,0.05,0.05,1,3,4");
        assert!(lines[2].contains(",,"));
    }

    #[test]
    fn fuzz_row_format() {
        let row = FuzzRow {
            func_id: 3,
            lambda: 2.5,
            mode: BoundaryMode::LiteralPaper,
            margin: -0.25,
            min_passing_lambda: None,
        };
        assert_eq!(
            fuzz_csv(&[row]).lines().nth(1),
            Some("3,2.5,literal-paper,-0.25,")
        );
    }

    #[test]
    fn stability_plot_has_one_polyline_per_seed() {
        let rows: Vec<_> = [1e-1, 1e-2, 1e-3]
            .iter()
            .flat_map(|&d| (0..3).map(move |s| report(d, s, Some(2.0))))
            .collect();
        let sweep = SweepResult {
            rows,
            failures: vec![],
            slope: 1.0,
            intercept: 2f64.ln(),
            max_ratio: 2.0,
            min_ratio: 2.0,
        };
        let svg = stability_svg(&sweep);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("class=\"fit\"").count(), 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn margin_plot_groups_by_function_and_mode() {
        let rows: Vec<_> = (0..2)
            .flat_map(|id| {
                [3.0, 6.0].into_iter().map(move |l| FuzzRow {
                    func_id: id,
                    lambda: l,
                    mode: BoundaryMode::Corrected,
                    margin: 0.5,
                    min_passing_lambda: Some(3.0),
                })
            })
            .collect();
        assert_eq!(margin_svg(&rows).matches("<polyline").count(), 2);
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(write_report(&file.join("sub"), "a.csv", "x").is_err());
        write_report(&dir.path().join("out"), "a.csv", "x").unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap(),
            "x"
        );
    }
}
