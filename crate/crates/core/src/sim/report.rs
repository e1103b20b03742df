use std::collections::BTreeMap;

use super::{fmt_value, Metrics, Mode};

/// Cross-mode summary written to `report.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// C1/C2 cumulative output error per channel.
    pub ratio_output: Option<[f64; 2]>,
    /// C1/C2 cumulative tool-position error per coordinate.
    pub ratio_tool: Option<[f64; 2]>,
    /// C1/C2 of the cumulative Euclidean errors `(y, r_app)`.
    pub ratio_norm: Option<[f64; 2]>,
    pub final_tool_error: BTreeMap<String, f64>,
    pub peak_input: BTreeMap<String, f64>,
    lines: Vec<String>,
}

fn ratio(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] / b[0], a[1] / b[1]]
}

/// Compares metrics of the modes present in `runs`.
pub fn compare(runs: &[(Mode, Metrics)]) -> ComparisonReport {
    let get = |m: Mode| runs.iter().find(|(k, _)| *k == m).map(|(_, v)| v);
    let (c1, c2) = (get(Mode::C1), get(Mode::C2));
    let ratio_output = c1.zip(c2).map(|(a, b)| ratio(a.cumulative_output_error, b.cumulative_output_error));
    let ratio_tool = c1.zip(c2).map(|(a, b)| ratio(a.cumulative_tool_error, b.cumulative_tool_error));
    let ratio_norm = c1.zip(c2).map(|(a, b)| {
        [
            a.cumulative_output_error_norm / b.cumulative_output_error_norm,
            a.cumulative_tool_error_norm / b.cumulative_tool_error_norm,
        ]
    });
    let mut lines = Vec::new();
    for (mode, m) in runs {
        lines.extend(m.lines(&format!("{}.", mode.label().to_ascii_lowercase())));
    }
    if let Some(r) = ratio_output {
        lines.push(format!("ratio_c1_c2_y1: {}", fmt_value(r[0])));
        lines.push(format!("ratio_c1_c2_y2: {}", fmt_value(r[1])));
    }
    if let Some(r) = ratio_tool {
        lines.push(format!("ratio_c1_c2_x: {}", fmt_value(r[0])));
        lines.push(format!("ratio_c1_c2_z: {}", fmt_value(r[1])));
    }
    if let Some(r) = ratio_norm {
        lines.push(format!("ratio_c1_c2_y_norm: {}", fmt_value(r[0])));
        lines.push(format!("ratio_c1_c2_tool_norm: {}", fmt_value(r[1])));
    }
    let final_tool_error = runs.iter().map(|(k, m)| (k.label().to_string(), m.final_tool_error)).collect();
    let peak_input = runs.iter().map(|(k, m)| (k.label().to_string(), m.peak_input)).collect();
    ComparisonReport { ratio_output, ratio_tool, ratio_norm, final_tool_error, peak_input, lines }
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Gnuplot script plotting outputs, inputs and the outer funnel from
/// `<label>.csv` files in the same directory.
pub fn gnuplot_script(labels: &[&str]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 1200,900\nset output 'tracking.png'\nset multiplot layout 3,1\n",
    );
    let series = |col: &str| -> String {
        labels
            .iter()
            .map(|l| format!("'{l}.csv' using 1:{col} with lines title '{l}'"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    s.push_str("set ylabel 'y1 - yref1'\n");
    s.push_str(&format!("plot {}\n", series("($12-$14)")));
    s.push_str("set ylabel 'y2 - yref2'\n");
    s.push_str(&format!("plot {}\n", series("($13-$15)")));
    s.push_str("set ylabel '|ebar|'\nset logscale y\n");
    let mut outer = series("24");
    if let Some(l) = labels.first() {
        outer.push_str(&format!(", '{l}.csv' using 1:25 with lines dashtype 2 title 'funnel'"));
    }
    s.push_str(&format!("plot {outer}\n"));
    s.push_str("unset multiplot\n");
    s
}
