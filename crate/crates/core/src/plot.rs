//! Deterministic SVG renderings of report data.
//!
//! Each renderer turns an explanation or score report into a
//! self-contained SVG string: no external assets, no timestamps, and
//! every coordinate printed with fixed precision, so equal input yields
//! byte-identical output. Positive attributions are drawn warm
//! (`#ff0051`), negative ones cool (`#008bfb`), matching the common
//! attribution-plot convention of warm = pushes the score up.

use crate::data::unit_bin_histogram;
use crate::error::{Error, Result};
use crate::explain::{GlobalImportance, LocalExplanation};

/// Warm color for positive attributions / high feature values.
pub const WARM: &str = "#ff0051";

/// Cool color for negative attributions / low feature values.
pub const COOL: &str = "#008bfb";

const TEXT_COLOR: &str = "#222222";
const MUTED_COLOR: &str = "#666666";
const GRID_COLOR: &str = "#cccccc";

/// Coordinate formatting: two decimals everywhere.
fn fx(v: f64) -> String {
    format!("{v:.2}")
}

/// Value labels: up to three decimals, trailing zeros trimmed.
fn fv(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Linear blend from cool (t = 0) to warm (t = 1).
fn heat_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let cool = (0x00u8, 0x8bu8, 0xfbu8);
    let warm = (0xffu8, 0x00u8, 0x51u8);
    let mix = |a: u8, b: u8| -> u8 { (a as f64 + (b as f64 - a as f64) * t).round() as u8 };
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(cool.0, warm.0),
        mix(cool.1, warm.1),
        mix(cool.2, warm.2)
    )
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
            fx(width),
            fx(height)
        ));
        Svg {
            body,
            width,
            height,
        }
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"/>\n",
            fx(x), fx(y), fx(w), fx(h)
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"{dash}/>\n",
            fx(x1), fx(y1), fx(x2), fx(y2), fx(width)
        ));
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"0.85\"/>\n",
            fx(cx),
            fx(cy),
            fx(r)
        ));
    }

    fn polygon(&mut self, points: &[(f64, f64)], fill: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", fx(*x), fx(*y))).collect();
        self.body.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{fill}\"/>\n",
            pts.join(" ")
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, fill: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" text-anchor=\"{anchor}\" fill=\"{fill}\" \
             font-family=\"Helvetica, Arial, sans-serif\">{}</text>\n",
            fx(x),
            fx(y),
            fx(size),
            esc(content)
        ));
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" \
             width=\"{}\" height=\"{}\">\n{}</svg>\n",
            fx(self.width),
            fx(self.height),
            fx(self.width),
            fx(self.height),
            self.body
        )
    }
}

/// Horizontal bar chart of mean |phi| for the top `max_features`
/// features, with CI whiskers where intervals are attached. The signed
/// interval is mapped through |.| for display on the magnitude axis.
pub fn render_importance_bars(global: &GlobalImportance, max_features: usize) -> Result<String> {
    if global.features.is_empty() {
        return Err(Error::invalid("plot: no features to draw"));
    }
    if max_features == 0 {
        return Err(Error::invalid("plot: max_features must be positive"));
    }
    let shown = &global.features[..global.features.len().min(max_features)];

    let abs_interval = |ci: &[f64; 2]| -> (f64, f64) {
        let lo = if ci[0] <= 0.0 && ci[1] >= 0.0 {
            0.0
        } else {
            ci[0].abs().min(ci[1].abs())
        };
        (lo, ci[0].abs().max(ci[1].abs()))
    };
    let mut max_x = 1e-9f64;
    for f in shown {
        max_x = max_x.max(f.mean_abs_phi);
        if let Some(ci) = &f.ci {
            max_x = max_x.max(abs_interval(ci).1);
        }
    }

    let left = 170.0;
    let plot_w = 460.0;
    let row_h = 26.0;
    let top = 34.0;
    let height = top + shown.len() as f64 * row_h + 40.0;
    let mut svg = Svg::new(left + plot_w + 80.0, height);
    svg.text(left, 20.0, 13.0, "start", TEXT_COLOR, "mean |phi| (score units)");

    let sx = |v: f64| left + v / max_x * plot_w;
    for (i, f) in shown.iter().enumerate() {
        let y = top + i as f64 * row_h;
        let bar_h = row_h - 8.0;
        svg.text(
            left - 8.0,
            y + bar_h / 2.0 + 4.0,
            12.0,
            "end",
            TEXT_COLOR,
            &f.feature,
        );
        svg.rect("bar", left, y, sx(f.mean_abs_phi) - left, bar_h, WARM);
        svg.text(
            sx(f.mean_abs_phi) + 6.0,
            y + bar_h / 2.0 + 4.0,
            11.0,
            "start",
            MUTED_COLOR,
            &fv(f.mean_abs_phi),
        );
        if let Some(ci) = &f.ci {
            let (lo, hi) = abs_interval(ci);
            let cy = y + bar_h / 2.0;
            svg.line(sx(lo), cy, sx(hi), cy, TEXT_COLOR, 1.4, false);
            svg.line(sx(lo), cy - 4.0, sx(lo), cy + 4.0, TEXT_COLOR, 1.4, false);
            svg.line(sx(hi), cy - 4.0, sx(hi), cy + 4.0, TEXT_COLOR, 1.4, false);
        }
    }
    svg.line(left, top, left, height - 36.0, TEXT_COLOR, 1.0, false);
    svg.text(left, height - 18.0, 11.0, "middle", MUTED_COLOR, "0");
    svg.text(
        left + plot_w,
        height - 18.0,
        11.0,
        "middle",
        MUTED_COLOR,
        &fv(max_x),
    );
    Ok(svg.finish())
}

/// Beeswarm of per-sample attributions for the top `max_features`
/// features. Point color encodes the sample's standardized feature
/// value (cool = low, warm = high); vertical jitter is rank-based and
/// deterministic.
pub fn render_beeswarm(global: &GlobalImportance, max_features: usize) -> Result<String> {
    if global.features.is_empty() || global.phi_matrix.is_empty() {
        return Err(Error::invalid("plot: no attributions to draw"));
    }
    if max_features == 0 {
        return Err(Error::invalid("plot: max_features must be positive"));
    }
    let rows = global.feature_order.len().min(max_features);
    let n = global.phi_matrix.len();

    let mut max_abs = 1e-9f64;
    for &j in global.feature_order.iter().take(rows) {
        for row in &global.phi_matrix {
            max_abs = max_abs.max(row[j].abs());
        }
    }

    let left = 170.0;
    let plot_w = 460.0;
    let row_h = 34.0;
    let top = 34.0;
    let height = top + rows as f64 * row_h + 40.0;
    let mut svg = Svg::new(left + plot_w + 80.0, height);
    svg.text(left, 20.0, 13.0, "start", TEXT_COLOR, "phi (impact on prediction)");
    let zero_x = left + plot_w / 2.0;
    svg.line(zero_x, top, zero_x, height - 36.0, GRID_COLOR, 1.0, false);

    let sx = |v: f64| zero_x + v / max_abs * (plot_w / 2.0);
    for (k, &j) in global.feature_order.iter().take(rows).enumerate() {
        let cy = top + k as f64 * row_h + row_h / 2.0;
        svg.text(
            left - 8.0,
            cy + 4.0,
            12.0,
            "end",
            TEXT_COLOR,
            &global.features[k].feature,
        );
        // Rank of each sample's value within the column drives color.
        let mut value_order: Vec<usize> = (0..n).collect();
        value_order.sort_by(|&a, &b| {
            global.value_matrix[a][j]
                .partial_cmp(&global.value_matrix[b][j])
                .expect("finite values")
                .then(a.cmp(&b))
        });
        let mut value_rank = vec![0usize; n];
        for (rank, &i) in value_order.iter().enumerate() {
            value_rank[i] = rank;
        }
        // Rank of phi gives a deterministic swarm offset.
        let mut phi_order: Vec<usize> = (0..n).collect();
        phi_order.sort_by(|&a, &b| {
            global.phi_matrix[a][j]
                .partial_cmp(&global.phi_matrix[b][j])
                .expect("finite attribution")
                .then(a.cmp(&b))
        });
        for (rank, &i) in phi_order.iter().enumerate() {
            let jitter = ((rank * 2654435761) % 97) as f64 / 96.0 - 0.5;
            let t = if n > 1 {
                value_rank[i] as f64 / (n - 1) as f64
            } else {
                0.5
            };
            svg.circle(
                sx(global.phi_matrix[i][j]),
                cy + jitter * (row_h - 10.0),
                3.0,
                &heat_color(t),
            );
        }
    }
    svg.text(zero_x, height - 18.0, 11.0, "middle", MUTED_COLOR, "0");
    svg.text(
        left + plot_w,
        height - 18.0,
        11.0,
        "middle",
        MUTED_COLOR,
        &fv(max_abs),
    );
    svg.text(
        left,
        height - 18.0,
        11.0,
        "middle",
        MUTED_COLOR,
        &fv(-max_abs),
    );
    Ok(svg.finish())
}

/// Waterfall from the base value to the prediction. At most `max_bars`
/// bars are drawn: the strongest `max_bars - 1` contributions keep
/// their names and the remainder collapse into one "other features"
/// bar, so the cumulative walk always reconciles base with prediction.
pub fn render_waterfall(local: &LocalExplanation, max_bars: usize) -> Result<String> {
    if local.contributions.is_empty() {
        return Err(Error::invalid("plot: empty contribution list"));
    }
    if max_bars < 2 {
        return Err(Error::invalid("plot: need at least two bars"));
    }

    struct Bar {
        label: String,
        phi: f64,
    }
    let mut bars: Vec<Bar> = Vec::new();
    if local.contributions.len() > max_bars {
        let named = max_bars - 1;
        for c in &local.contributions[..named] {
            bars.push(Bar {
                label: format!("{} = {}", c.feature, fv(c.value)),
                phi: c.phi,
            });
        }
        let rest = &local.contributions[named..];
        bars.push(Bar {
            label: format!("{} other features", rest.len()),
            phi: rest.iter().map(|c| c.phi).sum(),
        });
    } else {
        for c in &local.contributions {
            bars.push(Bar {
                label: format!("{} = {}", c.feature, fv(c.value)),
                phi: c.phi,
            });
        }
    }

    // Cumulative walk.
    let mut cums = Vec::with_capacity(bars.len() + 1);
    let mut at = local.base_value;
    cums.push(at);
    for b in &bars {
        at += b.phi;
        cums.push(at);
    }
    let mut min_x = cums.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_x = cums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_x - min_x < 1e-9 {
        min_x -= 0.5;
        max_x += 0.5;
    }
    let pad = (max_x - min_x) * 0.12;
    min_x -= pad;
    max_x += pad;

    let left = 190.0;
    let plot_w = 440.0;
    let row_h = 30.0;
    let top = 40.0;
    let height = top + bars.len() as f64 * row_h + 56.0;
    let mut svg = Svg::new(left + plot_w + 80.0, height);
    let sx = |v: f64| left + (v - min_x) / (max_x - min_x) * plot_w;

    // Base and prediction reference lines.
    let base_x = sx(local.base_value);
    let pred_x = sx(local.prediction);
    svg.line(base_x, top - 6.0, base_x, height - 40.0, MUTED_COLOR, 1.0, true);
    svg.text(
        base_x,
        top - 12.0,
        11.0,
        "middle",
        MUTED_COLOR,
        &format!("base = {}", fv(local.base_value)),
    );
    svg.line(pred_x, top - 6.0, pred_x, height - 40.0, MUTED_COLOR, 1.0, true);
    svg.text(
        pred_x,
        height - 24.0,
        11.0,
        "middle",
        TEXT_COLOR,
        &format!("f(x) = {}", fv(local.prediction)),
    );

    for (i, b) in bars.iter().enumerate() {
        let y = top + i as f64 * row_h;
        let bar_h = row_h - 10.0;
        let (from, to) = (cums[i], cums[i + 1]);
        let (x0, x1) = (sx(from.min(to)), sx(from.max(to)));
        let fill = if b.phi >= 0.0 { WARM } else { COOL };
        svg.text(left - 8.0, y + bar_h / 2.0 + 4.0, 12.0, "end", TEXT_COLOR, &b.label);
        svg.rect("bar", x0, y, (x1 - x0).max(1.0), bar_h, fill);
        let tip = sx(to);
        let dir = if b.phi >= 0.0 { 1.0 } else { -1.0 };
        svg.polygon(
            &[
                (tip, y),
                (tip + dir * 6.0, y + bar_h / 2.0),
                (tip, y + bar_h),
            ],
            fill,
        );
        let phi_label = if b.phi >= 0.0 {
            format!("+{}", fv(b.phi))
        } else {
            fv(b.phi)
        };
        svg.text(
            x1 + 10.0,
            y + bar_h / 2.0 + 4.0,
            11.0,
            "start",
            MUTED_COLOR,
            &phi_label,
        );
    }
    Ok(svg.finish())
}

/// Force plot: positive contributions push from the base toward higher
/// output, negative ones push back, meeting at the prediction.
pub fn render_force(local: &LocalExplanation) -> Result<String> {
    if local.contributions.is_empty() {
        return Err(Error::invalid("plot: empty contribution list"));
    }
    let mut positives: Vec<_> = local.contributions.iter().filter(|c| c.phi >= 0.0).collect();
    let mut negatives: Vec<_> = local.contributions.iter().filter(|c| c.phi < 0.0).collect();
    positives.sort_by(|a, b| b.phi.partial_cmp(&a.phi).expect("finite attribution"));
    negatives.sort_by(|a, b| a.phi.partial_cmp(&b.phi).expect("finite attribution"));

    // Walk up through positives, then back down through negatives.
    let mut segments: Vec<(String, f64, f64, bool)> = Vec::new();
    let mut at = local.base_value;
    for c in &positives {
        segments.push((format!("{} = {}", c.feature, fv(c.value)), at, at + c.phi, true));
        at += c.phi;
    }
    let peak = at;
    for c in &negatives {
        segments.push((format!("{} = {}", c.feature, fv(c.value)), at, at + c.phi, false));
        at += c.phi;
    }
    let mut min_x = local.base_value.min(at).min(peak);
    let mut max_x = local.base_value.max(at).max(peak);
    if max_x - min_x < 1e-9 {
        min_x -= 0.5;
        max_x += 0.5;
    }
    let pad = (max_x - min_x) * 0.1;
    min_x -= pad;
    max_x += pad;

    let left = 40.0;
    let plot_w = 640.0;
    let band_y = 60.0;
    let band_h = 26.0;
    let height = 150.0;
    let mut svg = Svg::new(left + plot_w + 40.0, height);
    let sx = |v: f64| left + (v - min_x) / (max_x - min_x) * plot_w;

    svg.line(left, band_y + band_h + 22.0, left + plot_w, band_y + band_h + 22.0, GRID_COLOR, 1.0, false);
    for (label, from, to, positive) in &segments {
        let (x0, x1) = (sx(*from), sx(*to));
        let fill = if *positive { WARM } else { COOL };
        let dir = if x1 >= x0 { 1.0 } else { -1.0 };
        let notch = 7.0 * dir;
        svg.polygon(
            &[
                (x0, band_y),
                (x1 - notch, band_y),
                (x1, band_y + band_h / 2.0),
                (x1 - notch, band_y + band_h),
                (x0, band_y + band_h),
                (x0 + notch, band_y + band_h / 2.0),
            ],
            fill,
        );
        let width_px = (x1 - x0).abs();
        if width_px > 36.0 {
            svg.text(
                (x0 + x1) / 2.0,
                band_y + band_h + 16.0,
                10.0,
                "middle",
                MUTED_COLOR,
                label,
            );
        }
    }
    let base_x = sx(local.base_value);
    svg.text(base_x, band_y - 26.0, 11.0, "middle", MUTED_COLOR, "base value");
    svg.text(base_x, band_y - 12.0, 11.0, "middle", MUTED_COLOR, &fv(local.base_value));
    let pred_x = sx(local.prediction);
    svg.line(pred_x, band_y - 8.0, pred_x, band_y + band_h + 8.0, TEXT_COLOR, 1.4, false);
    svg.text(
        pred_x,
        band_y + band_h + 40.0,
        12.0,
        "middle",
        TEXT_COLOR,
        &format!("f(x) = {}", fv(local.prediction)),
    );
    Ok(svg.finish())
}

/// Side-by-side unit-bin score histograms, one panel per labeled value
/// set (typically raw / synthetic / augmented), sharing the count axis.
pub fn render_score_histograms(panels: &[(String, Vec<f64>)]) -> Result<String> {
    if panels.is_empty() {
        return Err(Error::invalid("plot: no histogram panels"));
    }
    let mut binned = Vec::with_capacity(panels.len());
    for (label, values) in panels {
        let bins = unit_bin_histogram(values)
            .map_err(|e| Error::invalid(format!("plot: panel {label:?}: {e}")))?;
        binned.push((label, bins));
    }
    let max_count = binned
        .iter()
        .flat_map(|(_, bins)| bins.iter().map(|b| b.2))
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let panel_w = 210.0;
    let panel_h = 170.0;
    let gap = 36.0;
    let left = 50.0;
    let top = 44.0;
    let width = left + panels.len() as f64 * (panel_w + gap);
    let height = top + panel_h + 46.0;
    let mut svg = Svg::new(width, height);

    for (pi, (label, bins)) in binned.iter().enumerate() {
        let x0 = left + pi as f64 * (panel_w + gap);
        svg.text(
            x0 + panel_w / 2.0,
            top - 16.0,
            13.0,
            "middle",
            TEXT_COLOR,
            label,
        );
        svg.line(x0, top + panel_h, x0 + panel_w, top + panel_h, TEXT_COLOR, 1.0, false);
        svg.line(x0, top, x0, top + panel_h, TEXT_COLOR, 1.0, false);
        let bar_w = panel_w / bins.len() as f64;
        for (bi, (lo, hi, count)) in bins.iter().enumerate() {
            let h = *count as f64 / max_count * (panel_h - 12.0);
            let x = x0 + bi as f64 * bar_w;
            svg.rect("hbar", x + 1.0, top + panel_h - h, bar_w - 2.0, h, COOL);
            if *count > 0 {
                svg.text(
                    x + bar_w / 2.0,
                    top + panel_h - h - 4.0,
                    9.0,
                    "middle",
                    MUTED_COLOR,
                    &format!("{count}"),
                );
            }
            svg.text(
                x,
                top + panel_h + 14.0,
                9.0,
                "middle",
                MUTED_COLOR,
                &format!("{lo:.1}"),
            );
            if bi == bins.len() - 1 {
                svg.text(
                    x + bar_w,
                    top + panel_h + 14.0,
                    9.0,
                    "middle",
                    MUTED_COLOR,
                    &format!("{hi:.1}"),
                );
            }
        }
    }
    svg.text(
        left - 34.0,
        top + 10.0,
        10.0,
        "start",
        MUTED_COLOR,
        &format!("{}", max_count as usize),
    );
    Ok(svg.finish())
}
