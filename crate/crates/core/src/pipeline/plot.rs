//! Static SVG charts: overlaid ROC curves, the importance ranking, and a
//! per-instance diverging contribution chart.

use std::fmt::Write as _;

use crate::evaluation::RocCurve;
use crate::selection::FeatureRanking;
use crate::shap::ShapExplanation;

const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd"];
pub const INCREASE_COLOR: &str = "#d62728";
pub const DECREASE_COLOR: &str = "#1f77b4";

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, width: u32, height: u32, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2,
        escape(title)
    );
}

/// ROC curves of several models on one set of axes, one polyline each.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    let (w, h) = (520u32, 480u32);
    let (left, top, size) = (60.0, 40.0, 380.0);
    let px = |fpr: f64| left + fpr * size;
    let py = |tpr: f64| top + (1.0 - tpr) * size;
    let mut out = String::new();
    header(&mut out, w, h, "ROC curves");
    let _ = writeln!(
        out,
        r##"<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line class="chance" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            top + size + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            left - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">False positive rate</text>"#,
        left + size / 2.0,
        top + size + 34.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">True positive rate</text>"#,
        top + size / 2.0,
        top + size / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="roc-curve" data-model="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            escape(name),
            points.join(" ")
        );
        let ly = top + size - 20.0 - 18.0 * (curves.len() - 1 - i) as f64;
        let _ = writeln!(
            out,
            r#"<text class="legend" x="{:.1}" y="{ly:.1}" fill="{color}">{} (AUC = {:.3})</text>"#,
            left + size * 0.45,
            escape(name),
            curve.auc
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars for the `k` highest-ranked features, rank 1 on top.
pub fn ranking_svg(ranking: &FeatureRanking, k: usize) -> String {
    let entries = &ranking.entries[..k.min(ranking.len())];
    let bar_h = 16.0;
    let (left, top, plot_w) = (190.0, 40.0, 420.0);
    let h = (top + bar_h * entries.len() as f64 + 40.0).ceil() as u32;
    let max = entries.iter().map(|e| e.importance).fold(0.0, f64::max);
    let mut out = String::new();
    header(
        &mut out,
        680,
        h,
        &format!("Top {} features by mean |SHAP value|", entries.len()),
    );
    for (i, e) in entries.iter().enumerate() {
        let y = top + i as f64 * bar_h;
        let len = if max > 0.0 { e.importance / max * plot_w } else { 0.0 };
        let _ = writeln!(
            out,
            r##"<rect class="bar" data-rank="{}" data-feature="{}" x="{left}" y="{:.1}" width="{len:.2}" height="{:.1}" fill="#1f77b4"><title>{}: {:.6e}</title></rect>"##,
            e.rank,
            escape(&e.name),
            y + 2.0,
            bar_h - 4.0,
            escape(&e.name),
            e.importance
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + bar_h - 4.0,
            escape(&e.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Diverging bars of signed contributions for one instance, largest
/// magnitude first, at most `max_features` of them. Positive contributions
/// (raising the reconstruction error) are red, negative ones blue.
pub fn instance_svg(explanation: &ShapExplanation, label: &str, max_features: usize) -> String {
    let mut order: Vec<usize> = (0..explanation.phi.len()).collect();
    order.sort_by(|&a, &b| {
        explanation.phi[b]
            .abs()
            .total_cmp(&explanation.phi[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(max_features);

    let bar_h = 18.0;
    let (top, center, half) = (70.0, 420.0, 220.0);
    let h = (top + bar_h * order.len() as f64 + 30.0).ceil() as u32;
    let max = order.iter().map(|&i| explanation.phi[i].abs()).fold(0.0, f64::max);
    let mut out = String::new();
    header(
        &mut out,
        720,
        h,
        &format!(
            "Instance {} ({label}): feature contributions",
            explanation.instance_index
        ),
    );
    let _ = writeln!(
        out,
        r#"<text class="base-value" x="360" y="40" text-anchor="middle">base value = {:.6}   full value = {:.6}</text>"#,
        explanation.base_value, explanation.full_value
    );
    let _ = writeln!(
        out,
        r##"<line x1="{center}" y1="{:.1}" x2="{center}" y2="{:.1}" stroke="#333"/>"##,
        top - 6.0,
        top + bar_h * order.len() as f64
    );
    for (row, &i) in order.iter().enumerate() {
        let phi = explanation.phi[i];
        let len = if max > 0.0 { phi.abs() / max * half } else { 0.0 };
        let (x, class, color) = if phi >= 0.0 {
            (center, "pos", INCREASE_COLOR)
        } else {
            (center - len, "neg", DECREASE_COLOR)
        };
        let y = top + row as f64 * bar_h;
        let name = explanation
            .feature_names
            .get(i)
            .map_or_else(|| format!("x{i}"), |n| escape(n));
        let _ = writeln!(
            out,
            r#"<rect class="contribution {class}" data-feature="{name}" data-phi="{phi:?}" x="{x:.2}" y="{:.1}" width="{len:.2}" height="{:.1}" fill="{color}"/>"#,
            y + 2.0,
            bar_h - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{name}</text>"#,
            center - half - 8.0,
            y + bar_h - 5.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::roc;
    use crate::selection::aggregate;

    fn explanation() -> ShapExplanation {
        ShapExplanation {
            phi: vec![0.2, -0.4, 0.0, 0.1],
            base_value: 0.1,
            full_value: 0.0,
            instance_index: 5,
            feature_names: vec!["a".into(), "b<".into(), "c".into(), "d".into()],
        }
    }

    #[test]
    fn roc_chart_has_one_polyline_per_model() {
        let a = roc(&[0, 1, 0, 1], &[0.1, 0.9, 0.4, 0.3]).unwrap();
        let b = roc(&[0, 1, 0, 1], &[0.1, 0.9, 0.2, 0.8]).unwrap();
        let svg = roc_svg(&[("baseline", &a), ("optimized", &b)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("AUC = 1.000"));
    }

    #[test]
    fn ranking_bars_in_rank_order() {
        let r = aggregate(&[explanation()]).unwrap();
        let svg = ranking_svg(&r, 3);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 3);
        let first = svg.find(r#"data-rank="1""#).unwrap();
        let second = svg.find(r#"data-rank="2""#).unwrap();
        assert!(first < second);
        assert!(svg.contains("b&lt;"));
    }

    #[test]
    fn instance_bar_signs_follow_phi() {
        let svg = instance_svg(&explanation(), "attack", 10);
        assert_eq!(svg.matches("contribution pos").count(), 3);
        assert_eq!(svg.matches("contribution neg").count(), 1);
        assert!(svg.contains(r#"class="contribution neg" data-feature="b&lt;" data-phi="-0.4""#));
    }
}
