//! Quicklook rendering: raster maps and the baseline-vs-time network plot.
//!
//! Output is plain SVG with integer pixel rects — no renderer dependency,
//! and byte-deterministic for the artifact manifest.

use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::network::{compact_date, temporal_baseline, PairSpec};
use crate::raster::Raster;

/// Largest edge (in pixels) rendered one rect per pixel; bigger rasters are
/// averaged down in integer blocks.
const MAX_FULL_RES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorRamp {
    /// Diverging blue -> white -> red, the usual convention for velocity maps.
    BlueRed,
    Grey,
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round().clamp(0.0, 255.0) as u8
}

fn ramp_color(ramp: ColorRamp, t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    match ramp {
        ColorRamp::Grey => {
            let g = lerp(20, 235, t);
            (g, g, g)
        }
        ColorRamp::BlueRed => {
            let lo = (33, 102, 172);
            let mid = (247, 247, 247);
            let hi = (178, 24, 43);
            if t < 0.5 {
                let u = t * 2.0;
                (lerp(lo.0, mid.0, u), lerp(lo.1, mid.1, u), lerp(lo.2, mid.2, u))
            } else {
                let u = (t - 0.5) * 2.0;
                (lerp(mid.0, hi.0, u), lerp(mid.1, hi.1, u), lerp(mid.2, hi.2, u))
            }
        }
    }
}

fn hex(c: (u8, u8, u8)) -> String {
    format!("#{:02x}{:02x}{:02x}", c.0, c.1, c.2)
}

/// Render a raster as an SVG heat map with a labelled color bar. Nodata
/// pixels are left transparent. Rasters larger than 512 on a side are
/// block-averaged first.
pub fn render_quicklook(raster: &Raster, ramp: ColorRamp, title: &str, units: &str) -> String {
    let (w, h) = (raster.width(), raster.height());
    let block = w.max(h).div_ceil(MAX_FULL_RES);
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));

    // Block means, None where every covered pixel is nodata.
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in by * block..((by + 1) * block).min(h) {
                for x in bx * block..((bx + 1) * block).min(w) {
                    let v = raster.get(x, y);
                    if !raster.is_nodata(v) && v.is_finite() {
                        sum += v;
                        n += 1;
                    }
                }
            }
            cells.push((n > 0).then(|| sum / n as f64));
        }
    }

    let (lo, hi) = raster.min_max().unwrap_or((0.0, 0.0));
    let span = hi - lo;
    let cell_px = (MAX_FULL_RES / bw.max(bh)).max(1);
    let (img_w, img_h) = (bw * cell_px, bh * cell_px);
    let (margin, bar_w, label_w, top) = (12, 22, 110, 44);
    let total_w = margin + img_w + margin + bar_w + 8 + label_w + margin;
    let total_h = top + img_h.max(220) + margin;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" \
         viewBox=\"0 0 {total_w} {total_h}\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{margin}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\">{title}</text>"
    );
    for by in 0..bh {
        for bx in 0..bw {
            let Some(v) = cells[by * bw + bx] else { continue };
            let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell_px}\" height=\"{cell_px}\" fill=\"{}\"/>",
                margin + bx * cell_px,
                top + by * cell_px,
                hex(ramp_color(ramp, t))
            );
        }
    }

    // Color bar: 32 bands, high values at the top.
    let bar_x = margin + img_w + margin;
    let bar_h = img_h.max(200);
    let bands = 32;
    for b in 0..bands {
        let t = 1.0 - (b as f64 + 0.5) / bands as f64;
        let y0 = top + b * bar_h / bands;
        let y1 = top + (b + 1) * bar_h / bands;
        let _ = writeln!(
            svg,
            "<rect x=\"{bar_x}\" y=\"{y0}\" width=\"{bar_w}\" height=\"{}\" fill=\"{}\"/>",
            y1 - y0,
            hex(ramp_color(ramp, t))
        );
    }
    let text_x = bar_x + bar_w + 8;
    let _ = writeln!(
        svg,
        "<text x=\"{text_x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{hi:.3} {units}</text>",
        top + 12
    );
    let _ = writeln!(
        svg,
        "<text x=\"{text_x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{lo:.3} {units}</text>",
        top + bar_h
    );
    svg.push_str("</svg>\n");
    svg
}

/// Plot the pair network: epochs as dots in (time, perpendicular baseline)
/// space, pairs as connecting segments.
pub fn render_network(epochs: &[NaiveDate], baselines_m: &[f64], pairs: &[PairSpec]) -> String {
    assert_eq!(epochs.len(), baselines_m.len());
    let (width, height) = (860usize, 500usize);
    let (ml, mr, mt, mb) = (70i64, 25i64, 48i64, 90i64);
    let plot_w = width as i64 - ml - mr;
    let plot_h = height as i64 - mt - mb;

    let t0 = *epochs.first().expect("at least one epoch");
    let t_span = temporal_baseline(t0, *epochs.last().unwrap()).max(1) as f64;
    let (mut blo, mut bhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &b in baselines_m {
        blo = blo.min(b);
        bhi = bhi.max(b);
    }
    if !blo.is_finite() || blo == bhi {
        blo -= 1.0;
        bhi += 1.0;
    }
    let pad = 0.08 * (bhi - blo);
    let (blo, bhi) = (blo - pad, bhi + pad);

    let x_of = |d: NaiveDate| ml as f64 + temporal_baseline(t0, d) as f64 / t_span * plot_w as f64;
    let y_of = |b: f64| (mt + plot_h) as f64 - (b - blo) / (bhi - blo) * plot_h as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{ml}\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\">Interferogram network \
         ({} epochs, {} pairs)</text>",
        epochs.len(),
        pairs.len()
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"#444\"/>",
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#444\"/>",
        mt + plot_h,
        ml + plot_w
    );
    // Baseline ticks: five evenly spaced labels.
    for k in 0..=4 {
        let b = blo + (bhi - blo) * k as f64 / 4.0;
        let y = y_of(b);
        let _ = writeln!(
            svg,
            "<text x=\"8\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{b:.0} m</text>",
            y + 4.0
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{ml}\" y2=\"{y:.1}\" stroke=\"#444\"/>",
            ml - 4
        );
    }
    // Pairs first so the epoch markers draw on top.
    for p in pairs {
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#8aa0c0\" stroke-width=\"1.2\"/>",
            x_of(epochs[p.master_idx]),
            y_of(baselines_m[p.master_idx]),
            x_of(epochs[p.slave_idx]),
            y_of(baselines_m[p.slave_idx])
        );
    }
    for (d, &b) in epochs.iter().zip(baselines_m) {
        let (x, y) = (x_of(*d), y_of(b));
        let _ = writeln!(
            svg,
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"5\" fill=\"#1a3a6b\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             transform=\"rotate(45 {x:.1} {0})\">{}</text>",
            mt + plot_h + 16,
            compact_date(*d)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_pairs;

    #[test]
    fn constant_raster_renders_single_color_with_legend_value() {
        let r = Raster::filled(4, 4, 1.0, 1.0, f64::NAN, 2.5).unwrap();
        let svg = render_quicklook(&r, ColorRamp::Grey, "test", "mm/yr");
        // 16 pixel rects + 32 legend bands.
        assert_eq!(svg.matches("<rect").count(), 16 + 32);
        assert!(svg.contains("2.500 mm/yr"), "{svg}");
        // Constant data maps to the mid-ramp grey everywhere.
        let mid = hex(ramp_color(ColorRamp::Grey, 0.5));
        assert_eq!(svg.matches(mid.as_str()).count() >= 16, true);
    }

    #[test]
    fn nodata_pixels_are_transparent() {
        let mut r = Raster::filled(2, 2, 1.0, 1.0, -1.0, 3.0).unwrap();
        r.set(1, 1, -1.0);
        let svg = render_quicklook(&r, ColorRamp::BlueRed, "t", "");
        assert_eq!(svg.matches("<rect").count(), 3 + 32);
    }

    #[test]
    fn big_rasters_are_downsampled() {
        let r = Raster::filled(1030, 20, 1.0, 1.0, f64::NAN, 0.0).unwrap();
        let svg = render_quicklook(&r, ColorRamp::Grey, "t", "");
        // Block factor 3: 344 x 7 cells.
        assert_eq!(svg.matches("<rect").count(), 344 * 7 + 32);
    }

    #[test]
    fn network_plot_shows_every_epoch_and_pair() {
        let path =
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/envisat_pairs.csv");
        let (epochs, pairs) = load_pairs(&path).unwrap();
        let baselines = crate::network::estimate_epoch_baselines(epochs.len(), &pairs).unwrap();
        let svg = render_network(&epochs, &baselines, &pairs);
        assert_eq!(svg.matches("<circle").count(), 10);
        // 22 pair segments + 2 axes + 5 tick marks.
        assert_eq!(svg.matches("<line").count(), 22 + 2 + 5);
        assert!(svg.contains("20030926"));
        assert!(svg.contains("20050826"));
    }
}
