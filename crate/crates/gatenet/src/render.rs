//! 2-D decision-region figures as SVG.
//!
//! The plane is sampled on a cell grid; each cell is colored by the firing
//! readout coordinate at its center (argmax over coordinates above the
//! tolerance), with a neutral background color where no category fires.

use nalgebra::DVector;

use crate::geometry::LabeledDataset;
use crate::net::{eval_net, ResNet};
use crate::{Error, Result};

const PALETTE: [&str; 8] = [
    "#4e79a7", "#e15759", "#59a14f", "#f28e2b", "#b07aa1", "#76b7b2", "#edc948", "#9c755f",
];
const BACKGROUND: &str = "#e8e8e8";

fn color_for(category: usize) -> &'static str {
    PALETTE[category % PALETTE.len()]
}

/// Renders the decision regions of a 2-input network over
/// `[x0, x1] x [y0, y1]` on a `width x height` cell grid, returning the SVG
/// text. Dataset points, when given, are overlaid as outlined dots.
pub fn render_regions(
    net: &ResNet,
    bounds: (f64, f64, f64, f64),
    resolution: (usize, usize),
    overlay: Option<&LabeledDataset>,
    tau: f64,
) -> Result<String> {
    if net.input_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: net.input_dim(),
        });
    }
    let (x0, x1, y0, y1) = bounds;
    if !(x0 < x1 && y0 < y1) {
        return Err(Error::DegenerateInput(format!(
            "empty render bounds [{}, {}] x [{}, {}]",
            x0, x1, y0, y1
        )));
    }
    let (w, h) = resolution;
    if w == 0 || h == 0 {
        return Err(Error::DegenerateInput("zero render resolution".into()));
    }

    const CANVAS: f64 = 600.0;
    let cell_w = CANVAS / w as f64;
    let cell_h = CANVAS / h as f64;
    let to_px_x = |x: f64| (x - x0) / (x1 - x0) * CANVAS;
    let to_px_y = |y: f64| (y1 - y) / (y1 - y0) * CANVAS;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{c}\" height=\"{c}\" viewBox=\"0 0 {c} {c}\">\n",
        c = CANVAS
    ));
    svg.push_str(&format!(
        "<rect width=\"{c}\" height=\"{c}\" fill=\"{bg}\"/>\n",
        c = CANVAS,
        bg = BACKGROUND
    ));

    for i in 0..w {
        for j in 0..h {
            let cx = x0 + (x1 - x0) * (i as f64 + 0.5) / w as f64;
            let cy = y0 + (y1 - y0) * (j as f64 + 0.5) / h as f64;
            let out = eval_net(net, &DVector::from_row_slice(&[cx, cy]))?;
            let mut best: Option<(usize, f64)> = None;
            for (c, &val) in out.iter().enumerate() {
                if val > tau && best.map_or(true, |(_, bv)| val > bv) {
                    best = Some((c, val));
                }
            }
            if let Some((c, _)) = best {
                // cell (i, j) covers pixel rect at column i, row from the top
                let px = i as f64 * cell_w;
                let py = CANVAS - (j as f64 + 1.0) * cell_h;
                svg.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                    px,
                    py,
                    cell_w,
                    cell_h,
                    color_for(c)
                ));
            }
        }
    }

    if let Some(d) = overlay {
        if d.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: d.dim(),
            });
        }
        for (p, &label) in d.points().iter().zip(d.labels()) {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"{}\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
                to_px_x(p[0]),
                to_px_y(p[1]),
                color_for((label - 1) as usize)
            ));
        }
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{synthesize, SynthesisConfig};
    use crate::TAU;

    fn xor() -> LabeledDataset {
        LabeledDataset::new(
            vec![
                DVector::from_row_slice(&[0.0, 0.0]),
                DVector::from_row_slice(&[1.0, 1.0]),
                DVector::from_row_slice(&[0.0, 1.0]),
                DVector::from_row_slice(&[1.0, 0.0]),
            ],
            vec![1, 1, 2, 2],
        )
        .unwrap()
    }

    #[test]
    fn xor_regions_render_with_overlay() {
        let d = xor();
        let s = synthesize(&d, &SynthesisConfig::default()).unwrap();
        let svg = render_regions(&s.net, (-0.5, 1.5, -0.5, 1.5), (50, 50), Some(&d), TAU).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        // both categories and the overlay dots appear
        assert!(svg.contains(color_for(0)));
        assert!(svg.contains(color_for(1)));
        assert!(svg.contains("<circle"));
        // most of the plane is outside every cover box, so colored cells are
        // a minority over this grid
        let colored = svg.matches("<rect").count() - 1;
        assert!(colored < 50 * 50 / 2, "colored {} cells", colored);
        assert!(colored > 0);
    }

    #[test]
    fn degenerate_grid_and_wrong_dims() {
        let d = xor();
        let s = synthesize(&d, &SynthesisConfig::default()).unwrap();
        // 1x1 grid renders without panic
        let svg = render_regions(&s.net, (-0.5, 1.5, -0.5, 1.5), (1, 1), None, TAU).unwrap();
        assert!(svg.contains("</svg>"));

        // non-2-D network rejected
        let d3 = LabeledDataset::new(
            vec![
                DVector::from_row_slice(&[0.0, 0.0, 0.0]),
                DVector::from_row_slice(&[1.0, 1.0, 1.0]),
            ],
            vec![1, 2],
        )
        .unwrap();
        let s3 = synthesize(&d3, &SynthesisConfig::default()).unwrap();
        assert!(matches!(
            render_regions(&s3.net, (0.0, 1.0, 0.0, 1.0), (4, 4), None, TAU),
            Err(Error::DimensionMismatch { expected: 2, .. })
        ));
    }
}
