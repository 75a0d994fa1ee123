//! Axis-aligned compact regions `K` on which local diagnostics are evaluated.

use crate::error::{Error, Result};
use crate::spectral::Grid;

/// Rectangle `[x0, x1] x [y0, y1]`. On the torus the rectangle may sit
/// anywhere (it wraps) and has no boundary to keep away from; in a bounded
/// domain it must be strictly interior and `margin` is its distance to the
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactRegion {
    pub name: String,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub margin: f64,
    pub periodic: bool,
}

impl CompactRegion {
    /// Region on a periodic `lx x ly` torus; `margin` is infinite.
    pub fn periodic(name: &str, x0: f64, x1: f64, y0: f64, y1: f64, lx: f64, ly: f64) -> Result<Self> {
        let ok = |a: f64, b: f64, l: f64| a.is_finite() && b.is_finite() && b > a && b - a <= l * (1.0 + 1e-12);
        if !ok(x0, x1, lx) || !ok(y0, y1, ly) {
            return Err(Error::InvalidArgument(format!(
                "region {name}: [{x0}, {x1}] x [{y0}, {y1}] is empty or larger than the {lx} x {ly} torus"
            )));
        }
        Ok(CompactRegion {
            name: name.into(),
            x0,
            x1,
            y0,
            y1,
            margin: f64::INFINITY,
            periodic: true,
        })
    }

    /// Region strictly inside the box `[0, lx] x [0, ly]`.
    pub fn interior(name: &str, x0: f64, x1: f64, y0: f64, y1: f64, lx: f64, ly: f64) -> Result<Self> {
        let margin = x0.min(lx - x1).min(y0).min(ly - y1);
        if !(x1 > x0 && y1 > y0) || !(margin > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "region {name}: [{x0}, {x1}] x [{y0}, {y1}] is not strictly inside [0, {lx}] x [0, {ly}]"
            )));
        }
        Ok(CompactRegion {
            name: name.into(),
            x0,
            x1,
            y0,
            y1,
            margin,
            periodic: false,
        })
    }

    /// The whole periodic domain of `grid`.
    pub fn whole(grid: &Grid) -> Self {
        CompactRegion {
            name: "whole".into(),
            x0: 0.0,
            x1: grid.lx(),
            y0: 0.0,
            y1: grid.ly(),
            margin: f64::INFINITY,
            periodic: true,
        }
    }

    /// Centred rectangle covering `fraction` of each axis of an `lx x ly`
    /// domain.
    pub fn centered(name: &str, fraction: f64, lx: f64, ly: f64, periodic: bool) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("region fraction {fraction} not in (0, 1]")));
        }
        let (hx, hy) = (fraction * lx / 2.0, fraction * ly / 2.0);
        let (cx, cy) = (lx / 2.0, ly / 2.0);
        if periodic {
            CompactRegion::periodic(name, cx - hx, cx + hx, cy - hy, cy + hy, lx, ly)
        } else {
            CompactRegion::interior(name, cx - hx, cx + hx, cy - hy, cy + hy, lx, ly)
        }
    }

    /// Default regions: centred rectangles spanning 1/2 and 3/4 of each axis.
    pub fn defaults(lx: f64, ly: f64, periodic: bool) -> Vec<Self> {
        vec![
            CompactRegion::centered("K_half", 0.5, lx, ly, periodic).expect("valid fraction"),
            CompactRegion::centered("K_three_quarter", 0.75, lx, ly, periodic).expect("valid fraction"),
        ]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Errors unless the region keeps at least `required` away from the
    /// domain boundary.
    pub fn check_margin(&self, required: f64) -> Result<()> {
        if self.margin < required {
            return Err(Error::Margin {
                region: self.name.clone(),
                detail: format!("margin {} < required {}", self.margin, required),
            });
        }
        Ok(())
    }

    /// Per-node quadrature weights in `[0, 1]`: the fraction of the node's
    /// cell `[x - dx/2, x + dx/2] x [y - dy/2, y + dy/2]` lying in the region
    /// (periodically wrapped). Multiply by the cell area to integrate.
    pub fn cell_weights(&self, grid: &Grid) -> Vec<f64> {
        let wx = axis_weights(self.x0, self.x1, grid.nx(), grid.dx(), grid.lx());
        let wy = axis_weights(self.y0, self.y1, grid.ny(), grid.dy(), grid.ly());
        let mut w = Vec::with_capacity(grid.len());
        for &b in &wy {
            for &a in &wx {
                w.push(a * b);
            }
        }
        w
    }

    /// Indices and weights of nodes with nonzero cell overlap.
    pub fn weighted_nodes(&self, grid: &Grid) -> Vec<(usize, usize, f64)> {
        let wx = axis_weights(self.x0, self.x1, grid.nx(), grid.dx(), grid.lx());
        let wy = axis_weights(self.y0, self.y1, grid.ny(), grid.dy(), grid.ly());
        let mut out = Vec::new();
        for (j, &b) in wy.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (i, &a) in wx.iter().enumerate() {
                if a > 0.0 {
                    out.push((i, j, a * b));
                }
            }
        }
        out
    }
}

/// Fraction of each periodic cell `[i h - h/2, i h + h/2]` covered by `[a, b]`.
fn axis_weights(a: f64, b: f64, n: usize, h: f64, l: f64) -> Vec<f64> {
    if b - a >= l * (1.0 - 1e-12) {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| {
            let c = i as f64 * h;
            let (lo, hi) = (c - h / 2.0, c + h / 2.0);
            // the interval may wrap; test the three nearest periodic images
            let mut cover = 0.0;
            for shift in [-l, 0.0, l] {
                let (aa, bb) = (a + shift, b + shift);
                cover += (hi.min(bb) - lo.max(aa)).max(0.0);
            }
            (cover / h).min(1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn whole_torus_weights_are_one() {
        let g = Grid::square(16).unwrap();
        assert!(CompactRegion::whole(&g).cell_weights(&g).iter().all(|&w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn weights_integrate_area() {
        let g = Grid::square(32).unwrap();
        for k in CompactRegion::defaults(2.0 * PI, 2.0 * PI, true) {
            let s: f64 = k.cell_weights(&g).iter().sum::<f64>() * g.cell_area();
            assert!((s - k.area()).abs() < 1e-12, "{}", k.name);
        }
        let wrap = CompactRegion::periodic("wrap", 5.0, 7.0, -1.0, 1.0, 2.0 * PI, 2.0 * PI).unwrap();
        let s: f64 = wrap.cell_weights(&g).iter().sum::<f64>() * g.cell_area();
        assert!((s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interior_region_margin() {
        let k = CompactRegion::interior("k", 1.0, 2.0, 0.5, 2.0, 3.0, PI).unwrap();
        assert!((k.margin - 0.5).abs() < 1e-15);
        assert!(k.check_margin(0.4).is_ok());
        let err = k.check_margin(0.6).unwrap_err();
        assert!(err.to_string().contains("region k"));
        assert!(CompactRegion::interior("edge", 0.0, 1.0, 0.5, 1.0, 2.0, 2.0).is_err());
    }
}
