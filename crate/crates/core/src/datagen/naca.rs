//! NACA four-digit airfoil rasterization.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 256;
pub const CHORD_SAMPLES: usize = 401;
pub const CAMBER_RANGE: (f64, f64) = (0.01, 0.09);
pub const POSITION_RANGE: (f64, f64) = (0.1, 0.7);
pub const THICKNESS_RANGE: (f64, f64) = (0.1, 0.4);

/// Half-thickness `y_t(x)` for thickness ratio `t`.
pub fn thickness(t: f64, x: f64) -> f64 {
    5.0 * t * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4))
}

/// Camber line `y_c(x)` and slope `dy_c/dx`.
pub fn camber(m: f64, p: f64, x: f64) -> (f64, f64) {
    if m == 0.0 {
        (0.0, 0.0)
    } else if x < p {
        (m / (p * p) * (2.0 * p * x - x * x), 2.0 * m / (p * p) * (p - x))
    } else {
        let q = (1.0 - p) * (1.0 - p);
        (m / q * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x), 2.0 * m / q * (p - x))
    }
}

/// Closed outline in chord units: upper surface trailing edge to leading
/// edge, then lower surface back to the trailing edge.
pub fn outline(m: f64, p: f64, t: f64, samples: usize) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..samples)
        .map(|i| 0.5 * (1.0 - (PI * i as f64 / (samples - 1) as f64).cos()))
        .collect();
    let surface = |x: f64, sign: f64| {
        let yt = thickness(t, x);
        let (yc, slope) = camber(m, p, x);
        let theta = slope.atan();
        (x - sign * yt * theta.sin(), yc + sign * yt * theta.cos())
    };
    let mut pts: Vec<(f64, f64)> = xs.iter().rev().map(|&x| surface(x, 1.0)).collect();
    pts.extend(xs.iter().skip(1).map(|&x| surface(x, -1.0)));
    // The thickness polynomial closes the trailing edge; keep a single vertex there.
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if (first.0 - last.0).hypot(first.1 - last.1) < 1e-12 {
        pts.pop();
    }
    pts
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    };
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// True when two non-adjacent edges of the closed polygon properly cross.
pub fn self_intersects(poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Even-odd fill of a polygon given in pixel coordinates `(col, row)`;
/// a pixel is inside when its center is.
pub fn rasterize(poly: &[(f64, f64)], n: usize) -> Array2<u8> {
    let mut mask = Array2::zeros((n, n));
    let mut crossings = Vec::new();
    for r in 0..n {
        let yc = r as f64 + 0.5;
        crossings.clear();
        for i in 0..poly.len() {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % poly.len()];
            if (y0 <= yc) != (y1 <= yc) {
                crossings.push(x0 + (yc - y0) / (y1 - y0) * (x1 - x0));
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for pair in crossings.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let end = ((pair[1] - 0.5).ceil().max(0.0) as usize).min(n);
            for c in start..end {
                mask[[r, c]] = 1;
            }
        }
    }
    mask
}

/// Binary `n × n` mask of the NACA `(m, p, t)` airfoil, chord spanning the
/// central half of the grid.
pub fn naca_airfoil_mask(m: f64, p: f64, t: f64, n: usize) -> Result<Array2<u8>> {
    if n < 16 {
        return Err(Error::invalid(format!("airfoil grid must be at least 16, got {n}")));
    }
    if !(0.0..=CAMBER_RANGE.1).contains(&m)
        || !(POSITION_RANGE.0..=POSITION_RANGE.1).contains(&p)
        || !(THICKNESS_RANGE.0..=THICKNESS_RANGE.1).contains(&t)
    {
        return Err(Error::invalid(format!("NACA parameters out of range: m={m}, p={p}, t={t}")));
    }
    let nf = n as f64;
    let poly: Vec<(f64, f64)> = outline(m, p, t, CHORD_SAMPLES)
        .into_iter()
        .map(|(x, y)| (nf / 4.0 + x * nf / 2.0, nf / 2.0 - y * nf / 2.0))
        .collect();
    if self_intersects(&poly) {
        return Err(Error::invalid(format!("airfoil outline self-intersects: m={m}, p={p}, t={t}")));
    }
    Ok(rasterize(&poly, n))
}
