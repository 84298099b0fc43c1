//! Signed distance fields from binary masks via the exact Euclidean
//! distance transform of Felzenszwalb and Huttenlocher.

use ndarray::Array2;

use crate::error::{Error, Result};

const FAR: f64 = 1e20;

/// Lower envelope of parabolas: `d[q] = min_p (q − p)² + f[p]`.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let intersect = |p: usize| {
            ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
        };
        let mut s = intersect(v[k]);
        // z[0] = −∞ stops the loop at k = 0.
        while s <= z[k] {
            k -= 1;
            s = intersect(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Squared distance (pixel units) from every pixel to the nearest pixel
/// where `feature` is true.
pub fn squared_edt(feature: &Array2<bool>) -> Array2<f64> {
    let (rows, cols) = feature.dim();
    let mut grid = feature.mapv(|f| if f { 0.0 } else { FAR });
    let len = rows.max(cols);
    let (mut f, mut d) = (vec![0.0; len], vec![0.0; len]);
    let (mut v, mut z) = (vec![0usize; len], vec![0.0; len + 1]);
    for mut col in grid.columns_mut() {
        f[..rows].iter_mut().zip(col.iter()).for_each(|(a, b)| *a = *b);
        edt_1d(&f[..rows], &mut d[..rows], &mut v, &mut z);
        col.iter_mut().zip(&d[..rows]).for_each(|(a, b)| *a = *b);
    }
    for mut row in grid.rows_mut() {
        f[..cols].iter_mut().zip(row.iter()).for_each(|(a, b)| *a = *b);
        edt_1d(&f[..cols], &mut d[..cols], &mut v, &mut z);
        row.iter_mut().zip(&d[..cols]).for_each(|(a, b)| *a = *b);
    }
    grid
}

/// Unnormalized signed distance `d_out − d_in`: positive outside the mask,
/// negative inside.
pub fn signed_distance(mask: &Array2<u8>) -> Result<Array2<f64>> {
    let inside = mask.iter().filter(|&&v| v != 0).count();
    if inside == 0 || inside == mask.len() {
        return Err(Error::invalid("signed distance needs a mask with both inside and outside pixels"));
    }
    let d_out = squared_edt(&mask.mapv(|v| v != 0));
    let d_in = squared_edt(&mask.mapv(|v| v == 0));
    Ok(ndarray::Zip::from(&d_out)
        .and(&d_in)
        .map_collect(|o, i| o.sqrt() - i.sqrt()))
}

/// Signed distance scaled so that `max |s| = 1`.
pub fn signed_distance_field(mask: &Array2<u8>) -> Result<Array2<f64>> {
    let s = signed_distance(mask)?;
    let max = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(s.mapv(|v| v / max))
}
