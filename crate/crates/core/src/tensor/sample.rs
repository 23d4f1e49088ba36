use super::{FeatureMap, Plane};
use crate::error::{domain, Result};

/// The four-pixel footprint of a bilinear lookup at normalised `(u, v)`.
///
/// `u` maps to row `u·(H−1)`, `v` to column `v·(W−1)`. Indices are clamped so
/// that `u = 1` resolves to the last cell with `a = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearStencil {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
    /// Fractional row offset inside the cell.
    pub a: f64,
    /// Fractional column offset inside the cell.
    pub b: f64,
    /// d(row)/du, i.e. H−1.
    pub row_scale: f64,
    /// d(col)/dv, i.e. W−1.
    pub col_scale: f64,
}

impl BilinearStencil {
    pub fn new(u: f64, v: f64, height: usize, width: usize) -> Self {
        let (i0, i1, a) = axis(u, height);
        let (j0, j1, b) = axis(v, width);
        Self {
            i0,
            i1,
            j0,
            j1,
            a,
            b,
            row_scale: (height - 1) as f64,
            col_scale: (width - 1) as f64,
        }
    }

    /// Corner weights in the order (i0,j0), (i1,j0), (i0,j1), (i1,j1).
    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (a, b) = (self.a, self.b);
        [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b]
    }

    #[inline]
    pub fn corners(&self) -> [(usize, usize); 4] {
        [
            (self.i0, self.j0),
            (self.i1, self.j0),
            (self.i0, self.j1),
            (self.i1, self.j1),
        ]
    }

    #[inline]
    pub fn eval(&self, plane: &[f64], width: usize) -> f64 {
        let w = self.weights();
        self.corners()
            .iter()
            .zip(w)
            .map(|(&(i, j), wt)| wt * plane[i * width + j])
            .sum()
    }

    /// Partial derivatives of the sampled value with respect to `(u, v)`.
    #[inline]
    pub fn coord_grad(&self, plane: &[f64], width: usize) -> (f64, f64) {
        let at = |i: usize, j: usize| plane[i * width + j];
        let (a, b) = (self.a, self.b);
        let x00 = at(self.i0, self.j0);
        let x10 = at(self.i1, self.j0);
        let x01 = at(self.i0, self.j1);
        let x11 = at(self.i1, self.j1);
        let d_a = (x10 - x00) * (1.0 - b) + (x11 - x01) * b;
        let d_b = (x01 - x00) * (1.0 - a) + (x11 - x10) * a;
        (d_a * self.row_scale, d_b * self.col_scale)
    }
}

fn axis(t: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let x = t * (n - 1) as f64;
    let i0 = (x.floor().max(0.0) as usize).min(n - 2);
    (i0, i0 + 1, x - i0 as f64)
}

fn check_unit(u: f64, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return domain(format!("sample coordinate ({u}, {v}) outside [0,1]^2"));
    }
    Ok(())
}

/// Bilinear value of one channel at normalised coordinates.
pub fn bilinear_at(map: &FeatureMap, u: f64, v: f64, channel: usize) -> Result<f64> {
    check_unit(u, v)?;
    if channel >= map.channels() {
        return domain(format!(
            "channel {channel} out of range for {} channels",
            map.channels()
        ));
    }
    let s = BilinearStencil::new(u, v, map.height(), map.width());
    Ok(s.eval(map.channel(channel), map.width()))
}

pub fn bilinear_plane(plane: &Plane, u: f64, v: f64) -> Result<f64> {
    check_unit(u, v)?;
    let s = BilinearStencil::new(u, v, plane.height(), plane.width());
    Ok(s.eval(plane.data(), plane.width()))
}

/// Strided sampling: `out(i, j) = in(i·stride, j·stride)`.
pub fn decimate(map: &FeatureMap, stride: usize) -> Result<FeatureMap> {
    let planes = map
        .planes()
        .iter()
        .map(|p| decimate_plane(p, stride))
        .collect::<Result<Vec<_>>>()?;
    FeatureMap::from_planes(&planes)
}

pub fn decimate_plane(plane: &Plane, stride: usize) -> Result<Plane> {
    if stride < 2 {
        return domain(format!("decimation stride must be >= 2, got {stride}"));
    }
    let h = plane.height().div_ceil(stride);
    let w = plane.width().div_ceil(stride);
    Ok(Plane::from_fn(h, w, |i, j| plane.get(i * stride, j * stride)))
}

/// Uniform bilinear resize with corner-aligned sampling (output pixel `i`
/// reads input row `i·(H_in−1)/(H_out−1)`).
pub fn resize_bilinear(plane: &Plane, out_h: usize, out_w: usize) -> Plane {
    let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    Plane::from_fn(out_h, out_w, |i, j| {
        let s = BilinearStencil::new(norm(i, out_h), norm(j, out_w), plane.height(), plane.width());
        s.eval(plane.data(), plane.width())
    })
}
