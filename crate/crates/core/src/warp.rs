//! Attention-driven non-uniform resampling.
//!
//! [`map_coordinates`] turns an attention map into a covering grid of
//! normalised sampling positions; [`modulate`] samples a feature map on that
//! grid with border-clamped bilinear interpolation.

use crate::attention::AttentionMap;
use crate::error::{config, domain, Result};
use crate::tensor::{BilinearStencil, FeatureMap, LabelMap, Plane, Tensor};
use crate::Error;

/// H×W sampling positions `(u, v) ∈ [0,1]²`; `u` runs down the rows and
/// `v` along the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl CoordinateGrid {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return domain(format!("grid extents must be >= 2, got {height}x{width}"));
        }
        if u.len() != height * width || v.len() != height * width {
            return domain(format!("{height}x{width} grid needs {} positions per axis", height * width));
        }
        if u.iter().chain(&v).any(|x| !(0.0..=1.0).contains(x)) {
            return domain("grid positions must lie in [0,1]");
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    /// The uniform grid `u = i/(H−1)`, `v = j/(W−1)`.
    pub fn identity(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return domain(format!("grid extents must be >= 2, got {height}x{width}"));
        }
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                u.push(i as f64 / (height - 1) as f64);
                v.push(j as f64 / (width - 1) as f64);
            }
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.width + j]
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.width + j]
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }

    /// Positions as `(u, v)` pairs, row-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.u.iter().copied().zip(self.v.iter().copied()).collect()
    }

    /// Shape `(2,H,W)`: the u-plane then the v-plane.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = self.u.clone();
        data.extend_from_slice(&self.v);
        Tensor::new(vec![2, self.height, self.width], data).expect("grid shape is valid")
    }

    pub fn from_tensor(tensor: &Tensor) -> Result<Self> {
        let shape = tensor.shape();
        if shape.len() != 3 || shape[0] != 2 {
            return domain(format!("coordinate grid needs shape (2,H,W), got {shape:?}"));
        }
        let n = shape[1] * shape[2];
        let data = tensor.data();
        Self::new(shape[1], shape[2], data[..n].to_vec(), data[n..].to_vec())
    }

    /// Keeps every `stride`-th position on both axes, matching
    /// [`crate::tensor::decimate`].
    pub fn decimate(&self, stride: usize) -> Result<Self> {
        if stride < 2 {
            return domain(format!("stride must be >= 2, got {stride}"));
        }
        let h = self.height.div_ceil(stride);
        let w = self.width.div_ceil(stride);
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                u.push(self.u(i * stride, j * stride));
                v.push(self.v(i * stride, j * stride));
            }
        }
        Self::new(h, w, u, v)
    }

    /// Border rows/columns pinned to 0 and 1 exactly.
    pub fn is_covering(&self) -> bool {
        let (h, w) = (self.height, self.width);
        (0..w).all(|j| self.u(0, j) == 0.0 && self.u(h - 1, j) == 1.0)
            && (0..h).all(|i| self.v(i, 0) == 0.0 && self.v(i, w - 1) == 1.0)
    }

    /// Largest decrease of `u` down a column or of `v` along a row; zero for
    /// a monotone grid.
    pub fn monotonicity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.height {
            for j in 0..self.width {
                if i + 1 < self.height {
                    worst = worst.max(self.u(i, j) - self.u(i + 1, j));
                }
                if j + 1 < self.width {
                    worst = worst.max(self.v(i, j) - self.v(i, j + 1));
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &CoordinateGrid) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Truncated Gaussian distance kernel with integer radius `σ`, window
/// `(2σ+1)²` and standard deviation `σ`. The normalising prefactor is
/// omitted since it cancels in the coordinate ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianKernel {
    radius: usize,
}

impl GaussianKernel {
    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return config("kernel radius must be >= 1");
        }
        Ok(Self { radius })
    }

    /// `round(max(H,W)/8)`, at least 1.
    pub fn for_extent(height: usize, width: usize) -> Self {
        let r = (height.max(width) as f64 / 8.0).round() as usize;
        Self { radius: r.max(1) }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn window(&self) -> usize {
        2 * self.radius + 1
    }

    /// One-dimensional taps `exp(−t²/(2σ²))` for `t = −σ..=σ`.
    pub fn taps(&self) -> Vec<f64> {
        let s = self.radius as f64;
        (-(self.radius as isize)..=self.radius as isize)
            .map(|t| (-((t * t) as f64) / (2.0 * s * s)).exp())
            .collect()
    }

    /// Weight between two positions offset by `(di, dj)`; zero outside the window.
    pub fn weight(&self, di: isize, dj: isize) -> f64 {
        let r = self.radius as isize;
        if di.abs() > r || dj.abs() > r {
            return 0.0;
        }
        let s = self.radius as f64;
        (-((di * di + dj * dj) as f64) / (2.0 * s * s)).exp()
    }

    fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.window() > 2 * height.min(width) {
            return config(format!(
                "kernel window {} exceeds twice the {height}x{width} map",
                self.window()
            ));
        }
        Ok(())
    }
}

#[inline]
fn reflect(x: isize, n: usize) -> usize {
    let n = n as isize;
    let y = if x < 0 { -x } else { x };
    (if y > n - 1 { 2 * (n - 1) - y } else { y }) as usize
}

/// Valid correlation of a padded `(h+2r)×(w+2r)` field with separable taps.
fn correlate(field: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let pw = w + taps.len() - 1;
    let ph = h + taps.len() - 1;
    let mut rows = vec![0.0; ph * w];
    for p in 0..ph {
        for j in 0..w {
            rows[p * w + j] = taps.iter().enumerate().map(|(b, g)| g * field[p * pw + j + b]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = taps.iter().enumerate().map(|(a, g)| g * rows[(i + a) * w + j]).sum();
        }
    }
    out
}

/// Adjoint of [`correlate`]: scatters an `h×w` field onto the padded grid.
fn correlate_adjoint(field: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ph, pw) = (h + k - 1, w + k - 1);
    let mut rows = vec![0.0; ph * w];
    for i in 0..h {
        for j in 0..w {
            let g = field[i * w + j];
            for (a, t) in taps.iter().enumerate() {
                rows[(i + a) * w + j] += t * g;
            }
        }
    }
    let mut out = vec![0.0; ph * pw];
    for p in 0..ph {
        for j in 0..w {
            let g = rows[p * w + j];
            for (b, t) in taps.iter().enumerate() {
                out[p * pw + j + b] += t * g;
            }
        }
    }
    out
}

/// Forward state of [`map_coordinates`], kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MapCoordinatesForward {
    kernel: GaussianKernel,
    den: Vec<f64>,
    raw_u: Vec<f64>,
    raw_v: Vec<f64>,
    grid: CoordinateGrid,
}

impl MapCoordinatesForward {
    pub fn grid(&self) -> &CoordinateGrid {
        &self.grid
    }

    pub fn into_grid(self) -> CoordinateGrid {
        self.grid
    }

    /// Gradient with respect to the attention values, given gradients with
    /// respect to the grid's `u` and `v` planes.
    pub fn vjp(&self, grad_u: &[f64], grad_v: &[f64]) -> Plane {
        let (h, w) = (self.grid.height, self.grid.width);
        let r = self.kernel.radius;
        let mut g_raw_u = vec![0.0; h * w];
        let mut g_raw_v = vec![0.0; h * w];
        // renormalisation u = (ũ − ũ₀)/(ũ_last − ũ₀), per column for u
        for j in 0..w {
            let a = self.raw_u[j];
            let d = self.raw_u[(h - 1) * w + j] - a;
            let (mut ga, mut gb) = (0.0, 0.0);
            for i in 0..h {
                let g = grad_u[i * w + j];
                let u = self.grid.u(i, j);
                g_raw_u[i * w + j] += g / d;
                ga += g * (u - 1.0) / d;
                gb -= g * u / d;
            }
            g_raw_u[j] += ga;
            g_raw_u[(h - 1) * w + j] += gb;
        }
        for i in 0..h {
            let a = self.raw_v[i * w];
            let d = self.raw_v[i * w + w - 1] - a;
            let (mut ga, mut gb) = (0.0, 0.0);
            for j in 0..w {
                let g = grad_v[i * w + j];
                let v = self.grid.v(i, j);
                g_raw_v[i * w + j] += g / d;
                ga += g * (v - 1.0) / d;
                gb -= g * v / d;
            }
            g_raw_v[i * w] += ga;
            g_raw_v[i * w + w - 1] += gb;
        }
        // ratio ũ = nu/den
        let mut g_nu = vec![0.0; h * w];
        let mut g_nv = vec![0.0; h * w];
        let mut g_den = vec![0.0; h * w];
        for k in 0..h * w {
            let den = self.den[k];
            g_nu[k] = g_raw_u[k] / den;
            g_nv[k] = g_raw_v[k] / den;
            g_den[k] = -(g_raw_u[k] * self.raw_u[k] + g_raw_v[k] * self.raw_v[k]) / den;
        }
        let taps = self.kernel.taps();
        let p_den = correlate_adjoint(&g_den, h, w, &taps);
        let p_nu = correlate_adjoint(&g_nu, h, w, &taps);
        let p_nv = correlate_adjoint(&g_nv, h, w, &taps);
        let pw = w + 2 * r;
        let mut out = Plane::zeros(h, w);
        let data = out.data_mut();
        for p in 0..h + 2 * r {
            let ci = p as f64 - r as f64;
            let si = reflect(p as isize - r as isize, h);
            for q in 0..pw {
                let cj = q as f64 - r as f64;
                let sj = reflect(q as isize - r as isize, w);
                let k = p * pw + q;
                data[si * w + sj] += p_den[k] + ci * p_nu[k] + cj * p_nv[k];
            }
        }
        out
    }
}

/// Attention- and kernel-weighted average of neighbour coordinates, with
/// the attention reflect-padded by `σ` and each axis affinely renormalised
/// so the border maps exactly onto `{0, 1}`.
pub fn map_coordinates_forward(attn: &AttentionMap, kernel: GaussianKernel) -> Result<MapCoordinatesForward> {
    let (h, w) = (attn.height(), attn.width());
    if h < 2 || w < 2 {
        return domain(format!("attention extents must be >= 2, got {h}x{w}"));
    }
    kernel.check(h, w)?;
    let r = kernel.radius;
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let mut padded = vec![0.0; ph * pw];
    let mut weighted_i = vec![0.0; ph * pw];
    let mut weighted_j = vec![0.0; ph * pw];
    for p in 0..ph {
        let si = reflect(p as isize - r as isize, h);
        for q in 0..pw {
            let sj = reflect(q as isize - r as isize, w);
            let s = attn.get(si, sj);
            let k = p * pw + q;
            padded[k] = s;
            weighted_i[k] = s * (p as f64 - r as f64);
            weighted_j[k] = s * (q as f64 - r as f64);
        }
    }
    let taps = kernel.taps();
    let den = correlate(&padded, h, w, &taps);
    let nu = correlate(&weighted_i, h, w, &taps);
    let nv = correlate(&weighted_j, h, w, &taps);
    let raw_u: Vec<f64> = nu.iter().zip(&den).map(|(n, d)| n / d).collect();
    let raw_v: Vec<f64> = nv.iter().zip(&den).map(|(n, d)| n / d).collect();

    let mut u = vec![0.0; h * w];
    let mut v = vec![0.0; h * w];
    for j in 0..w {
        let a = raw_u[j];
        let d = raw_u[(h - 1) * w + j] - a;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Numerical(format!("degenerate row span in column {j}")));
        }
        for i in 0..h {
            u[i * w + j] = ((raw_u[i * w + j] - a) / d).clamp(0.0, 1.0);
        }
    }
    for i in 0..h {
        let a = raw_v[i * w];
        let d = raw_v[i * w + w - 1] - a;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Numerical(format!("degenerate column span in row {i}")));
        }
        for j in 0..w {
            v[i * w + j] = ((raw_v[i * w + j] - a) / d).clamp(0.0, 1.0);
        }
    }
    Ok(MapCoordinatesForward {
        kernel,
        den,
        raw_u,
        raw_v,
        grid: CoordinateGrid::new(h, w, u, v)?,
    })
}

/// See [`map_coordinates_forward`].
pub fn map_coordinates(attn: &AttentionMap, kernel: GaussianKernel) -> Result<CoordinateGrid> {
    Ok(map_coordinates_forward(attn, kernel)?.grid)
}

/// Samples every channel of `map` at the grid positions.
pub fn sample_grid(map: &FeatureMap, grid: &CoordinateGrid) -> FeatureMap {
    let (h, w) = (grid.height, grid.width);
    let mut out = FeatureMap::zeros(map.channels(), h, w).expect("grid extents are >= 2");
    let stencils: Vec<BilinearStencil> = grid
        .points()
        .into_iter()
        .map(|(u, v)| BilinearStencil::new(u, v, map.height(), map.width()))
        .collect();
    for c in 0..map.channels() {
        let src = map.channel(c);
        for (dst, st) in out.channel_mut(c).iter_mut().zip(&stencils) {
            *dst = st.eval(src, map.width());
        }
    }
    out
}

/// Gradient of a scalar with respect to the grid's `(u, v)` planes given
/// its gradient with respect to [`sample_grid`]'s output.
pub fn sample_grid_vjp(map: &FeatureMap, grid: &CoordinateGrid, grad: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let n = grid.height * grid.width;
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    for (k, (u, v)) in grid.points().into_iter().enumerate() {
        let st = BilinearStencil::new(u, v, map.height(), map.width());
        for c in 0..map.channels() {
            let g = grad.channel(c)[k];
            if g == 0.0 {
                continue;
            }
            let (du, dv) = st.coord_grad(map.channel(c), map.width());
            gu[k] += g * du;
            gv[k] += g * dv;
        }
    }
    (gu, gv)
}

/// Non-uniformly resamples `map` under `attn`; returns the modulated map and
/// the grid needed to demodulate it.
pub fn modulate(map: &FeatureMap, attn: &AttentionMap, kernel: GaussianKernel) -> Result<(FeatureMap, CoordinateGrid)> {
    if attn.height() != map.height() || attn.width() != map.width() {
        return domain(format!(
            "attention is {}x{}, feature map is {}x{}",
            attn.height(),
            attn.width(),
            map.height(),
            map.width()
        ));
    }
    let grid = map_coordinates(attn, kernel)?;
    Ok((sample_grid(map, &grid), grid))
}

/// `np.gradient`-style derivative along one axis: central inside, one-sided
/// at the ends.
fn axis_diff(values: &[f64], h: usize, w: usize, along_rows: bool) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let (n, step) = if along_rows { (h, w) } else { (w, 1) };
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let pos = if along_rows { i } else { j };
            out[k] = if pos == 0 {
                values[k + step] - values[k]
            } else if pos == n - 1 {
                values[k] - values[k - step]
            } else {
                0.5 * (values[k + step] - values[k - step])
            };
        }
    }
    out
}

/// Sampling density: reciprocal of the local cell area of the grid in pixel
/// units, normalised to mean 1. Larger values mean denser sampling.
pub fn density(grid: &CoordinateGrid) -> Plane {
    let (h, w) = (grid.height, grid.width);
    let su = (h - 1) as f64;
    let sv = (w - 1) as f64;
    let pu: Vec<f64> = grid.u.iter().map(|x| x * su).collect();
    let pv: Vec<f64> = grid.v.iter().map(|x| x * sv).collect();
    let (du_i, du_j) = (axis_diff(&pu, h, w, true), axis_diff(&pu, h, w, false));
    let (dv_i, dv_j) = (axis_diff(&pv, h, w, true), axis_diff(&pv, h, w, false));
    let d: Vec<f64> = (0..h * w)
        .map(|k| 1.0 / (du_i[k] * dv_j[k] - du_j[k] * dv_i[k]).max(1e-6))
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Plane::new(h, w, d.into_iter().map(|x| x / mean).collect()).expect("grid extents are valid")
}

/// Mean density over output pixels whose sample lands on a label-boundary
/// pixel, divided by the mean density elsewhere.
pub fn boundary_density_ratio(grid: &CoordinateGrid, labels: &LabelMap) -> Result<f64> {
    if labels.height() != grid.height || labels.width() != grid.width {
        return domain("label map and grid extents differ");
    }
    let d = density(grid);
    let mask = labels.boundary_mask();
    let (h, w) = (grid.height, grid.width);
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (k, (u, v)) in grid.points().into_iter().enumerate() {
        let i = ((u * (h - 1) as f64).round() as usize).min(h - 1);
        let j = ((v * (w - 1) as f64).round() as usize).min(w - 1);
        if mask[i * w + j] {
            on += d.data()[k];
            n_on += 1;
        } else {
            off += d.data()[k];
            n_off += 1;
        }
    }
    if n_on == 0 || n_off == 0 {
        return domain("boundary density ratio needs samples on and off label boundaries");
    }
    Ok((on / n_on as f64) / (off / n_off as f64))
}
