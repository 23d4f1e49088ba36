//! Non-uniform upsampling: barycentric interpolation of values known at
//! the grid's sampling positions onto a uniform output lattice.

use crate::error::{domain, Result};
use crate::tensor::FeatureMap;
use crate::warp::CoordinateGrid;

use super::mesh::TriangleMesh;

/// Sparse linear map from a grid-sampled field to a uniform `out_h×out_w`
/// lattice: three source indices and weights per output pixel.
#[derive(Debug, Clone)]
pub struct Interpolator {
    source: (usize, usize),
    output: (usize, usize),
    index: Vec<[usize; 3]>,
    weights: Vec<[f64; 3]>,
    extrapolated: usize,
}

impl Interpolator {
    /// Triangulates the grid and locates every output pixel
    /// `(i/(out_h−1), j/(out_w−1))`. Pixels outside the mesh are extended
    /// linearly from the triangle of least weight mass
    /// ([`TriangleMesh::extension`]).
    pub fn new(grid: &CoordinateGrid, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h < 2 || out_w < 2 {
            return domain(format!("output extents must be >= 2, got {out_h}x{out_w}"));
        }
        let mesh = TriangleMesh::new(&grid.points())?;
        let mut index = Vec::with_capacity(out_h * out_w);
        let mut weights = Vec::with_capacity(out_h * out_w);
        let mut extrapolated = 0;
        for i in 0..out_h {
            for j in 0..out_w {
                let q = (i as f64 / (out_h - 1) as f64, j as f64 / (out_w - 1) as f64);
                let t = match mesh.locate(q) {
                    Some(t) => t,
                    None => {
                        extrapolated += 1;
                        mesh.extension(q)
                    }
                };
                index.push(mesh.triangles()[t]);
                weights.push(mesh.weights(t, q));
            }
        }
        if extrapolated > 0 {
            log::warn!("{extrapolated} output pixels lie outside the sample hull; extrapolating linearly");
        }
        Ok(Self {
            source: (grid.height(), grid.width()),
            output: (out_h, out_w),
            index,
            weights,
            extrapolated,
        })
    }

    pub fn output_extent(&self) -> (usize, usize) {
        self.output
    }

    /// Number of output pixels that fell outside the mesh.
    pub fn extrapolated(&self) -> usize {
        self.extrapolated
    }

    pub fn apply(&self, map: &FeatureMap) -> Result<FeatureMap> {
        if (map.height(), map.width()) != self.source {
            return domain(format!(
                "feature map is {}x{}, grid is {}x{}",
                map.height(),
                map.width(),
                self.source.0,
                self.source.1
            ));
        }
        let (h, w) = self.output;
        let mut out = FeatureMap::zeros(map.channels(), h, w)?;
        for c in 0..map.channels() {
            let src = map.channel(c);
            for (dst, (idx, wt)) in out.channel_mut(c).iter_mut().zip(self.index.iter().zip(&self.weights)) {
                *dst = wt[0] * src[idx[0]] + wt[1] * src[idx[1]] + wt[2] * src[idx[2]];
            }
        }
        Ok(out)
    }

    /// Transpose of [`Interpolator::apply`].
    pub fn adjoint(&self, grad: &FeatureMap) -> Result<FeatureMap> {
        if (grad.height(), grad.width()) != self.output {
            return domain("gradient extents do not match the interpolator output");
        }
        let (h, w) = self.source;
        let mut out = FeatureMap::zeros(grad.channels(), h, w)?;
        for c in 0..grad.channels() {
            let g = grad.channel(c);
            let dst = out.channel_mut(c);
            for (k, (idx, wt)) in self.index.iter().zip(&self.weights).enumerate() {
                for r in 0..3 {
                    dst[idx[r]] += wt[r] * g[k];
                }
            }
        }
        Ok(out)
    }
}

/// Demodulates `modulated` (sampled at `grid`) onto a uniform lattice.
pub fn nuu_upsample(modulated: &FeatureMap, grid: &CoordinateGrid, out_h: usize, out_w: usize) -> Result<FeatureMap> {
    Interpolator::new(grid, out_h, out_w)?.apply(modulated)
}
