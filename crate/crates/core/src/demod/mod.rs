//! Demodulation: barycentric upsampling from the non-uniform sampling
//! positions, refined by cascaded local pixel relation modules.

mod lprm;
mod mesh;
mod nuu;

pub use lprm::{
    lprm_refine, lprm_refine_vjp, lprm_relation, lprm_relation_vjp, CascadeForward, CascadeGrad, LprmCascade,
    LprmStage, LprmStageGrad, RefineMode, RelationField, CENTRE, DEFAULT_DILATIONS, RELATIONS,
};
pub use mesh::{barycentric_weights, triangulate, TriangleMesh};
pub use nuu::{nuu_upsample, Interpolator};

use crate::error::{domain, Result};
use crate::tensor::FeatureMap;
use crate::warp::CoordinateGrid;

/// Upsamples the prediction and compressed feature from their sampling grid
/// onto an `out_h×out_w` lattice, then runs the relation cascade.
pub fn msau(
    pred: &FeatureMap,
    xcomp: &FeatureMap,
    grid: &CoordinateGrid,
    cascade: &LprmCascade,
    out_h: usize,
    out_w: usize,
) -> Result<FeatureMap> {
    if (pred.height(), pred.width()) != (xcomp.height(), xcomp.width()) {
        return domain("prediction and compressed feature extents differ");
    }
    let interp = Interpolator::new(grid, out_h, out_w)?;
    cascade.run(&interp.apply(pred)?, &interp.apply(xcomp)?)
}
