//! Analytic cost model of feature-distance RDO versus sketched IDSE.
//!
//! FD-RDO runs the extractor on the original and on every candidate of
//! every block, `h w (n_r + 1) C`; the sketched Jacobian needs one forward
//! and `ell` backward passes at the extractor resolution, each backward
//! costing about two forwards, `h' w' (2 ell + 1) C`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlopEstimate {
    pub fd_flops: f64,
    pub idse_flops: f64,
    /// `fd_flops / idse_flops`.
    pub ratio: f64,
}

/// `c` is the per-pixel cost of one forward pass.
pub fn flop_estimate(h: u64, w: u64, h_r: u64, w_r: u64, n_r: u64, ell: u64, c: f64) -> Result<FlopEstimate> {
    if h == 0 || w == 0 || h_r == 0 || w_r == 0 || !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("flop estimate needs positive dimensions and cost"));
    }
    let fd_flops = (h * w) as f64 * (n_r + 1) as f64 * c;
    let idse_flops = (h_r * w_r) as f64 * (2 * ell + 1) as f64 * c;
    Ok(FlopEstimate {
        fd_flops,
        idse_flops,
        ratio: fd_flops / idse_flops,
    })
}
