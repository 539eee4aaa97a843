//! Dense numerics: matrices, the ReLU perceptron, Adam, random streams and
//! the checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod mlp;
pub mod rng;

use std::ops::Range;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{Matrix, Op};
pub use mlp::MlpParams;
pub use rng::RngStream;

use crate::error::Result;

/// Rows per gradient chunk. Fixed so that the reduction order, and thus
/// every trained weight, is independent of the thread count.
pub const GRAD_CHUNK: usize = 64;

/// Evaluates `f` on consecutive row ranges of `0..n` (possibly in parallel)
/// and sums the returned `(gradient, loss)` pairs in range order.
pub fn accumulate_chunks<F>(template: &MlpParams, n: usize, f: F) -> Result<(MlpParams, f64)>
where
    F: Fn(Range<usize>) -> Result<(MlpParams, f64)> + Sync + Send,
{
    let chunks = n.div_ceil(GRAD_CHUNK);
    let parts = crate::par::try_map_range(chunks, |c| {
        let lo = c * GRAD_CHUNK;
        f(lo..(lo + GRAD_CHUNK).min(n))
    })?;
    let mut total = template.zeros_like();
    let mut loss = 0.0;
    for (g, l) in parts {
        total.add_scaled(1.0, &g);
        loss += l;
    }
    Ok((total, loss))
}
