//! Monotone coupling of soups along an intensity grid by superposition.

use loopsoup::lattice::Rect;
use loopsoup::soup::DirectSampler;
use loopsoup::{Error, Result};

/// Checks that the grid is finite, non-negative and non-decreasing.
pub fn validate_grid(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Config("the intensity grid is empty".into()));
    }
    if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::Config("grid intensities must be finite and non-negative".into()));
    }
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("the intensity grid must be non-decreasing".into()));
    }
    Ok(())
}

/// For replicate `rep`, builds the occupied mask on the sampler's window
/// rectangle at each grid intensity in turn and hands it to `visit`. Layer
/// `j` carries the increment `alphas[j] - alphas[j - 1]`, so masks grow
/// pointwise along the grid.
pub fn for_each_level(
    sampler: &DirectSampler,
    rect: &Rect,
    rep: u64,
    alphas: &[f64],
    visit: &mut dyn FnMut(usize, &[bool]) -> Result<()>,
) -> Result<()> {
    let d = rect.dim();
    let mut occupied = vec![false; rect.len()];
    let mut prev = 0.0;
    for (j, &alpha) in alphas.iter().enumerate() {
        let layer = sampler.with_alpha(alpha - prev)?;
        layer.sample_into(rep, j as u64, &mut |flat| {
            for c in flat.chunks(d) {
                if let Some(i) = rect.index_of_coords(c) {
                    occupied[i] = true;
                }
            }
        });
        prev = alpha;
        visit(j, &occupied)?;
    }
    Ok(())
}
