//! Central finite-difference validation of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetError, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Number of coordinates to sample (all of them when the model is
    /// smaller).
    pub samples: usize,
    /// Central-difference step.
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            samples: 200,
            step: 1e-5,
            seed: 0,
        }
    }
}

/// Compares `analytic` against central finite differences of `loss` at
/// `params`, over sampled coordinates. Returns the maximum of
/// `|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
///
/// The loss closure must be deterministic (dropout disabled).
pub fn grad_check<F>(
    loss: F,
    params: &[Tensor],
    analytic: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<f64, NetError>
where
    F: Fn(&[Tensor]) -> Result<f64, NetError>,
{
    if params.len() != analytic.len() {
        return Err(NetError::ShapeMismatch {
            context: "grad_check",
            detail: format!("{} params vs {} gradient tensors", params.len(), analytic.len()),
        });
    }
    let total: usize = params.iter().map(Tensor::len).sum();
    if total == 0 {
        return Ok(0.0);
    }

    let coords = sample_coords(total, opts.samples, opts.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0f64;

    for flat in coords {
        let (ti, ei) = locate(params, flat);
        let original = work[ti].data()[ei];

        work[ti].data_mut()[ei] = original + opts.step;
        let up = loss(&work)?;
        work[ti].data_mut()[ei] = original - opts.step;
        let down = loss(&work)?;
        work[ti].data_mut()[ei] = original;

        let fd = (up - down) / (2.0 * opts.step);
        let ad = analytic[ti].data()[ei];
        let rel = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

fn locate(params: &[Tensor], mut flat: usize) -> (usize, usize) {
    for (i, t) in params.iter().enumerate() {
        if flat < t.len() {
            return (i, flat);
        }
        flat -= t.len();
    }
    unreachable!("flat coordinate within total length");
}

fn sample_coords(total: usize, samples: usize, seed: u64) -> Vec<usize> {
    if total <= samples {
        return (0..total).collect();
    }
    // Partial Fisher-Yates over the index range: distinct coordinates,
    // deterministic for a given seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..total).collect();
    for k in 0..samples {
        let j = rng.gen_range(k..total);
        indices.swap(k, j);
    }
    indices.truncate(samples);
    indices
}
