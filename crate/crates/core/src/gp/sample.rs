use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GpError, Kernel, Point, DEFAULT_NUGGET};

/// Ground-truth process values at every location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvField {
    pub values: Vec<f64>,
    pub generator_kernel: Kernel,
    pub seed: u64,
}

/// Draws one field from the zero-mean prior `N(0, K + jitter I)` over `locations`.
///
/// If the covariance cannot be factorized the jitter is raised a hundredfold
/// and the factorization retried once.
pub fn sample_environment(
    kernel: Kernel,
    locations: &[Point],
    seed: u64,
) -> Result<EnvField, GpError> {
    kernel.validate()?;
    let n = locations.len();
    let build = |nugget: f64| {
        let jitter = nugget * kernel.variance();
        DMatrix::from_fn(n, n, |i, j| {
            let k = kernel.eval(&locations[i], &locations[j]);
            if i == j {
                k + jitter
            } else {
                k
            }
        })
    };
    let chol = Cholesky::new(build(DEFAULT_NUGGET))
        .or_else(|| Cholesky::new(build(DEFAULT_NUGGET * 100.0)))
        .ok_or(GpError::IllConditioned)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let values = chol.l() * z;
    Ok(EnvField {
        values: values.iter().copied().collect(),
        generator_kernel: kernel,
        seed,
    })
}
