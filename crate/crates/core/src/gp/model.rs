use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{GpError, Kernel, Point};

/// Default diagonal nugget, relative to the kernel's prior variance.
pub const DEFAULT_NUGGET: f64 = 1e-6;

/// Posterior mean and variance at a list of target locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A zero-mean GP conditioned on point evidence.
///
/// Immutable after construction. The evidence covariance is factorized once,
/// so repeated posterior queries only pay for the cross-covariances.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    locations: Arc<[Point]>,
    sensed: Vec<usize>,
    observations: Vec<f64>,
    nugget: f64,
    factor: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
}

impl GpModel {
    /// A model with no evidence.
    pub fn prior(kernel: Kernel, locations: Arc<[Point]>) -> Result<Self, GpError> {
        Self::new(kernel, locations, Vec::new(), Vec::new())
    }

    pub fn new(
        kernel: Kernel,
        locations: Arc<[Point]>,
        sensed: Vec<usize>,
        observations: Vec<f64>,
    ) -> Result<Self, GpError> {
        Self::with_nugget(kernel, locations, sensed, observations, DEFAULT_NUGGET)
    }

    pub fn with_nugget(
        kernel: Kernel,
        locations: Arc<[Point]>,
        sensed: Vec<usize>,
        observations: Vec<f64>,
        nugget: f64,
    ) -> Result<Self, GpError> {
        kernel.validate()?;
        if sensed.len() != observations.len() {
            return Err(GpError::EvidenceLength {
                sensed: sensed.len(),
                observations: observations.len(),
            });
        }
        let mut seen = HashSet::with_capacity(sensed.len());
        for &id in &sensed {
            if id >= locations.len() {
                return Err(GpError::UnknownLocation(id));
            }
            if !seen.insert(id) {
                return Err(GpError::DuplicateEvidence(id));
            }
        }
        let mut model = Self {
            kernel,
            locations,
            sensed,
            observations,
            nugget,
            factor: None,
            weights: DVector::zeros(0),
        };
        if !model.sensed.is_empty() {
            let cov = model.joint_cov(&model.sensed, &model.sensed);
            let chol = Cholesky::new(cov).ok_or(GpError::IllConditioned)?;
            model.weights = chol.solve(&DVector::from_column_slice(&model.observations));
            model.factor = Some(chol);
        }
        Ok(model)
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn locations(&self) -> &Arc<[Point]> {
        &self.locations
    }

    pub fn sensed(&self) -> &[usize] {
        &self.sensed
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Absolute diagonal jitter, `nugget * s²`.
    pub fn jitter(&self) -> f64 {
        self.nugget * self.kernel.variance()
    }

    /// Same evidence, different covariance parameters.
    pub fn with_kernel(&self, kernel: Kernel) -> Result<Self, GpError> {
        Self::with_nugget(
            kernel,
            self.locations.clone(),
            self.sensed.clone(),
            self.observations.clone(),
            self.nugget,
        )
    }

    pub(crate) fn check_ids(&self, ids: &[usize]) -> Result<(), GpError> {
        match ids.iter().find(|&&id| id >= self.locations.len()) {
            Some(&id) => Err(GpError::UnknownLocation(id)),
            None => Ok(()),
        }
    }

    /// Kernel matrix between two id lists, without any nugget.
    pub(crate) fn cross_cov(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let locs = &self.locations;
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.kernel.eval(&locs[rows[i]], &locs[cols[j]])
        })
    }

    /// Covariance of the nugget-regularized joint: `K + jitter * [same location]`.
    pub(crate) fn joint_cov(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let jitter = self.jitter();
        let locs = &self.locations;
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            let k = self.kernel.eval(&locs[rows[i]], &locs[cols[j]]);
            if rows[i] == cols[j] {
                k + jitter
            } else {
                k
            }
        })
    }

    /// Posterior mean `Σ_yA Σ_AA⁻¹ z_A` and variance `K(y,y) - Σ_yA Σ_AA⁻¹ Σ_Ay`.
    pub fn posterior(&self, targets: &[usize]) -> Result<Posterior, GpError> {
        if targets.is_empty() {
            return Err(GpError::NoTargets);
        }
        self.check_ids(targets)?;
        let prior_var = self.kernel.variance();
        let Some(chol) = &self.factor else {
            return Ok(Posterior {
                mean: vec![0.0; targets.len()],
                variance: vec![prior_var; targets.len()],
            });
        };
        let cross = self.cross_cov(&self.sensed, targets);
        let mean = cross.tr_mul(&self.weights);
        let mut half = cross;
        chol.l_dirty().solve_lower_triangular_mut(&mut half);
        // only the lower triangle of the factor is meaningful
        let variance = half
            .column_iter()
            .map(|col| (prior_var - col.norm_squared()).max(0.0))
            .collect();
        Ok(Posterior {
            mean: mean.iter().copied().collect(),
            variance,
        })
    }

    /// Posterior mean at every location.
    pub fn mean_field(&self) -> Result<Vec<f64>, GpError> {
        let all: Vec<usize> = (0..self.locations.len()).collect();
        Ok(self.posterior(&all)?.mean)
    }
}
