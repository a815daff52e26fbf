//! Entropy and mutual information on the nugget-regularized joint Gaussian.

use std::collections::HashSet;
use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, DMatrix};

use super::{GpError, GpModel};

fn log_det(cov: DMatrix<f64>) -> Result<f64, GpError> {
    let chol = Cholesky::new(cov).ok_or(GpError::IllConditioned)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn dedup(ids: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().copied().filter(|id| seen.insert(*id)).collect()
}

impl GpModel {
    /// Covariance of `subset` given `given` under the prior joint (evidence values
    /// play no role in Gaussian conditional covariances).
    fn conditional_cov(&self, subset: &[usize], given: &[usize]) -> Result<DMatrix<f64>, GpError> {
        let mut cov = self.joint_cov(subset, subset);
        if given.is_empty() {
            return Ok(cov);
        }
        let chol = Cholesky::new(self.joint_cov(given, given)).ok_or(GpError::IllConditioned)?;
        let mut half = self.joint_cov(given, subset);
        chol.l_dirty().solve_lower_triangular_mut(&mut half);
        cov -= half.tr_mul(&half);
        Ok(cov)
    }

    /// Differential entropy (nats) of `subset ∖ given` conditioned on `given`,
    /// computed on the prior joint only. Members of `subset` that are already in
    /// `given` contribute nothing.
    pub fn prior_conditional_entropy(
        &self,
        subset: &[usize],
        given: &[usize],
    ) -> Result<f64, GpError> {
        self.check_ids(subset)?;
        self.check_ids(given)?;
        let given = dedup(given);
        let given_set: HashSet<usize> = given.iter().copied().collect();
        let rest: Vec<usize> = dedup(subset)
            .into_iter()
            .filter(|id| !given_set.contains(id))
            .collect();
        if rest.is_empty() {
            return Ok(0.0);
        }
        let ld = log_det(self.conditional_cov(&rest, &given)?)?;
        Ok(0.5 * (rest.len() as f64 * (2.0 * PI * E).ln() + ld))
    }

    /// Entropy of `subset`, conditioned on the model's sensed locations.
    pub fn entropy(&self, subset: &[usize]) -> Result<f64, GpError> {
        self.prior_conditional_entropy(subset, &self.sensed().to_vec())
    }

    /// Entropy of `subset` given `given` together with the sensed locations.
    pub fn conditional_entropy(&self, subset: &[usize], given: &[usize]) -> Result<f64, GpError> {
        let mut all = self.sensed().to_vec();
        all.extend_from_slice(given);
        self.prior_conditional_entropy(subset, &all)
    }

    /// Greedy mutual-information gain of adding `candidate` to `placed`:
    /// `½ ln(σ²(c | placed) / σ²(c | everything else))`.
    pub fn mi_gain(&self, placed: &[usize], candidate: usize) -> Result<f64, GpError> {
        Ok(self.mi_gains(placed, &[candidate])?[0])
    }

    /// [`GpModel::mi_gain`] for many candidates at once.
    ///
    /// Uses two factorizations in total: one of the placed block for the
    /// numerators, and one of the unplaced block (ordered with the candidates
    /// last) whose trailing factor yields `1 / (Σ_UU⁻¹)_cc` for the denominators.
    pub fn mi_gains(&self, placed: &[usize], candidates: &[usize]) -> Result<Vec<f64>, GpError> {
        self.check_ids(placed)?;
        self.check_ids(candidates)?;
        let placed = dedup(placed);
        let placed_set: HashSet<usize> = placed.iter().copied().collect();
        if let Some(&c) = candidates.iter().find(|c| placed_set.contains(c)) {
            return Err(GpError::CandidateAlreadyPlaced(c));
        }
        let candidates_u = dedup(candidates);
        if candidates_u.is_empty() {
            return Ok(Vec::new());
        }

        let prior = self.kernel().variance() + self.jitter();
        let numer: Vec<f64> = if placed.is_empty() {
            vec![prior; candidates_u.len()]
        } else {
            let chol =
                Cholesky::new(self.joint_cov(&placed, &placed)).ok_or(GpError::IllConditioned)?;
            let mut half = self.joint_cov(&placed, &candidates_u);
            chol.l_dirty().solve_lower_triangular_mut(&mut half);
            half.column_iter()
                .map(|col| prior - col.norm_squared())
                .collect()
        };

        let cand_set: HashSet<usize> = candidates_u.iter().copied().collect();
        let mut unplaced: Vec<usize> = (0..self.locations().len())
            .filter(|id| !placed_set.contains(id) && !cand_set.contains(id))
            .collect();
        let offset = unplaced.len();
        unplaced.extend_from_slice(&candidates_u);
        let chol =
            Cholesky::new(self.joint_cov(&unplaced, &unplaced)).ok_or(GpError::IllConditioned)?;
        let m = candidates_u.len();
        let tail = chol.l_dirty().view((offset, offset), (m, m)).into_owned();
        let mut inv = DMatrix::<f64>::identity(m, m);
        tail.solve_lower_triangular_mut(&mut inv);
        // (Σ_UU⁻¹)_cc is the squared norm of column c of the inverse factor
        let denom: Vec<f64> = inv
            .column_iter()
            .map(|col| 1.0 / col.norm_squared())
            .collect();

        let gain_of = |k: usize| {
            if !(denom[k] > 0.0) || !(numer[k] > 0.0) {
                0.0
            } else {
                0.5 * (numer[k] / denom[k]).ln()
            }
        };
        let by_id: std::collections::HashMap<usize, f64> = candidates_u
            .iter()
            .enumerate()
            .map(|(k, &id)| (id, gain_of(k)))
            .collect();
        Ok(candidates.iter().map(|id| by_id[id]).collect())
    }
}

/// `EN(L − A) − EN((L − A) | A)` over all locations, using the model's prior.
///
/// The model's own evidence is not included implicitly; pass it inside
/// `placed` to account for it.
pub fn mutual_information(gp: &GpModel, placed: &[usize]) -> Result<f64, GpError> {
    let placed = dedup(placed);
    let placed_set: HashSet<usize> = placed.iter().copied().collect();
    let rest: Vec<usize> = (0..gp.locations().len())
        .filter(|id| !placed_set.contains(id))
        .collect();
    if placed.is_empty() || rest.is_empty() {
        gp.check_ids(&placed)?;
        return Ok(0.0);
    }
    Ok(gp.prior_conditional_entropy(&rest, &[])? - gp.prior_conditional_entropy(&rest, &placed)?)
}

/// The symmetric form `EN(A) + EN(L − A) − EN(L)`.
pub fn mutual_information_symmetric(gp: &GpModel, placed: &[usize]) -> Result<f64, GpError> {
    let placed = dedup(placed);
    let placed_set: HashSet<usize> = placed.iter().copied().collect();
    let all: Vec<usize> = (0..gp.locations().len()).collect();
    let rest: Vec<usize> = all
        .iter()
        .copied()
        .filter(|id| !placed_set.contains(id))
        .collect();
    Ok(gp.prior_conditional_entropy(&placed, &[])?
        + gp.prior_conditional_entropy(&rest, &[])?
        - gp.prior_conditional_entropy(&all, &[])?)
}
