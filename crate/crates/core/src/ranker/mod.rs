//! Linear Thompson sampling with propensity-weighted updates.

mod online;

pub use online::{generate_click_log, run_online_ltr, TrajectoryPoint};

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::click_model::ExaminationModel;
use crate::math::PROB_EPS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinTsConfig {
    /// Ridge prior precision; `A` starts at `lambda * I`.
    pub lambda: f64,
    /// Posterior scale `sigma_n`.
    pub noise: f64,
}

impl Default for LinTsConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            noise: 1.0,
        }
    }
}

impl LinTsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "noise must be nonnegative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Bayesian ridge posterior over a linear scorer of `[q; d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinTsState {
    pub config: LinTsConfig,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

fn features(context: &[f64], item: &[f64]) -> DVector<f64> {
    DVector::from_iterator(context.len() + item.len(), context.iter().chain(item).copied())
}

impl LinTsState {
    pub fn new(dim: usize, config: LinTsConfig) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        Ok(Self {
            config,
            a: DMatrix::identity(dim, dim) * config.lambda,
            b: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.a.clone()).ok_or(Error::NotPositiveDefinite)
    }

    /// `A^-1 b`.
    pub fn posterior_mean(&self) -> Result<DVector<f64>> {
        Ok(self.cholesky()?.solve(&self.b))
    }

    /// Draws `theta ~ N(A^-1 b, sigma_n^2 A^-1)`.
    pub fn sample_theta<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let chol = self.cholesky()?;
        let mut theta = chol.solve(&self.b);
        if self.config.noise > 0.0 {
            // With A = L L^T, L^-T z has covariance A^-1.
            let z = DVector::from_iterator(
                self.dim(),
                (0..self.dim()).map(|_| StandardNormal.sample(&mut *rng)),
            );
            let dev = chol
                .l_dirty()
                .tr_solve_lower_triangular(&z)
                .ok_or(Error::NotPositiveDefinite)?;
            theta.axpy(self.config.noise, &dev, 1.0);
        }
        Ok(theta)
    }

    /// Top-`k` candidates by sampled score; ties go to the smaller item id.
    pub fn rank<R: RngCore + ?Sized>(
        &self,
        context: &[f64],
        items: &[Vec<f64>],
        candidates: &[usize],
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if candidates.len() < k {
            return Err(Error::Config(alloc::format!(
                "{} candidates cannot fill {k} positions",
                candidates.len()
            )));
        }
        let theta = self.sample_theta(rng)?;
        let (tq, td) = theta.as_slice().split_at(context.len());
        let ctx_score = crate::math::dot(tq, context);
        let mut scored: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&id| {
                let item = &items[id];
                if item.len() != td.len() {
                    return Err(Error::DimensionMismatch {
                        expected: td.len(),
                        got: item.len(),
                    });
                }
                Ok((ctx_score + crate::math::dot(td, item), id))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
    }

    /// Adds one impression with weight `p^2` and target `c / p` per slot.
    pub fn update<E: ExaminationModel + ?Sized>(
        &mut self,
        context: &[f64],
        presented: &[&[f64]],
        clicks: &[u8],
        bias: &E,
    ) -> Result<()> {
        if presented.len() != clicks.len() {
            return Err(Error::DimensionMismatch {
                expected: presented.len(),
                got: clicks.len(),
            });
        }
        let curve = bias.curve(context);
        if curve.len() < presented.len() {
            return Err(Error::DimensionMismatch {
                expected: presented.len(),
                got: curve.len(),
            });
        }
        for ((item, &c), &p) in presented.iter().zip(clicks).zip(&curve) {
            let x = features(context, item);
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: x.len(),
                });
            }
            let p = p.max(PROB_EPS);
            let w = p * p;
            // w * (x_i x_j) keeps A exactly symmetric and, at w = 1, exactly
            // equal to the unweighted Gram update.
            for j in 0..x.len() {
                for i in 0..x.len() {
                    self.a[(i, j)] += w * (x[i] * x[j]);
                }
            }
            if c != 0 {
                self.b.axpy(w * (f64::from(c) / p), &x, 1.0);
            }
        }
        Ok(())
    }
}
