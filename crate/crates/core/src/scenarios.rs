//! The two worked examples: a driven Kerr cavity under Fock truncation and a three-level atom with its cavity eliminated.

use serde::{Deserialize, Serialize};

use crate::adiabatic::{ae_theorem_bound, atom_cavity_ae, limit_coefficients, AeModel, AeTheoremInput};
use crate::approx::{cost, optimize, ApproxState, OptimizeOutcome, Schedule, Term};
use crate::error::{Error, Result};
use crate::operator::{StateVector, C64};
use crate::semigroup::SimpleFunction;
use crate::slh::{kerr_cavity, ModelFamily, SlhModel};
use crate::truncation::{theorem_bound, CertificateReport, FamilyConstants, ResidualSource, TheoremInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KerrSetup {
    pub lambda: f64,
    pub delta: f64,
    pub chi: f64,
    pub alpha: C64,
    pub t_final: f64,
    pub intervals: usize,
    pub r: usize,
    pub s: usize,
}

impl Default for KerrSetup {
    fn default() -> Self {
        Self { lambda: 25.0, delta: 50.0, chi: -50.0 / 60.0, alpha: C64::new(0.1, 0.0), t_final: 5.0, intervals: 10, r: 2, s: 2 }
    }
}

pub const KERR_LEVELS: [usize; 9] = [19, 29, 39, 49, 59, 69, 79, 89, 99];

impl KerrSetup {
    pub fn family(&self) -> ModelFamily {
        ModelFamily::Kerr { lambda: self.lambda, delta: self.delta, chi: self.chi }
    }

    pub fn model(&self, k: usize) -> Result<SlhModel> {
        kerr_cavity(self.lambda, self.delta, self.chi, k)
    }

    /// The drive `α 1_[0,T]` on the uniform partition.
    pub fn drive(&self) -> Result<SimpleFunction> {
        if self.intervals == 0 {
            return Err(Error::InvalidParameter("need at least one interval".into()));
        }
        SimpleFunction::uniform_scalar(&vec![self.alpha; self.intervals], self.t_final)
    }

    pub fn vacuum(&self, k: usize) -> Result<StateVector> {
        StateVector::basis(&[k + 1], 0)
    }

    /// Starting guess `|0⟩ ⊗ e(α 1_[0,T])`.
    pub fn initial_guess(&self, k: usize) -> Result<ApproxState> {
        ApproxState::single(self.vacuum(k)?, SimpleFunction::constant(vec![self.alpha], self.t_final)?)
    }

    pub fn certificate(&self, k: usize, approx: &ApproxState) -> Result<CertificateReport> {
        let model = self.model(k)?;
        let u = self.vacuum(k)?;
        let f = self.drive()?;
        let family = self.family();
        let input = TheoremInput {
            model: &model,
            u: &u,
            f: &f,
            approx,
            f_prime: &f,
            r: self.r,
            s: self.s,
            residual: ResidualSource::Computed,
        };
        theorem_bound(&input, &FamilyConstants { family: &family, k })
    }

    pub fn cost(&self, k: usize, approx: &ApproxState) -> Result<f64> {
        cost(&self.model(k)?, &self.vacuum(k)?, &self.drive()?, approx)
    }

    pub fn optimize(&self, k: usize, schedule: &Schedule) -> Result<OptimizeOutcome> {
        let model = self.model(k)?;
        optimize(&model, &self.vacuum(k)?, &self.drive()?, &self.initial_guess(k)?, schedule)
    }
}

/// Default optimizer schedule for the cavity example.
pub fn kerr_schedule(seed: u64) -> Schedule {
    Schedule { partition: Some(vec![0.0, 0.5, 5.0]), restarts: 2, max_evals: 3000, seed, ..Default::default() }
}

/// The single-term minimizer reported for the cavity example, on levels `0..=k`.
pub fn published_kerr_state(k: usize) -> Result<ApproxState> {
    if k < 2 {
        return Err(Error::InvalidParameter("published state needs at least three levels".into()));
    }
    let mut u = vec![C64::new(0.0, 0.0); k + 1];
    u[0] = C64::new(0.9999, 0.0);
    u[1] = -C64::new(0.0024, -0.0094);
    u[2] = C64::new(-0.0001, 0.0);
    let g = SimpleFunction::new(
        vec![0.0, 0.5, 5.0],
        vec![vec![C64::new(0.0866, 0.0462)], vec![C64::new(0.0882, 0.0471)]],
    )?;
    let u = StateVector::new(nalgebra::DVector::from_vec(u), vec![k + 1])?;
    ApproxState::from_coherent(vec![Term { u, g }])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeSetup {
    pub gamma: f64,
    pub g: f64,
    pub alpha: C64,
    pub t_final: f64,
    pub intervals: usize,
    pub terms: usize,
    pub block_len: usize,
    pub j_max: usize,
}

impl Default for AeSetup {
    fn default() -> Self {
        Self { gamma: 25.0, g: 5.0, alpha: C64::new(0.1, 0.0), t_final: 1.0, intervals: 1000, terms: 5, block_len: 1, j_max: 4 }
    }
}

pub const AE_SCALES: [f64; 5] = [1e4, 1e5, 1e6, 1e7, 1e8];

impl AeSetup {
    pub fn model(&self) -> Result<AeModel> {
        atom_cavity_ae(self.gamma, self.g, self.alpha, self.j_max)
    }

    pub fn limit(&self) -> Result<SlhModel> {
        limit_coefficients(&self.model()?)
    }

    /// `|−⟩ ⊗ |0⟩` in slow-subspace coordinates `(|+,0⟩, |−,0⟩)`.
    pub fn reference(&self) -> Result<StateVector> {
        StateVector::basis(&[2], 1)
    }

    pub fn drive(&self) -> Result<SimpleFunction> {
        if self.intervals == 0 {
            return Err(Error::InvalidParameter("need at least one interval".into()));
        }
        SimpleFunction::uniform_scalar(&vec![self.alpha; self.intervals], self.t_final)
    }

    /// `terms` copies of `|−,0⟩ ⊗ e(α 1_[0,T])` on the drive partition.
    pub fn initial_guess(&self) -> Result<ApproxState> {
        if self.terms == 0 {
            return Err(Error::InvalidParameter("need at least one term".into()));
        }
        let g = self.drive()?;
        let u = self.reference()?;
        ApproxState::new((0..self.terms).map(|_| Term { u: u.clone(), g: g.clone() }).collect())
    }

    pub fn schedule(&self, seed: u64) -> Schedule {
        Schedule { block_len: Some(self.block_len), restarts: 1, max_evals: 1500, seed, initial_step: 0.05, ..Default::default() }
    }

    pub fn optimize(&self, schedule: &Schedule) -> Result<OptimizeOutcome> {
        let limit = self.limit()?;
        optimize(&limit, &self.reference()?, &self.drive()?, &self.initial_guess()?, schedule)
    }

    pub fn cost(&self, approx: &ApproxState) -> Result<f64> {
        cost(&self.limit()?, &self.reference()?, &self.drive()?, approx)
    }

    pub fn certificate(&self, k: f64, approx: &ApproxState) -> Result<CertificateReport> {
        let model = self.model()?;
        let limit = limit_coefficients(&model)?;
        let u = self.reference()?;
        let f = self.drive()?;
        ae_theorem_bound(&AeTheoremInput { model: &model, limit: &limit, k, u: &u, f: &f, approx, f_prime: &f })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_state_cost() {
        let setup = KerrSetup::default();
        let s = published_kerr_state(99).unwrap();
        let j = setup.cost(99, &s).unwrap();
        assert!((j - 0.0096).abs() < 0.0015, "{j}");
    }

    #[test]
    fn ae_initial_guess_shape() {
        let setup = AeSetup { intervals: 20, ..Default::default() };
        let g = setup.initial_guess().unwrap();
        assert_eq!(g.terms().len(), 5);
        assert_eq!(g.terms()[0].g.intervals(), 20);
    }
}
