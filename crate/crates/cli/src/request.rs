//! JSON request accepted by `qsde-cert bound`.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use qsde_cert::approx::ApproxState;
use qsde_cert::io::pairs_to_vec;
use qsde_cert::operator::StateVector;
use qsde_cert::semigroup::SimpleFunction;
use qsde_cert::slh::{ModelFamily, SlhModel};
use qsde_cert::truncation::{
    theorem_bound, BoundConstants, CertificateReport, ConstantsSource, FamilyConstants, IntervalConstants,
    ResidualSource, TheoremInput,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Kerr { k: usize, lambda: f64, delta: f64, chi: f64 },
    AtomCavity { k: usize, lambda: f64, chi: f64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRequest {
    pub model: ModelSpec,
    pub r: usize,
    pub s: usize,
    pub f: SimpleFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_prime: Option<SimpleFunction>,
    /// System part of `ψ`; the first basis vector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<[f64; 2]>>,
    /// Approximant; `u ⊗ e(f′)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxState>,
    /// One constant set per interval of the common partition. Built-in families may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<Vec<BoundConstants>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

impl BoundRequest {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let req: Self = serde_json::from_str(text).context("malformed bound request")?;
        if let Some(r) = req.residual {
            if !(r >= 0.0) || !r.is_finite() {
                bail!("residual must be finite and nonnegative, got {r}");
            }
        }
        Ok(req)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    fn family(&self) -> Option<(ModelFamily, usize)> {
        match self.model {
            ModelSpec::Kerr { k, lambda, delta, chi } => Some((ModelFamily::Kerr { lambda, delta, chi }, k)),
            ModelSpec::AtomCavity { k, lambda, chi } => Some((ModelFamily::AtomCavity { lambda, chi }, k)),
            ModelSpec::File { .. } => None,
        }
    }

    pub fn model(&self) -> anyhow::Result<SlhModel> {
        Ok(match &self.model {
            ModelSpec::File { path } => {
                SlhModel::load(path).with_context(|| format!("loading model {}", path.display()))?
            }
            _ => {
                let (family, k) = self.family().expect("built-in family");
                family.build(k)?
            }
        })
    }

    pub fn evaluate(&self) -> anyhow::Result<CertificateReport> {
        let model = self.model()?;
        let u = match &self.u {
            Some(pairs) => {
                let flat = StateVector::from_slice(&pairs_to_vec(pairs))?;
                StateVector::new(flat.into_vector(), model.factor_dims().to_vec())?
            }
            None => StateVector::basis(model.factor_dims(), 0)?,
        };
        let f_prime = self.f_prime.clone().unwrap_or_else(|| self.f.clone());
        let approx = match &self.approx {
            Some(a) => a.clone().with_factor_dims(model.factor_dims())?,
            None => ApproxState::single(u.clone(), f_prime.clone())?,
        };
        let input = TheoremInput {
            model: &model,
            u: &u,
            f: &self.f,
            approx: &approx,
            f_prime: &f_prime,
            r: self.r,
            s: self.s,
            residual: match self.residual {
                Some(v) => ResidualSource::Supplied(v),
                None => ResidualSource::Computed,
            },
        };
        let family = self.family();
        let source: Box<dyn ConstantsSource + '_> = match (&self.constants, &family) {
            (Some(cs), _) => Box::new(IntervalConstants(cs)),
            (None, Some((family, k))) => Box::new(FamilyConstants { family, k: *k }),
            (None, None) => bail!("model files need explicit per-interval constants"),
        };
        Ok(theorem_bound(&input, source.as_ref())?)
    }
}
