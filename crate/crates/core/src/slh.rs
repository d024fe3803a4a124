//! SLH triples, Fock-space truncation and the two built-in cavity models.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{operator_to_rows, rows_to_operator};
use crate::operator::{annihilation, outer_basis, tensor, CMatrix, Operator, C64, I};
use crate::truncation::{atom_cavity_constants, kerr_constants, BoundConstants};

const INVARIANT_TOL: f64 = 1e-12;

/// Atomic basis positions in the (e, +, -) ordering.
pub const ATOM_E: usize = 0;
pub const ATOM_PLUS: usize = 1;
pub const ATOM_MINUS: usize = 2;

#[derive(Clone, Debug)]
pub struct SlhModel {
    label: String,
    /// `s[i][j]` is the operator entry `S_ij`.
    s: Vec<Vec<Operator>>,
    l: Vec<Operator>,
    h: Operator,
    params: BTreeMap<String, f64>,
}

impl SlhModel {
    pub fn new(
        label: impl Into<String>,
        s: Vec<Vec<Operator>>,
        l: Vec<Operator>,
        h: Operator,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let m = l.len();
        if m == 0 {
            return Err(Error::InvalidModel("model needs at least one channel".into()));
        }
        if s.len() != m || s.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidModel(format!("scattering matrix must be {m}x{m}")));
        }
        let dim = h.dim();
        if l.iter().chain(s.iter().flatten()).any(|op| op.dim() != dim) {
            return Err(Error::InvalidModel("operators act on different spaces".into()));
        }
        let scale = h.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = h.hermiticity_defect();
        if defect > INVARIANT_TOL * scale {
            return Err(Error::InvalidModel(format!("Hamiltonian not self-adjoint (defect {defect:.3e})")));
        }
        let model = Self { label: label.into(), s, l, h, params };
        let u = model.unitarity_defect();
        if u > INVARIANT_TOL {
            return Err(Error::InvalidModel(format!("scattering matrix not unitary (defect {u:.3e})")));
        }
        Ok(model)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn channels(&self) -> usize {
        self.l.len()
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn factor_dims(&self) -> &[usize] {
        self.h.factor_dims()
    }

    pub fn s(&self, i: usize, j: usize) -> &Operator {
        &self.s[i][j]
    }

    pub fn l(&self, j: usize) -> &Operator {
        &self.l[j]
    }

    pub fn couplings(&self) -> &[Operator] {
        &self.l
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Truncation level, when the model records one.
    pub fn level(&self) -> Option<usize> {
        self.params.get("k").map(|&k| k as usize)
    }

    /// Largest entry of `S S* - I` and `S* S - I` over the block matrix.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.channels();
        let dim = self.dim();
        let mut block = CMatrix::zeros(m * dim, m * dim);
        for i in 0..m {
            for j in 0..m {
                block.view_mut((i * dim, j * dim), (dim, dim)).copy_from(self.s[i][j].matrix());
            }
        }
        let id = CMatrix::identity(m * dim, m * dim);
        let a = &block * block.adjoint() - &id;
        let b = block.adjoint() * &block - &id;
        a.iter().chain(b.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn has_identity_scattering(&self) -> bool {
        let id = Operator::identity(self.factor_dims());
        let zero = Operator::zeros(self.factor_dims());
        (0..self.channels()).all(|i| {
            (0..self.channels()).all(|j| {
                let want = if i == j { &id } else { &zero };
                self.s[i][j].max_abs_diff(want) == 0.0
            })
        })
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            label: self.label.clone(),
            m: self.channels(),
            dim: self.dim(),
            factor_dims: self.factor_dims().to_vec(),
            s: self.s.iter().map(|row| row.iter().map(operator_to_rows).collect()).collect(),
            l: self.l.iter().map(operator_to_rows).collect(),
            h: operator_to_rows(&self.h),
            params: self.params.clone(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.factor_dims.iter().product::<usize>() != file.dim {
            return Err(Error::Schema("factor_dims do not multiply to dim".into()));
        }
        if file.l.len() != file.m || file.s.len() != file.m {
            return Err(Error::Schema("channel count does not match S or L".into()));
        }
        let op = |rows: &Vec<Vec<[f64; 2]>>| rows_to_operator(rows, &file.factor_dims);
        let s = file
            .s
            .iter()
            .map(|row| row.iter().map(op).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let l = file.l.iter().map(op).collect::<Result<Vec<_>>>()?;
        let h = op(&file.h)?;
        Self::new(file.label.clone(), s, l, h, file.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// On-disk model layout.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub label: String,
    pub m: usize,
    pub dim: usize,
    pub factor_dims: Vec<usize>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<[f64; 2]>>,
    pub params: BTreeMap<String, f64>,
}

/// Compress the oscillator (last tensor factor) of an identity-scattering model to levels `0..=k`.
pub fn truncate(model: &SlhModel, k: usize) -> Result<SlhModel> {
    if !model.has_identity_scattering() {
        return Err(Error::UnsupportedModel("truncation requires S = I".into()));
    }
    let dims = model.factor_dims();
    let fock = *dims.last().expect("factor dims are nonempty");
    if k + 1 >= fock {
        return Err(Error::InvalidParameter(format!(
            "target level {k} must be below the model level {}",
            fock - 1
        )));
    }
    let outer: usize = dims[..dims.len() - 1].iter().product();
    let keep: Vec<usize> = (0..outer).flat_map(|a| (0..=k).map(move |n| a * fock + n)).collect();
    let mut new_dims = dims.to_vec();
    *new_dims.last_mut().unwrap() = k + 1;
    let compress = |op: &Operator| -> Result<Operator> {
        let m = CMatrix::from_fn(keep.len(), keep.len(), |i, j| op.entry(keep[i], keep[j]));
        Operator::new(m, new_dims.clone())
    };
    let m = model.channels();
    let id = Operator::identity(&new_dims);
    let zero = Operator::zeros(&new_dims);
    let s = (0..m)
        .map(|i| (0..m).map(|j| if i == j { id.clone() } else { zero.clone() }).collect())
        .collect();
    let l = model.couplings().iter().map(compress).collect::<Result<Vec<_>>>()?;
    let h = compress(model.h())?;
    let mut params = model.params().clone();
    params.insert("k".into(), k as f64);
    SlhModel::new(model.label().to_string(), s, l, h, params)
}

/// `S = I`, `L = √λ a`, `H = Δ a*a + χ a*a*aa` on levels `0..=k`.
pub fn kerr_cavity(lambda: f64, delta: f64, chi: f64, k: usize) -> Result<SlhModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if !delta.is_finite() || !chi.is_finite() {
        return Err(Error::InvalidParameter("detuning and Kerr coefficient must be finite".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("truncation level k must be at least 1".into()));
    }
    let a = annihilation(k + 1)?;
    let ad = a.adjoint();
    let n = &ad * &a;
    let kerr = &(&ad * &ad) * &(&a * &a);
    let h = &n.scale_real(delta) + &kerr.scale_real(chi);
    let l = a.scale_real(lambda.sqrt());
    let params = BTreeMap::from([
        ("chi".to_string(), chi),
        ("delta".to_string(), delta),
        ("k".to_string(), k as f64),
        ("lambda".to_string(), lambda),
    ]);
    let label = format!("kerr lambda={lambda} delta={delta} chi={chi} k={k}");
    SlhModel::new(label, vec![vec![Operator::identity(&[k + 1])]], vec![l], h, params)
}

/// Three-level atom (e, +, -) in a cavity: `L = I ⊗ √λ a`, `H = iχ(σ₊⊗a − σ₋⊗a*)` with `σ₊ = |e⟩⟨+|`.
pub fn atom_cavity(lambda: f64, chi: f64, k: usize) -> Result<SlhModel> {
    if !(lambda > 0.0) || !(chi > 0.0) || !lambda.is_finite() || !chi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda and chi must be positive, got {lambda}, {chi}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("truncation level k must be at least 1".into()));
    }
    let a = annihilation(k + 1)?;
    let sp = outer_basis(3, ATOM_E, ATOM_PLUS)?;
    let sm = sp.adjoint();
    let id3 = Operator::identity(&[3]);
    let l = tensor(&id3, &a.scale_real(lambda.sqrt()));
    let h = (&tensor(&sp, &a) - &tensor(&sm, &a.adjoint())).scale(I * chi);
    let params = BTreeMap::from([
        ("chi".to_string(), chi),
        ("k".to_string(), k as f64),
        ("lambda".to_string(), lambda),
    ]);
    let label = format!("atom-cavity lambda={lambda} chi={chi} k={k}");
    let dims = [3, k + 1];
    SlhModel::new(label, vec![vec![Operator::identity(&dims)]], vec![l], h, params)
}

/// A level-indexed family of truncated models together with its bound constants.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFamily {
    Kerr { lambda: f64, delta: f64, chi: f64 },
    AtomCavity { lambda: f64, chi: f64 },
}

impl ModelFamily {
    /// Kerr cavity with λ = 25, Δ = 50, χ = −Δ/60.
    pub fn kerr_default() -> Self {
        ModelFamily::Kerr { lambda: 25.0, delta: 50.0, chi: -50.0 / 60.0 }
    }

    pub fn build(&self, k: usize) -> Result<SlhModel> {
        match *self {
            ModelFamily::Kerr { lambda, delta, chi } => kerr_cavity(lambda, delta, chi, k),
            ModelFamily::AtomCavity { lambda, chi } => atom_cavity(lambda, chi, k),
        }
    }

    pub fn constants(&self, k: usize, alpha: &[C64], beta: &[C64]) -> Result<BoundConstants> {
        let (a, b) = single_channel(alpha, beta)?;
        match *self {
            ModelFamily::Kerr { lambda, .. } => kerr_constants(k, a, b, lambda),
            ModelFamily::AtomCavity { lambda, chi } => atom_cavity_constants(k, a, b, lambda, chi),
        }
    }

    /// Dimension of the non-oscillator factor.
    pub fn outer_dim(&self) -> usize {
        match self {
            ModelFamily::Kerr { .. } => 1,
            ModelFamily::AtomCavity { .. } => 3,
        }
    }
}

fn single_channel(
    alpha: &[C64],
    beta: &[C64],
) -> Result<(C64, C64)> {
    if alpha.len() != 1 || beta.len() != 1 {
        return Err(Error::InvalidAmplitude("built-in families have a single channel".into()));
    }
    Ok((alpha[0], beta[0]))
}
