//! Singularly scaled models `k²Y + kA + B`, their limit SLH coefficients on the slow subspace, and the `1/k` certificates.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::approx::{residual_norm, ApproxState};
use crate::error::{Error, Result};
use crate::io::{operator_to_rows, rows_to_operator};
use crate::operator::{annihilation, creation, outer_basis, spectral_norm, tensor, CMatrix, Operator, StateVector, C64, ONE, ZERO};
use crate::semigroup::{common_partition, generator, SimpleFunction};
use crate::slh::{SlhModel, ATOM_E, ATOM_MINUS, ATOM_PLUS};
use crate::truncation::{check_unit, coherent_mismatch, CertificateReport};

const STRUCTURE_TOL: f64 = 1e-12;
const LIMIT_TOL: f64 = 1e-10;
const LEAK_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct AeModel {
    label: String,
    factor_dims: Vec<usize>,
    y: Operator,
    ytilde: Operator,
    a: Operator,
    b: Operator,
    f: Vec<Operator>,
    g: Vec<Operator>,
    /// `w[i][j] = W_ij`.
    w: Vec<Vec<Operator>>,
    /// Basis indices spanning the slow subspace, in reduced-model order.
    h0: Vec<usize>,
    /// Basis indices whose `Y`-invariant block is fully represented at this cutoff.
    complete: Vec<usize>,
}

impl AeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        y: Operator,
        ytilde: Operator,
        a: Operator,
        b: Operator,
        f: Vec<Operator>,
        g: Vec<Operator>,
        w: Vec<Vec<Operator>>,
        h0: Vec<usize>,
        complete: Vec<usize>,
    ) -> Result<Self> {
        let dim = y.dim();
        let m = f.len();
        if m == 0 || g.len() != m || w.len() != m || w.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidModel(format!("inconsistent channel count {m}")));
        }
        let all = [&ytilde, &a, &b].into_iter().chain(&f).chain(&g).chain(w.iter().flatten());
        if all.into_iter().any(|op| op.dim() != dim) {
            return Err(Error::InvalidDimension("elimination operators act on different spaces".into()));
        }
        if h0.is_empty() || h0.iter().chain(&complete).any(|&i| i >= dim) {
            return Err(Error::InvalidIndex { index: h0.iter().chain(&complete).copied().max().unwrap_or(0), dim });
        }
        let model = Self { label: label.into(), factor_dims: y.factor_dims().to_vec(), y, ytilde, a, b, f, g, w, h0, complete };
        model.check_structure()?;
        Ok(model)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn channels(&self) -> usize {
        self.f.len()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn y(&self) -> &Operator {
        &self.y
    }

    pub fn ytilde(&self) -> &Operator {
        &self.ytilde
    }

    pub fn a(&self) -> &Operator {
        &self.a
    }

    pub fn b(&self) -> &Operator {
        &self.b
    }

    pub fn f(&self, j: usize) -> &Operator {
        &self.f[j]
    }

    pub fn g(&self, j: usize) -> &Operator {
        &self.g[j]
    }

    pub fn w(&self, i: usize, j: usize) -> &Operator {
        &self.w[i][j]
    }

    pub fn slow_indices(&self) -> &[usize] {
        &self.h0
    }

    pub fn p0(&self) -> CMatrix {
        diag_projector(self.dim(), &self.h0)
    }

    /// The isometry from the slow subspace into the full space.
    pub fn isometry(&self) -> CMatrix {
        let mut v = CMatrix::zeros(self.dim(), self.h0.len());
        for (c, &i) in self.h0.iter().enumerate() {
            v[(i, c)] = ONE;
        }
        v
    }

    pub fn complete_projector(&self) -> CMatrix {
        diag_projector(self.dim(), &self.complete)
    }

    /// Largest violation among `YP₀ = 0`, `F*P₀ = 0`, `P₀AP₀ = 0` and `ỸY = YỸ = P⊥` on the complete blocks.
    pub fn structure_defect(&self) -> f64 {
        let p0 = self.p0();
        let c = self.complete_projector();
        let perp = &c - &p0;
        let y = self.y.matrix();
        let yt = self.ytilde.matrix();
        let mut worst = max_abs(&(y * &p0));
        for f in &self.f {
            worst = worst.max(max_abs(&(f.matrix().adjoint() * &p0)));
        }
        worst = worst.max(max_abs(&(&p0 * self.a.matrix() * &p0)));
        worst = worst.max(max_abs(&(&(yt * y * &c) - &perp)));
        worst.max(max_abs(&(&(y * yt * &c) - &perp)))
    }

    fn check_structure(&self) -> Result<()> {
        let scale = [&self.y, &self.ytilde].iter().map(|op| max_abs(op.matrix())).fold(1.0, f64::max);
        let d = self.structure_defect();
        if d > STRUCTURE_TOL * scale {
            return Err(Error::Structural(format!("structural requirements violated (defect {d:.3e})")));
        }
        Ok(())
    }

    /// Basis rows at the highest represented level of the last factor.
    fn top_level_rows(&self) -> Vec<usize> {
        let levels = *self.factor_dims.last().unwrap();
        if self.factor_dims.len() < 2 {
            return vec![];
        }
        (0..self.dim()).filter(|i| i % levels == levels - 1).collect()
    }

    /// The full unscaled model at scale `k` on the represented levels.
    pub fn scaled_model(&self, k: f64) -> Result<SlhModel> {
        let kc = C64::new(k, 0.0);
        let m = self.channels();
        let l: Vec<Operator> = (0..m)
            .map(|j| Operator::new((self.f[j].matrix() * kc + self.g[j].matrix()).adjoint(), self.factor_dims.clone()))
            .collect::<Result<_>>()?;
        let kmat = self.y.matrix() * (kc * kc) + self.a.matrix() * kc + self.b.matrix();
        let h = (&kmat - kmat.adjoint()) * C64::new(0.0, -0.5);
        let s = (0..m)
            .map(|i| (0..m).map(|j| self.w[j][i].adjoint()).collect())
            .collect();
        let mut params = BTreeMap::new();
        params.insert("k".into(), k);
        SlhModel::new(format!("{} scaled k={k}", self.label), s, l, Operator::new(h, self.factor_dims.clone())?, params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AeModelFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    fn to_file(&self) -> AeModelFile {
        let rows = |ops: &[Operator]| ops.iter().map(operator_to_rows).collect::<Vec<_>>();
        AeModelFile {
            label: self.label.clone(),
            factor_dims: self.factor_dims.clone(),
            y: operator_to_rows(&self.y),
            ytilde: operator_to_rows(&self.ytilde),
            a: operator_to_rows(&self.a),
            b: operator_to_rows(&self.b),
            f: rows(&self.f),
            g: rows(&self.g),
            w: self.w.iter().map(|r| rows(r)).collect(),
            h0: self.h0.clone(),
            complete: self.complete.clone(),
        }
    }

    fn from_file(file: &AeModelFile) -> Result<Self> {
        let d = &file.factor_dims;
        let op = |rows: &Rows| rows_to_operator(rows, d);
        let ops = |list: &[Rows]| list.iter().map(op).collect::<Result<Vec<_>>>();
        Self::new(
            file.label.clone(),
            op(&file.y)?,
            op(&file.ytilde)?,
            op(&file.a)?,
            op(&file.b)?,
            ops(&file.f)?,
            ops(&file.g)?,
            file.w.iter().map(|r| ops(r)).collect::<Result<_>>()?,
            file.h0.clone(),
            file.complete.clone(),
        )
    }
}

type Rows = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
struct AeModelFile {
    label: String,
    factor_dims: Vec<usize>,
    y: Rows,
    ytilde: Rows,
    a: Rows,
    b: Rows,
    f: Vec<Rows>,
    g: Vec<Rows>,
    w: Vec<Vec<Rows>>,
    h0: Vec<usize>,
    complete: Vec<usize>,
}

fn diag_projector(dim: usize, indices: &[usize]) -> CMatrix {
    let mut p = CMatrix::zeros(dim, dim);
    for &i in indices {
        p[(i, i)] = ONE;
    }
    p
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConstants {
    pub m1: f64,
    pub m2: f64,
    pub k: f64,
    pub alpha: C64,
    pub beta: C64,
}

fn check_channels(model: &AeModel, alpha: &[C64], beta: &[C64]) -> Result<()> {
    let m = model.channels();
    if alpha.len() != m || beta.len() != m {
        return Err(Error::InvalidDimension(format!("expected {m} channel amplitudes, got {} and {}", alpha.len(), beta.len())));
    }
    Ok(())
}

/// `A^(αβ) = A + Σ F_j β_j − Σ α_i* W_ij F_j*` and `B^(αβ) = −(|α|²+|β|²)/2 + B + Σ G_j β_j + Σ α_i* W_ij (β_j − G_j*)`.
pub fn ae_operators(model: &AeModel, alpha: &[C64], beta: &[C64]) -> Result<(Operator, Operator)> {
    check_channels(model, alpha, beta)?;
    let n = model.dim();
    let m = model.channels();
    let id = CMatrix::identity(n, n);
    let mut a = model.a.matrix().clone();
    let norms: f64 = alpha.iter().chain(beta).map(|z| z.norm_sqr()).sum();
    let mut b = model.b.matrix() - &id * C64::new(0.5 * norms, 0.0);
    for j in 0..m {
        a += model.f[j].matrix() * beta[j];
        b += model.g[j].matrix() * beta[j];
        for i in 0..m {
            let w = model.w[i][j].matrix();
            a -= w * model.f[j].matrix().adjoint() * alpha[i].conj();
            b += w * (&id * beta[j] - model.g[j].matrix().adjoint()) * alpha[i].conj();
        }
    }
    let dims = model.factor_dims.clone();
    Ok((Operator::new(a, dims.clone())?, Operator::new(b, dims)?))
}

/// The reduced `(S, L, H)` on the slow subspace.
pub fn limit_coefficients(model: &AeModel) -> Result<SlhModel> {
    let v = model.isometry();
    let vt = v.adjoint();
    let yt = model.ytilde.matrix();
    let a = model.a.matrix();
    let m = model.channels();
    let r = model.h0.len();
    let dims = vec![r];
    let red = |x: CMatrix| -> CMatrix { &vt * x * &v };
    // s_adj[j][i] = S_ji*
    let mut s: Vec<Vec<Operator>> = vec![Vec::with_capacity(m); m];
    for (i, row) in s.iter_mut().enumerate() {
        for j in 0..m {
            // S_ij = (S_ij*)* with S_ij* = Σ_ℓ P W_jℓ (F_ℓ* Ỹ F_i + δ_ℓi) P
            let mut acc = CMatrix::zeros(r, r);
            for l in 0..m {
                let mut inner = model.f[l].matrix().adjoint() * yt * model.f[i].matrix();
                if l == i {
                    inner += CMatrix::identity(model.dim(), model.dim());
                }
                acc += red(model.w[j][l].matrix() * inner);
            }
            row.push(Operator::new(acc.adjoint(), dims.clone())?);
        }
    }
    let l = (0..m)
        .map(|j| {
            let ladj = red(model.g[j].matrix() - a * yt * model.f[j].matrix());
            Operator::new(ladj.adjoint(), dims.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let x = red(model.b.matrix() - a * yt * a);
    let h = (&x - x.adjoint()) * C64::new(0.0, -0.5);
    let h = Operator::new(h, dims.clone())?;
    let scale = h.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let probe = SlhModel::new(model.label.clone(), s.clone(), l.clone(), Operator::zeros(&dims), BTreeMap::new());
    if let Err(Error::InvalidModel(msg)) = &probe {
        return Err(Error::Structural(format!("limit coefficients: {msg}")));
    }
    if h.hermiticity_defect() > LIMIT_TOL * scale {
        return Err(Error::Structural("limit Hamiltonian not self-adjoint".into()));
    }
    SlhModel::new(format!("{} limit", model.label), s, l, h, BTreeMap::new())
        .map_err(|e| Error::Structural(format!("limit coefficients: {e}")))
}

/// Precomputed pieces for repeated constant evaluations at one scale `k`.
pub struct MEvaluator<'a> {
    model: &'a AeModel,
    limit: &'a SlhModel,
    k: f64,
    v: CMatrix,
    perp: CMatrix,
    top_rows: Vec<usize>,
    cache: HashMap<[u64; 4], AeConstants>,
}

impl<'a> MEvaluator<'a> {
    pub fn new(model: &'a AeModel, limit: &'a SlhModel, k: f64) -> Result<Self> {
        if !(k >= 1.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("scale k = {k} must be at least 1")));
        }
        if limit.dim() != model.h0.len() || limit.channels() != model.channels() {
            return Err(Error::InvalidDimension("limit model does not match the slow subspace".into()));
        }
        let n = model.dim();
        let perp = CMatrix::identity(n, n) - model.p0();
        Ok(Self { model, limit, k, v: model.isometry(), perp, top_rows: model.top_level_rows(), cache: HashMap::new() })
    }

    fn guard(&self, what: &str, x: &CMatrix) -> Result<()> {
        let scale = max_abs(x).max(1.0);
        for &r in &self.top_rows {
            let leak = x.row(r).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if leak > LEAK_TOL * scale {
                return Err(Error::InsufficientTruncation(format!("{what} reaches the top represented level ({leak:.3e})")));
            }
        }
        Ok(())
    }

    pub fn constants(&mut self, alpha: &[C64], beta: &[C64]) -> Result<AeConstants> {
        let key = if alpha.len() == 1 && beta.len() == 1 {
            Some([alpha[0].re.to_bits(), alpha[0].im.to_bits(), beta[0].re.to_bits(), beta[0].im.to_bits()])
        } else {
            None
        };
        if let Some(c) = key.and_then(|k| self.cache.get(&k)) {
            return Ok(*c);
        }
        let c = self.compute(alpha, beta)?;
        if let Some(key) = key {
            self.cache.insert(key, c);
        }
        Ok(c)
    }

    fn compute(&self, alpha: &[C64], beta: &[C64]) -> Result<AeConstants> {
        let (aop, bop) = ae_operators(self.model, alpha, beta)?;
        let a = aop.matrix();
        let b = bop.matrix();
        let yt = self.model.ytilde.matrix();
        let inv_k = C64::new(1.0 / self.k, 0.0);
        let v = &self.v;

        let ya_v = yt * a * v;
        self.guard("ỸA P₀", &ya_v)?;
        let aya_v = a * &ya_v;
        let inner_v = b * v - &aya_v;
        let x_v = a * v - &inner_v * inv_k;
        let m1_mat = yt * &self.perp * &x_v;
        self.guard("Ỹ P⊥ (A − (B − AỸA)/k) P₀", &m1_mat)?;
        let m1 = spectral_norm(&m1_mat);

        let lgen = generator(self.limit, alpha, beta)?;
        let first = &m1_mat * lgen.matrix.matrix();
        let bya_v = b * &ya_v;
        self.guard("BỸA P₀", &bya_v)?;
        let tail_in = yt * &self.perp * &inner_v;
        self.guard("Ỹ P⊥ (B − AỸA) P₀", &tail_in)?;
        let tail = (a - b * inv_k) * &tail_in;
        self.guard("(A − B/k) Ỹ P⊥ (B − AỸA) P₀", &tail)?;
        let m2 = spectral_norm(&(first + bya_v + tail));
        if !m1.is_finite() || !m2.is_finite() {
            return Err(Error::Numeric("elimination constants are not finite".into()));
        }
        Ok(AeConstants {
            m1,
            m2,
            k: self.k,
            alpha: alpha.first().copied().unwrap_or(ZERO),
            beta: beta.first().copied().unwrap_or(ZERO),
        })
    }
}

/// `M₁`, `M₂` at one `(α, β)` and scale `k`.
pub fn m_constants(model: &AeModel, limit: &SlhModel, alpha: &[C64], beta: &[C64], k: f64) -> Result<AeConstants> {
    MEvaluator::new(model, limit, k)?.constants(alpha, beta)
}

pub fn ae_semigroup_error(c: &AeConstants, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((2.0 * c.m1 + t * c.m2) / c.k)
}

/// Variant with norm-continuity bounding functions `N₁`, `N₂` supplied by the caller.
pub fn ae_variant_error(c: &AeConstants, t: f64, n1: &dyn Fn(f64) -> f64, n2: &dyn Fn(f64) -> f64) -> Result<f64> {
    check_time(t)?;
    Ok((c.m1 * (n1(t) + n2(t)) + t * c.m2) / c.k)
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// `Σ_i (2M₁ + Δt_i M₂)/k` over `partition`.
pub fn ae_interval_sum(constants: &[AeConstants], partition: &[f64]) -> Result<f64> {
    if partition.len() != constants.len() + 1 {
        return Err(Error::Partition(format!("{} constants for {} breakpoints", constants.len(), partition.len())));
    }
    let mut acc = 0.0;
    for (i, c) in constants.iter().enumerate() {
        let dt = partition[i + 1] - partition[i];
        if !(dt > 0.0) {
            return Err(Error::Partition("partition must be strictly increasing".into()));
        }
        acc += ae_semigroup_error(c, dt)?;
    }
    Ok(acc)
}

pub struct AeTheoremInput<'a> {
    pub model: &'a AeModel,
    pub limit: &'a SlhModel,
    pub k: f64,
    /// System part of `ψ`, given in slow-subspace coordinates.
    pub u: &'a StateVector,
    pub f: &'a SimpleFunction,
    pub approx: &'a ApproxState,
    pub f_prime: &'a SimpleFunction,
}

/// `bound² = 4(mismatch + ‖U*ψ − ψ′‖) + (2/k) Σ_j Σ_i (2M₁ + Δt M₂) ‖ψ′_j‖`, residual on the limit model.
pub fn ae_theorem_bound(input: &AeTheoremInput<'_>) -> Result<CertificateReport> {
    check_unit(input.u)?;
    let mismatch = coherent_mismatch(input.f, input.f_prime)?;
    let residual = residual_norm(input.limit, input.u, input.f_prime, input.approx)?;
    let mut fs: Vec<&SimpleFunction> = vec![input.f_prime];
    fs.extend(input.approx.terms().iter().map(|t| &t.g));
    let partition = common_partition(&fs)?;
    let fp = input.f_prime.refine(&partition)?;
    let mut eval = MEvaluator::new(input.model, input.limit, input.k)?;
    let mut interval_terms = Vec::with_capacity(input.approx.terms().len());
    for term in input.approx.terms() {
        let g = term.g.refine(&partition)?;
        let mut row = Vec::with_capacity(fp.intervals());
        for i in 0..fp.intervals() {
            let c = eval.constants(fp.value(i), g.value(i))?;
            row.push(2.0 * c.m1 + fp.duration(i) * c.m2);
        }
        interval_terms.push(row);
    }
    let mut report = CertificateReport {
        k: Some(input.k),
        r: None,
        s: None,
        t: fp.final_time(),
        partition,
        interval_terms,
        term_norms: input.approx.terms().iter().map(|t| t.norm()).collect(),
        z_sum: 0.0,
        rate_factor: 2.0 / input.k,
        residual,
        residual_supplied: false,
        mismatch,
        bound: 0.0,
        description: format!(
            "{} terms on {} intervals, eliminated model {}",
            input.approx.terms().len(),
            fp.intervals(),
            input.model.label()
        ),
    };
    report.z_sum = report.recompute_z_sum();
    report.bound = report.bound_sq().max(0.0).sqrt();
    Ok(report)
}

/// Matrix-element bound on `|⟨(U^(k) − U)*ψ₁, ψ₂⟩|` for product states `u_j ⊗ e(f_j)` approximated by `u_j ⊗ e(f′_j)`.
pub fn ae_corollary_bound(
    model: &AeModel,
    limit: &SlhModel,
    k: f64,
    psi1: (&StateVector, &SimpleFunction, &SimpleFunction),
    psi2: (&StateVector, &SimpleFunction, &SimpleFunction),
) -> Result<f64> {
    let (u1, f1, f1p) = psi1;
    let (u2, f2, f2p) = psi2;
    let ev_diff = |f: &SimpleFunction, fp: &SimpleFunction| -> Result<f64> {
        let sq = f.norm_sq().exp() + fp.norm_sq().exp() - 2.0 * f.inner(fp)?.exp().re;
        Ok(sq.max(0.0).sqrt())
    };
    let n1 = u1.norm() * (0.5 * f1.norm_sq()).exp();
    let n2 = u2.norm() * (0.5 * f2.norm_sq()).exp();
    let n1p = u1.norm() * (0.5 * f1p.norm_sq()).exp();
    let n2p = u2.norm() * (0.5 * f2p.norm_sq()).exp();
    let head = 2.0 * (u1.norm() * ev_diff(f1, f1p)? * n2 + u2.norm() * ev_diff(f2, f2p)? * n1);
    let partition = common_partition(&[f1p, f2p])?;
    let a1 = f1p.refine(&partition)?;
    let a2 = f2p.refine(&partition)?;
    let mut eval = MEvaluator::new(model, limit, k)?;
    let cs = (0..a1.intervals())
        .map(|i| eval.constants(a1.value(i), a2.value(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(head + ae_interval_sum(&cs, &partition)? * n1p * n2p)
}

/// Cavity elimination for `K = k²E₁₁⊗a*a + k(E₁₀⊗a* + E₀₁⊗a) + E₀₀⊗I`, `L_j* = kF_j⊗a* + G_j⊗I`, `S_ji* = W_ij⊗I`.
#[allow(clippy::too_many_arguments)]
pub fn oscillator_elimination(
    e00: &Operator,
    e01: &Operator,
    e10: &Operator,
    e11: &Operator,
    f: &[Operator],
    g: &[Operator],
    w: &[Vec<Operator>],
    j_max: usize,
) -> Result<AeModel> {
    let d = e11.dim();
    if j_max < 1 {
        return Err(Error::InvalidParameter("need at least one excited oscillator level".into()));
    }
    let svd = e11.matrix().clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::InvalidModel(format!("E11 is singular or ill-conditioned (σ_min = {smin:.3e})")));
    }
    let e11_inv = e11
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("E11 is singular".into()))?;
    let levels = j_max + 1;
    let id_osc = Operator::identity(&[levels]);
    let a = annihilation(levels)?;
    let ad = creation(levels)?;
    let num = &ad * &a;
    let y = tensor(e11, &num);
    let aa = &tensor(e10, &ad) + &tensor(e01, &a);
    let b = tensor(e00, &id_osc);
    let mut inv_num = CMatrix::zeros(levels, levels);
    for n in 1..levels {
        inv_num[(n, n)] = C64::new(1.0 / n as f64, 0.0);
    }
    let yt = tensor(&Operator::new(e11_inv, vec![d])?, &Operator::new(inv_num, vec![levels])?);
    let fs = f.iter().map(|fj| tensor(fj, &ad)).collect();
    let gs = g.iter().map(|gj| tensor(gj, &id_osc)).collect();
    let ws = w.iter().map(|row| row.iter().map(|wij| tensor(wij, &id_osc)).collect()).collect();
    let h0 = (0..d).map(|s| s * levels).collect();
    let complete = (0..d * levels).collect();
    AeModel::new(format!("oscillator elimination dim={d} levels={levels}"), y, yt, aa, b, fs, gs, ws, h0, complete)
}

/// `d_j = j(j−1)γ²/4 + j g²`.
pub fn d_j(gamma: f64, g: f64, j: usize) -> f64 {
    let j = j as f64;
    j * (j - 1.0) * gamma * gamma / 4.0 + j * g * g
}

/// Three-level atom in a strongly damped cavity; slow subspace `span{|+,0⟩, |−,0⟩}`.
pub fn atom_cavity_ae(gamma: f64, g: f64, drive: C64, j_max: usize) -> Result<AeModel> {
    if !(gamma > 0.0) || !(g > 0.0) {
        return Err(Error::InvalidParameter(format!("γ = {gamma} and g = {g} must be positive")));
    }
    if !drive.is_finite() {
        return Err(Error::InvalidParameter("drive amplitude must be finite".into()));
    }
    if j_max < 1 {
        return Err(Error::InvalidParameter("need at least one excited cavity level".into()));
    }
    let levels = j_max + 1;
    let dims = vec![3, levels];
    let a = annihilation(levels)?;
    let ad = creation(levels)?;
    let num = &ad * &a;
    let id3 = Operator::identity(&[3]);
    let id_osc = Operator::identity(&[levels]);
    let sp_plus = outer_basis(3, ATOM_E, ATOM_PLUS)?;
    let sp_minus = outer_basis(3, ATOM_E, ATOM_MINUS)?;
    let sm_plus = sp_plus.adjoint();
    let sm_minus = sp_minus.adjoint();

    let y = &tensor(&id3, &num).scale_real(-gamma / 2.0) + &(&tensor(&sm_plus, &ad) - &tensor(&sp_plus, &a)).scale_real(g);
    let aa = tensor(&(&sm_minus.scale(drive.conj()) - &sp_minus.scale(drive)), &id_osc);
    let b = Operator::zeros(&dims);
    let f = tensor(&id3, &ad).scale_real(gamma.sqrt());

    let idx = |atom: usize, n: usize| atom * levels + n;
    let mut yt = CMatrix::zeros(3 * levels, 3 * levels);
    for j in 1..levels {
        let dj = d_j(gamma, g, j);
        let jf = j as f64;
        let basis = [idx(ATOM_PLUS, j), idx(ATOM_MINUS, j), idx(ATOM_E, j - 1)];
        let block = [
            [gamma / 2.0 * (jf - 1.0), 0.0, g * jf.sqrt()],
            [0.0, 2.0 * dj / (jf * gamma), 0.0],
            [-g * jf.sqrt(), 0.0, jf * gamma / 2.0],
        ];
        for (r, &br) in basis.iter().enumerate() {
            for (c, &bc) in basis.iter().enumerate() {
                yt[(br, bc)] = C64::new(-block[r][c] / dj, 0.0);
            }
        }
    }
    let ytilde = Operator::new(yt, dims.clone())?;
    let h0 = vec![idx(ATOM_PLUS, 0), idx(ATOM_MINUS, 0)];
    let complete = (0..3 * levels).filter(|&i| i != idx(ATOM_E, j_max)).collect();
    AeModel::new(
        format!("atom-cavity elimination gamma={gamma} g={g} levels={levels}"),
        y,
        ytilde,
        aa,
        b,
        vec![f],
        vec![Operator::zeros(&dims)],
        vec![vec![Operator::identity(&dims)]],
        h0,
        complete,
    )
}

/// Closed-form limit of the atom-cavity model on `(|+⟩, |−⟩)`: `S = I − 2P₋`, `L = −(α√γ/g)|+⟩⟨−|`, `H = 0`.
pub fn atom_cavity_limit_closed_form(gamma: f64, g: f64, drive: C64) -> Result<SlhModel> {
    let s = Operator::diagonal(&[ONE, -ONE])?;
    let mut l = CMatrix::zeros(2, 2);
    l[(0, 1)] = -drive * gamma.sqrt() / g;
    SlhModel::new("atom-cavity limit", vec![vec![s]], vec![Operator::from_matrix(l)?], Operator::zeros(&[2]), BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::c;

    #[test]
    fn d_j_values() {
        assert_eq!(d_j(25.0, 5.0, 1), 25.0);
        assert_eq!(d_j(25.0, 5.0, 2), 362.5);
    }

    #[test]
    fn atom_cavity_structure_and_limit() {
        for j_max in [4, 6] {
            let m = atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), j_max).unwrap();
            assert!(m.structure_defect() < 1e-12);
            let lim = limit_coefficients(&m).unwrap();
            let want = atom_cavity_limit_closed_form(25.0, 5.0, c(0.1, 0.0)).unwrap();
            assert!(lim.s(0, 0).max_abs_diff(want.s(0, 0)) < 1e-12);
            assert!(lim.l(0).max_abs_diff(want.l(0)) < 1e-12);
            assert!(lim.h().max_abs_diff(want.h()) < 1e-12);
        }
    }

    #[test]
    fn operators_at_zero_amplitude() {
        let m = atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), 4).unwrap();
        let (a, b) = ae_operators(&m, &[ZERO], &[ZERO]).unwrap();
        assert_eq!(a.max_abs_diff(m.a()), 0.0);
        assert_eq!(b.max_abs_diff(m.b()), 0.0);
    }

    #[test]
    fn constants_finite_and_guarded() {
        let m = atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), 4).unwrap();
        let lim = limit_coefficients(&m).unwrap();
        let a = c(0.1, 0.0);
        let cs = m_constants(&m, &lim, &[a], &[a], 1e4).unwrap();
        assert!(cs.m1.is_finite() && cs.m2.is_finite() && cs.m1 > 0.0);
        let small = atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), 2).unwrap();
        let lim2 = limit_coefficients(&small).unwrap();
        assert!(matches!(m_constants(&small, &lim2, &[a], &[a], 1e4), Err(Error::InsufficientTruncation(_))));
    }

    #[test]
    fn oscillator_scalar_case() {
        let gamma = 4.0;
        let one = |z: C64| Operator::diagonal(&[z]).unwrap();
        let m = oscillator_elimination(
            &one(ZERO),
            &one(ZERO),
            &one(ZERO),
            &one(c(-gamma / 2.0, 0.0)),
            &[one(c(gamma.sqrt(), 0.0))],
            &[one(ZERO)],
            &[vec![one(ONE)]],
            4,
        )
        .unwrap();
        let lim = limit_coefficients(&m).unwrap();
        assert!((lim.s(0, 0).entry(0, 0) + ONE).norm() < 1e-12);
        assert_eq!(lim.l(0).entry(0, 0), ZERO);
    }

    #[test]
    fn json_round_trip() {
        let m = atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), 4).unwrap();
        let back = AeModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.ytilde().max_abs_diff(m.ytilde()), 0.0);
        assert_eq!(back.slow_indices(), m.slow_indices());
    }
}
