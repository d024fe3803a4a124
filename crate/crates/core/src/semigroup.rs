//! Generators of the associated contraction semigroups and products over simple amplitudes.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{pairs_to_vec, vec_to_pairs};
use crate::operator::{matexp, numerical_abscissa, opnorm, CMatrix, Operator, StateVector, C64, I, ZERO};
use crate::slh::SlhModel;

/// Slack allowed on `‖e^{tG}‖ ≤ 1` before a generator is declared broken.
pub const CONTRACTION_TOL: f64 = 1e-9;

fn time_eps(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

/// Piecewise-constant `ℂ^m`-valued amplitude on `[0, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFunction {
    breakpoints: Vec<f64>,
    values: Vec<Vec<C64>>,
}

impl SimpleFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<C64>>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::Partition(format!(
                "{} breakpoints cannot carry {} interval values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Partition("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Partition("breakpoints must be finite and strictly increasing".into()));
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidAmplitude("every interval needs the same nonzero channel count".into()));
        }
        if values.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidAmplitude("amplitude values must be finite".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: Vec<C64>, t: f64) -> Result<Self> {
        Self::new(vec![0.0, t], vec![value])
    }

    /// Single-channel amplitude on `n` equal intervals of `[0, t]`.
    pub fn uniform_scalar(values: &[C64], t: f64) -> Result<Self> {
        let n = values.len();
        let bps = (0..=n).map(|i| if i == n { t } else { t * i as f64 / n as f64 }).collect();
        Self::new(bps, values.iter().map(|&z| vec![z]).collect())
    }

    pub fn channels(&self) -> usize {
        self.values[0].len()
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn final_time(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<C64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[C64] {
        &self.values[i]
    }

    pub fn duration(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn durations(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Value at time `s`, right-continuous; the final time maps to the last interval.
    pub fn eval(&self, s: f64) -> &[C64] {
        let idx = self.breakpoints[1..].partition_point(|&b| b <= s).min(self.intervals() - 1);
        &self.values[idx]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.durations())
            .map(|(v, dt)| v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt)
            .sum()
    }

    /// `⟨self, other⟩` in `L²`, antilinear in `self`.
    pub fn inner(&self, other: &SimpleFunction) -> Result<C64> {
        if self.channels() != other.channels() {
            return Err(Error::InvalidAmplitude("channel count mismatch".into()));
        }
        let (f, g) = refine_common(self, other)?;
        let mut acc = ZERO;
        for i in 0..f.intervals() {
            let dot: C64 = f.values[i].iter().zip(&g.values[i]).map(|(a, b)| a.conj() * b).sum();
            acc += dot * f.duration(i);
        }
        Ok(acc)
    }

    /// Re-express on a finer partition containing every current breakpoint.
    pub fn refine(&self, breakpoints: &[f64]) -> Result<SimpleFunction> {
        let t = self.final_time();
        let last = *breakpoints.last().ok_or_else(|| Error::Partition("empty partition".into()))?;
        if (last - t).abs() > time_eps(t) {
            return Err(Error::Domain(format!("final times differ: {t} vs {last}")));
        }
        for &b in &self.breakpoints {
            if !breakpoints.iter().any(|&x| (x - b).abs() <= time_eps(t)) {
                return Err(Error::Partition(format!("breakpoint {b} missing from the refinement")));
            }
        }
        let values = breakpoints
            .windows(2)
            .map(|w| self.eval(0.5 * (w[0] + w[1])).to_vec())
            .collect();
        let mut bps = breakpoints.to_vec();
        *bps.last_mut().unwrap() = t;
        SimpleFunction::new(bps, values)
    }

    pub fn same_partition(&self, other: &SimpleFunction) -> bool {
        let t = self.final_time();
        self.breakpoints.len() == other.breakpoints.len()
            && self.breakpoints.iter().zip(&other.breakpoints).all(|(a, b)| (a - b).abs() <= time_eps(t))
    }

    /// Values restricted to intervals `range`, shifted to start at 0.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<SimpleFunction> {
        let t0 = self.breakpoints[range.start];
        let bps = self.breakpoints[range.start..=range.end].iter().map(|b| b - t0).collect();
        SimpleFunction::new(bps, self.values[range].to_vec())
    }
}

/// Union of the partitions, merging breakpoints closer than a relative `1e-12`.
pub fn common_partition(fs: &[&SimpleFunction]) -> Result<Vec<f64>> {
    let first = fs.first().ok_or_else(|| Error::Partition("no functions to refine".into()))?;
    let t = first.final_time();
    for f in fs {
        if (f.final_time() - t).abs() > time_eps(t) {
            return Err(Error::Domain(format!("final times differ: {t} vs {}", f.final_time())));
        }
    }
    let mut all: Vec<f64> = fs.iter().flat_map(|f| f.breakpoints.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<f64> = Vec::with_capacity(all.len());
    for b in all {
        match merged.last() {
            Some(&last) if (b - last).abs() <= time_eps(t) => {}
            _ => merged.push(b),
        }
    }
    *merged.last_mut().unwrap() = t;
    Ok(merged)
}

pub fn refine_common(f: &SimpleFunction, g: &SimpleFunction) -> Result<(SimpleFunction, SimpleFunction)> {
    if f.same_partition(g) {
        return Ok((f.clone(), g.clone()));
    }
    let bps = common_partition(&[f, g])?;
    Ok((f.refine(&bps)?, g.refine(&bps)?))
}

#[derive(Serialize, Deserialize)]
struct SimpleFunctionFile {
    breakpoints: Vec<f64>,
    values: Vec<Vec<[f64; 2]>>,
}

impl Serialize for SimpleFunction {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        SimpleFunctionFile {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| vec_to_pairs(v)).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SimpleFunction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = SimpleFunctionFile::deserialize(de)?;
        let values = file.values.iter().map(|v| pairs_to_vec(v)).collect();
        SimpleFunction::new(file.breakpoints, values).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub matrix: Operator,
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
}

impl Generator {
    pub fn numerical_abscissa(&self) -> f64 {
        numerical_abscissa(&self.matrix)
    }
}

/// Amplitude-independent pieces of the generator, so that assembling it for new `(α, β)` is a linear combination.
#[derive(Clone, Debug)]
pub struct GeneratorParts {
    m: usize,
    /// `(S_ji)*`, indexed `[i][j]`.
    s_adj: Vec<Vec<CMatrix>>,
    /// `(S_ji)* L_j`, indexed `[i][j]`.
    s_adj_l: Vec<Vec<CMatrix>>,
    l_adj: Vec<CMatrix>,
    /// `iH − ½ Σ L_i* L_i`.
    drift: CMatrix,
    factor_dims: Vec<usize>,
}

impl GeneratorParts {
    pub fn new(model: &SlhModel) -> Self {
        let m = model.channels();
        let s_adj: Vec<Vec<CMatrix>> =
            (0..m).map(|i| (0..m).map(|j| model.s(j, i).matrix().adjoint()).collect()).collect();
        let s_adj_l = (0..m)
            .map(|i| (0..m).map(|j| &s_adj[i][j] * model.l(j).matrix()).collect())
            .collect();
        let l_adj: Vec<CMatrix> = model.couplings().iter().map(|l| l.matrix().adjoint()).collect();
        let mut drift = model.h().matrix() * I;
        for (l, la) in model.couplings().iter().zip(&l_adj) {
            drift -= (la * l.matrix()) * C64::new(0.5, 0.0);
        }
        Self { m, s_adj, s_adj_l, l_adj, drift, factor_dims: model.factor_dims().to_vec() }
    }

    pub fn channels(&self) -> usize {
        self.m
    }

    /// `L_j*`.
    pub fn coupling_adjoint(&self, j: usize) -> &CMatrix {
        &self.l_adj[j]
    }

    pub fn assemble(&self, alpha: &[C64], beta: &[C64]) -> Result<CMatrix> {
        let m = self.m;
        if alpha.len() != m || beta.len() != m {
            return Err(Error::InvalidAmplitude(format!(
                "expected {m} channels, got {} and {}",
                alpha.len(),
                beta.len()
            )));
        }
        let mut g = self.drift.clone();
        for i in 0..m {
            for j in 0..m {
                let shift = alpha[i].conj() * beta[j];
                if shift != ZERO {
                    g += &self.s_adj[i][j] * shift;
                }
                if alpha[i] != ZERO {
                    g -= &self.s_adj_l[i][j] * alpha[i].conj();
                }
            }
        }
        for j in 0..m {
            if beta[j] != ZERO {
                g += &self.l_adj[j] * beta[j];
            }
        }
        let energy: f64 = alpha.iter().chain(beta).map(|z| z.norm_sqr()).sum::<f64>() * 0.5;
        for d in 0..g.nrows() {
            g[(d, d)] -= C64::new(energy, 0.0);
        }
        Ok(g)
    }
}

/// Assemble the semigroup generator for field amplitudes `α` (bra side) and `β` (ket side).
pub fn generator(model: &SlhModel, alpha: &[C64], beta: &[C64]) -> Result<Generator> {
    let parts = GeneratorParts::new(model);
    generator_from_parts(&parts, alpha, beta)
}

pub fn generator_from_parts(parts: &GeneratorParts, alpha: &[C64], beta: &[C64]) -> Result<Generator> {
    let matrix = Operator::new(parts.assemble(alpha, beta)?, parts.factor_dims.clone())?;
    Ok(Generator { matrix, alpha: alpha.to_vec(), beta: beta.to_vec() })
}

/// `e^{tG}`, checked to be a contraction.
pub fn propagate(g: &Generator, t: f64) -> Result<Operator> {
    let p = matexp(&g.matrix, t)?;
    let norm = opnorm(&p);
    if norm > 1.0 + CONTRACTION_TOL {
        return Err(Error::ModelIntegrity(format!(
            "propagator norm {norm:.12} exceeds 1 at t = {t}; the generator is not dissipative"
        )));
    }
    Ok(p)
}

fn check_chain_inputs(model: &SlhModel, f: &SimpleFunction, g: &SimpleFunction, u: &StateVector) -> Result<()> {
    if !f.same_partition(g) {
        return Err(Error::Partition("bra and ket amplitudes must share breakpoints".into()));
    }
    if u.dim() != model.dim() {
        return Err(Error::InvalidDimension(format!("state has dim {}, model {}", u.dim(), model.dim())));
    }
    Ok(())
}

/// `T_{t₁−t₀}^{(f(0)g(0))} ··· T_{t−t_ℓ}^{(f(ℓ)g(ℓ))} u`; the last interval acts first.
pub fn chain(model: &SlhModel, f: &SimpleFunction, g: &SimpleFunction, u: &StateVector) -> Result<StateVector> {
    SemigroupCache::new(model).chain(f, g, u)
}

/// `⟨U_t*(u₁⊗e(f₁)), u₂⊗e(f₂)⟩` through the semigroup product identity.
pub fn weak_matrix_element(
    model: &SlhModel,
    u1: &StateVector,
    f1: &SimpleFunction,
    u2: &StateVector,
    f2: &SimpleFunction,
) -> Result<C64> {
    let (a, b) = refine_common(f1, f2)?;
    let v = chain(model, &a, &b, u2)?;
    let norms = (0.5 * (f1.norm_sq() + f2.norm_sq())).exp();
    Ok(u1.inner(&v) * norms)
}

type AmpKey = (Vec<(u64, u64)>, Vec<(u64, u64)>);

fn amp_key(alpha: &[C64], beta: &[C64]) -> AmpKey {
    let bits = |v: &[C64]| v.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
    (bits(alpha), bits(beta))
}

/// Memoized generators and propagators for one model, safe for concurrent readers.
pub struct SemigroupCache<'m> {
    model: &'m SlhModel,
    parts: GeneratorParts,
    generators: RwLock<HashMap<AmpKey, Arc<Generator>>>,
    propagators: RwLock<HashMap<(AmpKey, u64), Arc<Operator>>>,
}

impl<'m> SemigroupCache<'m> {
    pub fn new(model: &'m SlhModel) -> Self {
        Self { model, parts: GeneratorParts::new(model), generators: RwLock::new(HashMap::new()), propagators: RwLock::new(HashMap::new()) }
    }

    pub fn model(&self) -> &SlhModel {
        self.model
    }

    pub fn generator(&self, alpha: &[C64], beta: &[C64]) -> Result<Arc<Generator>> {
        let key = amp_key(alpha, beta);
        if let Some(g) = self.generators.read().unwrap().get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(generator_from_parts(&self.parts, alpha, beta)?);
        let mut map = self.generators.write().unwrap();
        Ok(Arc::clone(map.entry(key).or_insert(g)))
    }

    pub fn propagator(&self, alpha: &[C64], beta: &[C64], t: f64) -> Result<Arc<Operator>> {
        let key = (amp_key(alpha, beta), t.to_bits());
        if let Some(p) = self.propagators.read().unwrap().get(&key) {
            return Ok(Arc::clone(p));
        }
        let g = self.generator(alpha, beta)?;
        let p = Arc::new(propagate(&g, t)?);
        let mut map = self.propagators.write().unwrap();
        Ok(Arc::clone(map.entry(key).or_insert(p)))
    }

    pub fn chain(&self, f: &SimpleFunction, g: &SimpleFunction, u: &StateVector) -> Result<StateVector> {
        check_chain_inputs(self.model, f, g, u)?;
        let mut v = u.clone();
        for i in (0..f.intervals()).rev() {
            let p = self.propagator(f.value(i), g.value(i), f.duration(i))?;
            v = p.apply(&v);
        }
        Ok(v)
    }

    /// Adjoint of the chain map: `w` with `⟨w, x⟩ = ⟨u, chain(x)⟩`; the first interval acts first.
    pub fn chain_adjoint(&self, f: &SimpleFunction, g: &SimpleFunction, u: &StateVector) -> Result<StateVector> {
        check_chain_inputs(self.model, f, g, u)?;
        let mut v = u.clone();
        for i in 0..f.intervals() {
            let p = self.propagator(f.value(i), g.value(i), f.duration(i))?;
            v = p.adjoint().apply(&v);
        }
        Ok(v)
    }

    pub fn cached_propagators(&self) -> usize {
        self.propagators.read().unwrap().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::c;
    use crate::slh::kerr_cavity;
    use std::collections::BTreeMap;

    fn scalar(z: C64) -> Vec<C64> {
        vec![z]
    }

    #[test]
    fn refine_union() {
        let f = SimpleFunction::new(vec![0.0, 1.0, 2.0], vec![scalar(ONE_C), scalar(c(2.0, 0.0))]).unwrap();
        let g = SimpleFunction::new(vec![0.0, 0.5, 2.0], vec![scalar(c(3.0, 0.0)), scalar(c(4.0, 0.0))]).unwrap();
        let (a, b) = refine_common(&f, &g).unwrap();
        assert_eq!(a.breakpoints(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(b.breakpoints(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(a.value(1), &[ONE_C]);
        assert_eq!(b.value(1), &[c(4.0, 0.0)]);
        let (a2, _) = refine_common(&f, &f).unwrap();
        assert_eq!(a2, f);
        let h = SimpleFunction::constant(scalar(ONE_C), 3.0).unwrap();
        assert!(matches!(refine_common(&f, &h), Err(Error::Domain(_))));
    }

    const ONE_C: C64 = C64::new(1.0, 0.0);

    #[test]
    fn invalid_functions() {
        assert!(SimpleFunction::new(vec![0.0, 1.0, 1.0], vec![scalar(ONE_C), scalar(ONE_C)]).is_err());
        assert!(SimpleFunction::new(vec![0.1, 1.0], vec![scalar(ONE_C)]).is_err());
        assert!(SimpleFunction::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(SimpleFunction::new(vec![0.0, 1.0], vec![scalar(c(f64::NAN, 0.0))]).is_err());
    }

    #[test]
    fn eval_is_right_continuous() {
        let f = SimpleFunction::new(vec![0.0, 1.0, 2.0], vec![scalar(ONE_C), scalar(c(2.0, 0.0))]).unwrap();
        assert_eq!(f.eval(0.0), &[ONE_C]);
        assert_eq!(f.eval(1.0), &[c(2.0, 0.0)]);
        assert_eq!(f.eval(2.0), &[c(2.0, 0.0)]);
    }

    #[test]
    fn trivial_generator_is_zero() {
        let model = SlhModel::new(
            "null",
            vec![vec![Operator::identity(&[3])]],
            vec![Operator::zeros(&[3])],
            Operator::zeros(&[3]),
            BTreeMap::new(),
        )
        .unwrap();
        let g = generator(&model, &[ZERO], &[ZERO]).unwrap();
        assert_eq!(g.matrix.matrix(), &CMatrix::zeros(3, 3));
        let z = c(0.3, -0.7);
        let g = generator(&model, &[z], &[z]).unwrap();
        assert!(g.matrix.matrix().iter().all(|x| x.norm() < 1e-16));
        assert!(generator(&model, &[ZERO, ZERO], &[ZERO]).is_err());
    }

    #[test]
    fn kerr_k1_generator_diagonal() {
        let model = kerr_cavity(25.0, 50.0, -50.0 / 60.0, 1).unwrap();
        let g = generator(&model, &[ZERO], &[ZERO]).unwrap();
        assert_eq!(g.matrix.entry(0, 0), ZERO);
        assert!((g.matrix.entry(1, 1) - c(-12.5, 50.0)).norm() < 1e-14);
    }

    #[test]
    fn cache_reuses_propagators() {
        let model = kerr_cavity(25.0, 50.0, -50.0 / 60.0, 4).unwrap();
        let cache = SemigroupCache::new(&model);
        let f = SimpleFunction::uniform_scalar(&[c(0.1, 0.0); 10], 5.0).unwrap();
        let u = StateVector::basis(&[5], 0).unwrap();
        let a = cache.chain(&f, &f, &u).unwrap();
        assert_eq!(cache.cached_propagators(), 1);
        let b = chain(&model, &f, &f, &u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_rejects_partition_mismatch() {
        let model = kerr_cavity(25.0, 50.0, 0.0, 2).unwrap();
        let f = SimpleFunction::uniform_scalar(&[c(0.1, 0.0); 2], 1.0).unwrap();
        let g = SimpleFunction::constant(scalar(c(0.1, 0.0)), 1.0).unwrap();
        let u = StateVector::basis(&[3], 0).unwrap();
        assert!(matches!(chain(&model, &f, &g, &u), Err(Error::Partition(_))));
    }
}
