//! Finite superpositions `Σ_j u_j ⊗ e(g_j)`, their residual against the propagated state, and the cost minimizer.

use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{pairs_to_vec, vec_to_pairs};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::operator::{expm, CMatrix, CVector, StateVector, C64, ZERO};
use crate::semigroup::{common_partition, refine_common, GeneratorParts, SemigroupCache, SimpleFunction};
use crate::slh::SlhModel;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub u: StateVector,
    pub g: SimpleFunction,
}

impl Term {
    /// `‖u ⊗ e(g)‖ = ‖u‖ e^{‖g‖²/2}`.
    pub fn norm(&self) -> f64 {
        self.u.norm() * (0.5 * self.g.norm_sq()).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxState {
    terms: Vec<Term>,
}

impl ApproxState {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidApproximant("approximant has no terms".into()))?;
        let t = first.g.final_time();
        let dim = first.u.dim();
        let m = first.g.channels();
        for (j, term) in terms.iter().enumerate() {
            if (term.g.final_time() - t).abs() > 1e-12 * t.max(1.0) {
                return Err(Error::Domain(format!("term {j} ends at {} instead of {t}", term.g.final_time())));
            }
            if term.u.dim() != dim || term.g.channels() != m {
                return Err(Error::InvalidApproximant(format!("term {j} has inconsistent dimensions")));
            }
            if term.u.norm() == 0.0 {
                return Err(Error::InvalidApproximant(format!("term {j} has a zero system vector")));
            }
        }
        Ok(Self { terms })
    }

    /// Terms given as `v_j ⊗ |g_j⟩` with normalized coherent states.
    pub fn from_coherent(terms: Vec<Term>) -> Result<Self> {
        let scaled = terms
            .into_iter()
            .map(|t| {
                let s = (-0.5 * t.g.norm_sq()).exp();
                Term { u: t.u.scale(C64::new(s, 0.0)), g: t.g }
            })
            .collect();
        Self::new(scaled)
    }

    pub fn single(u: StateVector, g: SimpleFunction) -> Result<Self> {
        Self::new(vec![Term { u, g }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn final_time(&self) -> f64 {
        self.terms[0].g.final_time()
    }

    pub fn dim(&self) -> usize {
        self.terms[0].u.dim()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Relabel every system vector with a tensor structure.
    pub fn with_factor_dims(self, dims: &[usize]) -> Result<Self> {
        let terms = self
            .terms
            .into_iter()
            .map(|t| Ok(Term { u: StateVector::new(t.u.into_vector(), dims.to_vec())?, g: t.g }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }
}

#[derive(Serialize, Deserialize)]
struct TermFile {
    u: Vec<[f64; 2]>,
    g: SimpleFunction,
}

#[derive(Serialize, Deserialize)]
struct ApproxStateFile {
    t: f64,
    terms: Vec<TermFile>,
}

impl Serialize for ApproxState {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ApproxStateFile {
            t: self.final_time(),
            terms: self.terms.iter().map(|t| TermFile { u: vec_to_pairs(t.u.entries()), g: t.g.clone() }).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ApproxState {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = ApproxStateFile::deserialize(de)?;
        let terms = file
            .terms
            .into_iter()
            .map(|t| {
                let u = StateVector::from_slice(&pairs_to_vec(&t.u))?;
                Ok(Term { u, g: t.g })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let state = ApproxState::new(terms).map_err(serde::de::Error::custom)?;
        if (state.final_time() - file.t).abs() > 1e-12 * file.t.abs().max(1.0) {
            return Err(serde::de::Error::custom("declared final time does not match the amplitudes"));
        }
        Ok(state)
    }
}

/// `⟨e(f), e(g)⟩ = exp⟨f, g⟩`.
pub fn exp_inner(f: &SimpleFunction, g: &SimpleFunction) -> Result<C64> {
    Ok(f.inner(g)?.exp())
}

fn norm_sq_of(state: &ApproxState) -> Result<f64> {
    let terms = state.terms();
    let mut acc = 0.0;
    for (i, a) in terms.iter().enumerate() {
        acc += a.u.norm_sqr() * a.g.norm_sq().exp();
        for b in &terms[i + 1..] {
            acc += 2.0 * (a.u.inner(&b.u) * exp_inner(&a.g, &b.g)?).re;
        }
    }
    Ok(acc)
}

pub fn approx_norm(state: &ApproxState) -> Result<f64> {
    Ok(norm_sq_of(state)?.max(0.0).sqrt())
}

/// `Σ_j ‖e(g_j)‖ Re⟨u, T···u_j⟩` over the common partition of `f′` and each `g_j`.
fn overlap_sum(model: &SlhModel, u: &StateVector, f_prime: &SimpleFunction, state: &ApproxState) -> Result<f64> {
    if u.dim() != model.dim() || state.dim() != model.dim() {
        return Err(Error::InvalidDimension("state and model dimensions differ".into()));
    }
    let cache = SemigroupCache::new(model);
    let mut acc = 0.0;
    for term in state.terms() {
        let (f, g) = refine_common(f_prime, &term.g)?;
        let v = cache.chain(&f, &g, &term.u)?;
        acc += (0.5 * g.norm_sq()).exp() * u.inner(&v).re;
    }
    Ok(acc)
}

fn residual_from(psi_norm_sq: f64, model: &SlhModel, u: &StateVector, f_prime: &SimpleFunction, state: &ApproxState) -> Result<f64> {
    let cross = overlap_sum(model, u, f_prime, state)?;
    let sq = psi_norm_sq - 2.0 * cross + norm_sq_of(state)?;
    if !sq.is_finite() {
        return Err(Error::Numeric("residual is not finite".into()));
    }
    Ok(sq.max(0.0).sqrt())
}

/// `‖U^(k)*(u ⊗ |f′⟩) − ψ′‖` without expanding any field states.
pub fn residual_norm(model: &SlhModel, u: &StateVector, f_prime: &SimpleFunction, state: &ApproxState) -> Result<f64> {
    residual_from(u.norm_sqr(), model, u, f_prime, state)
}

/// The residual with `‖ψ‖ = 1`.
pub fn cost(model: &SlhModel, u: &StateVector, f_prime: &SimpleFunction, state: &ApproxState) -> Result<f64> {
    residual_from(1.0, model, u, f_prime, state)
}

trait NormSqr {
    fn norm_sqr(&self) -> f64;
}

impl NormSqr for StateVector {
    fn norm_sqr(&self) -> f64 {
        self.vector().norm_squared()
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    /// Extra simplex restarts from the incumbent after the first run.
    pub restarts: usize,
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub initial_step: f64,
    pub seed: u64,
    /// Refine every `g_j` onto this partition before optimizing.
    pub partition: Option<Vec<f64>>,
    /// Optimize sequentially over blocks of this many intervals, marching the horizon forward.
    pub block_len: Option<usize>,
    /// Inside each block, search groups of this many intervals at a time (all terms), cycling `sweeps` times.
    pub group_len: Option<usize>,
    pub sweeps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_evals: 4000,
            f_tol: 1e-15,
            x_tol: 1e-9,
            initial_step: 0.02,
            seed: 0,
            partition: None,
            block_len: None,
            group_len: None,
            sweeps: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub state: ApproxState,
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: usize,
    pub stages: usize,
    /// A non-finite cost was met; the best finite point is returned.
    pub search_failure: bool,
}

/// Propagator adjoints keyed by `(α, β, Δt)` bit patterns, local to one evaluation.
type PropKey = (Vec<u64>, u64);

struct Engine {
    parts: GeneratorParts,
    fp: SimpleFunction,
    dim: usize,
    m: usize,
}

struct StageValue {
    j2: f64,
    coeffs: Vec<CVector>,
    w: Vec<CVector>,
    gram: CMatrix,
}

/// Tikhonov shift keeping the coefficient solve well posed when terms coincide.
const RIDGE: f64 = 1e-12;

impl Engine {
    fn key(&self, alpha: &[C64], beta: &[C64], dt: f64) -> PropKey {
        let mut bits = Vec::with_capacity(4 * self.m);
        for z in alpha.iter().chain(beta) {
            bits.push(z.re.to_bits());
            bits.push(z.im.to_bits());
        }
        (bits, dt.to_bits())
    }

    /// Push the prefix adjoint vectors through `range` and solve for the best coefficients.
    fn stage(
        &self,
        w_pre: &[CVector],
        gram_pre: &CMatrix,
        range: Range<usize>,
        value: &dyn Fn(usize, usize) -> Vec<C64>,
    ) -> Result<StageValue> {
        let n = w_pre.len();
        let mut props: HashMap<PropKey, CMatrix> = HashMap::new();
        let mut w = w_pre.to_vec();
        let mut gvals: Vec<Vec<Vec<C64>>> = vec![Vec::with_capacity(range.len()); n];
        for j in 0..n {
            for i in range.clone() {
                let beta = value(j, i);
                let alpha = self.fp.value(i);
                let dt = self.fp.duration(i);
                let key = self.key(alpha, &beta, dt);
                if !props.contains_key(&key) {
                    let g = self.parts.assemble(alpha, &beta)?;
                    props.insert(key.clone(), expm(&(g * C64::new(dt, 0.0)))?);
                }
                w[j] = props[&key].ad_mul(&w[j]);
                gvals[j].push(beta);
            }
        }
        let mut gram = gram_pre.clone();
        for a in 0..n {
            for b in 0..n {
                let mut acc = ZERO;
                for (p, i) in range.clone().enumerate() {
                    let dot: C64 = gvals[a][p].iter().zip(&gvals[b][p]).map(|(x, y)| x.conj() * y).sum();
                    acc += dot * self.fp.duration(i);
                }
                gram[(a, b)] += acc;
            }
        }
        let e = gram.map(|z| z.exp());
        let mut rhs = CMatrix::zeros(n, self.dim);
        for j in 0..n {
            let scale = (0.5 * gram[(j, j)].re).exp();
            for d in 0..self.dim {
                rhs[(j, d)] = w[j][d].conj() * scale;
            }
        }
        // rows of `rhs` hold conj(b_j); solve (E + ridge) X = conj-rows, then coefficients are conj(X)^T
        let shifted = &e + CMatrix::identity(n, n) * C64::new(RIDGE, 0.0);
        let x = shifted
            .clone()
            .lu()
            .solve(&rhs.map(|z| z.conj()))
            .ok_or_else(|| Error::Numeric("coefficient system is singular".into()))?;
        let coeffs: Vec<CVector> = (0..n).map(|j| x.row(j).transpose()).collect();
        let mut quad = ZERO;
        for a in 0..n {
            for b in 0..n {
                quad += coeffs[a].dotc(&coeffs[b]) * e[(a, b)];
            }
        }
        let mut lin = 0.0;
        for j in 0..n {
            let scale = (0.5 * gram[(j, j)].re).exp();
            lin += (w[j].dotc(&coeffs[j]) * scale).re;
        }
        let j2 = 1.0 + quad.re - 2.0 * lin;
        Ok(StageValue { j2, coeffs, w, gram })
    }
}

fn pack(values: &[Vec<C64>]) -> Vec<f64> {
    values.iter().flatten().flat_map(|z| [z.re, z.im]).collect()
}

fn unpack(x: &[f64], m: usize) -> Vec<Vec<C64>> {
    x.chunks(2 * m).map(|ch| ch.chunks(2).map(|p| C64::new(p[0], p[1])).collect()).collect()
}

struct SearchResult {
    x: Vec<f64>,
    evals: usize,
    non_finite: bool,
}

fn search<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], schedule: &Schedule, rng: &mut ChaCha8Rng) -> SearchResult {
    let opts = NelderMeadOptions { max_evals: schedule.max_evals, f_tol: schedule.f_tol, x_tol: schedule.x_tol };
    let steps = vec![schedule.initial_step; x0.len()];
    let mut best = nelder_mead::minimize(&mut f, x0, &steps, &opts);
    let mut evals = best.evals;
    let mut non_finite = best.saw_non_finite;
    for _ in 0..schedule.restarts {
        let steps: Vec<f64> = (0..x0.len())
            .map(|_| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * schedule.initial_step * rng.random_range(0.25..1.0)
            })
            .collect();
        let r = nelder_mead::minimize(&mut f, &best.x, &steps, &opts);
        evals += r.evals;
        non_finite |= r.saw_non_finite;
        if r.f < best.f {
            best = r;
        }
    }
    SearchResult { x: best.x, evals, non_finite }
}

/// Minimize the cost over the amplitudes `g_j`; the system vectors `u_j` are solved exactly at each evaluation.
pub fn optimize(
    model: &SlhModel,
    u: &StateVector,
    f_prime: &SimpleFunction,
    initial: &ApproxState,
    schedule: &Schedule,
) -> Result<OptimizeOutcome> {
    let initial_cost = cost(model, u, f_prime, initial)?;
    let n = initial.terms().len();
    let m = f_prime.channels();
    let dims = model.factor_dims().to_vec();

    // amplitude partitions of the search
    let own: Vec<SimpleFunction> = initial
        .terms()
        .iter()
        .map(|t| match &schedule.partition {
            Some(p) => t.g.refine(&merge_into(&t.g, p)?),
            None => Ok(t.g.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<&SimpleFunction> = vec![f_prime];
    all.extend(own.iter());
    let fine = common_partition(&all)?;
    let fp = f_prime.refine(&fine)?;
    let engine = Engine { parts: GeneratorParts::new(model), fp, dim: model.dim(), m };
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let w0 = vec![u.vector().clone(); n];
    let gram0 = CMatrix::zeros(n, n);
    let intervals = engine.fp.intervals();
    let mut evaluations = 0usize;
    let mut search_failure = false;

    let (gfuncs, coeffs, stages) = if let Some(block) = schedule.block_len {
        if block == 0 {
            return Err(Error::InvalidParameter("block length must be positive".into()));
        }
        let mut vals: Vec<Vec<Vec<C64>>> = own.iter().map(|g| g.refine(&fine).map(|r| r.values().to_vec())).collect::<Result<_>>()?;
        let mut w_pre = w0;
        let mut gram_pre = gram0;
        let mut coeffs = Vec::new();
        let mut stages = 0usize;
        let mut start = 0usize;
        while start < intervals {
            let end = (start + block).min(intervals);
            if start > 0 {
                // continue each term from its last optimized value
                for v in vals.iter_mut() {
                    let last = v[start - 1].clone();
                    for slot in v[start..end].iter_mut() {
                        *slot = last.clone();
                    }
                }
            }
            let x0: Vec<f64> = vals.iter().flat_map(|v| pack(&v[start..end])).collect();
            let per_term = (end - start) * 2 * m;
            let objective = |x: &[f64]| -> f64 {
                let blocks: Vec<Vec<Vec<C64>>> = x.chunks(per_term).map(|ch| unpack(ch, m)).collect();
                let value = |j: usize, i: usize| blocks[j][i - start].clone();
                engine.stage(&w_pre, &gram_pre, start..end, &value).map_or(f64::NAN, |s| s.j2)
            };
            let x = match schedule.group_len {
                Some(glen) if glen < end - start => {
                    let mut x = x0;
                    for _ in 0..schedule.sweeps.max(1) {
                        let mut p0 = 0;
                        while p0 < end - start {
                            let p1 = (p0 + glen).min(end - start);
                            let idx: Vec<usize> = (0..n).flat_map(|j| j * per_term + p0 * 2 * m..j * per_term + p1 * 2 * m).collect();
                            let sub0: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                            let base = x.clone();
                            let sub_objective = |y: &[f64]| -> f64 {
                                let mut full = base.clone();
                                for (&i, v) in idx.iter().zip(y) {
                                    full[i] = *v;
                                }
                                objective(&full)
                            };
                            let r = search(sub_objective, &sub0, schedule, &mut rng);
                            evaluations += r.evals;
                            search_failure |= r.non_finite;
                            for (&i, v) in idx.iter().zip(&r.x) {
                                x[i] = *v;
                            }
                            p0 = p1;
                        }
                    }
                    x
                }
                _ => {
                    let r = search(objective, &x0, schedule, &mut rng);
                    evaluations += r.evals;
                    search_failure |= r.non_finite;
                    r.x
                }
            };
            for (j, ch) in x.chunks(per_term).enumerate() {
                for (p, z) in unpack(ch, m).into_iter().enumerate() {
                    vals[j][start + p] = z;
                }
            }
            let value = |j: usize, i: usize| vals[j][i].clone();
            let sv = engine.stage(&w_pre, &gram_pre, start..end, &value)?;
            w_pre = sv.w;
            gram_pre = sv.gram;
            coeffs = sv.coeffs;
            stages += 1;
            start = end;
        }
        let gfuncs = vals
            .into_iter()
            .map(|v| SimpleFunction::new(fine.clone(), v))
            .collect::<Result<Vec<_>>>()?;
        (gfuncs, coeffs, stages)
    } else {
        // map fine intervals to each term's own intervals
        let maps: Vec<Vec<usize>> = own
            .iter()
            .map(|g| {
                (0..intervals)
                    .map(|i| {
                        let mid = 0.5 * (fine[i] + fine[i + 1]);
                        g.breakpoints()[1..].partition_point(|&b| b <= mid).min(g.intervals() - 1)
                    })
                    .collect()
            })
            .collect();
        let sizes: Vec<usize> = own.iter().map(|g| g.intervals() * 2 * m).collect();
        let x0: Vec<f64> = own.iter().flat_map(|g| pack(g.values())).collect();
        let split = |x: &[f64]| -> Vec<Vec<Vec<C64>>> {
            let mut out = Vec::with_capacity(n);
            let mut off = 0;
            for s in &sizes {
                out.push(unpack(&x[off..off + s], m));
                off += s;
            }
            out
        };
        let objective = |x: &[f64]| -> f64 {
            let vals = split(x);
            let value = |j: usize, i: usize| vals[j][maps[j][i]].clone();
            engine.stage(&w0, &gram0, 0..intervals, &value).map_or(f64::NAN, |s| s.j2)
        };
        let r = search(objective, &x0, schedule, &mut rng);
        evaluations += r.evals;
        search_failure |= r.non_finite;
        let vals = split(&r.x);
        let value = |j: usize, i: usize| vals[j][maps[j][i]].clone();
        let sv = engine.stage(&w0, &gram0, 0..intervals, &value)?;
        let gfuncs = own
            .iter()
            .zip(vals)
            .map(|(g, v)| SimpleFunction::new(g.breakpoints().to_vec(), v))
            .collect::<Result<Vec<_>>>()?;
        (gfuncs, sv.coeffs, 1)
    };

    let terms = gfuncs
        .into_iter()
        .zip(coeffs)
        .map(|(g, c)| Ok(Term { u: StateVector::new(c, dims.clone())?, g }))
        .collect::<Result<Vec<_>>>();
    let candidate = terms.and_then(ApproxState::new);
    let (state, final_cost) = match candidate {
        Ok(s) => {
            let c = cost(model, u, f_prime, &s)?;
            if c <= initial_cost {
                (s, c)
            } else {
                (initial.clone(), initial_cost)
            }
        }
        Err(_) => (initial.clone(), initial_cost),
    };
    Ok(OptimizeOutcome { state, cost: final_cost, initial_cost, evaluations, stages, search_failure })
}

/// Refine `g` onto the union of its partition and `extra`.
fn merge_into(g: &SimpleFunction, extra: &[f64]) -> Result<Vec<f64>> {
    let t = g.final_time();
    let vals = vec![vec![ZERO; g.channels()]; extra.len().saturating_sub(1)];
    let other = SimpleFunction::new(extra.to_vec(), vals)?;
    if (other.final_time() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::Domain(format!("schedule partition ends at {} instead of {t}", other.final_time())));
    }
    common_partition(&[g, &other])
}

/// `|0⟩`-style reference: the basis vector `index` of the model space.
pub fn basis_state(model: &SlhModel, index: usize) -> Result<StateVector> {
    StateVector::basis(model.factor_dims(), index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{c, ONE};
    use crate::slh::kerr_cavity;

    #[test]
    fn exp_inner_examples() {
        let z = SimpleFunction::constant(vec![ZERO], 1.0).unwrap();
        assert_eq!(exp_inner(&z, &z).unwrap(), ONE);
        let f = SimpleFunction::constant(vec![c(0.1, 0.0)], 5.0).unwrap();
        assert!((exp_inner(&f, &f).unwrap() - c(0.05f64.exp(), 0.0)).norm() < 1e-15);
        let fine = f.refine(&[0.0, 1.0, 2.5, 5.0]).unwrap();
        assert!((fine.norm_sq() - f.norm_sq()).abs() < 1e-15);
    }

    #[test]
    fn norms_of_simple_states() {
        let u = StateVector::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let g = SimpleFunction::constant(vec![c(0.3, -0.2)], 2.0).unwrap();
        let one = ApproxState::single(u.clone(), g.clone()).unwrap();
        let want = (0.5 * g.norm_sq()).exp();
        assert!((approx_norm(&one).unwrap() - want).abs() < 1e-14);
        let two = ApproxState::new(vec![Term { u: u.clone(), g: g.clone() }, Term { u, g }]).unwrap();
        assert!((approx_norm(&two).unwrap() - 2.0 * want).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let u = StateVector::from_slice(&[c(0.6, 0.1), c(0.0, 0.8)]).unwrap();
        let g = SimpleFunction::uniform_scalar(&[c(0.3, -0.2), c(0.1, 0.0)], 2.0).unwrap();
        let s = ApproxState::single(u, g).unwrap();
        let text = s.to_json().unwrap();
        assert_eq!(ApproxState::from_json(&text).unwrap(), s);
        assert!(ApproxState::new(vec![]).is_err());
    }

    #[test]
    fn kerr_optimizer_improves_cost() {
        let model = kerr_cavity(25.0, 50.0, -50.0 / 60.0, 6).unwrap();
        let u = basis_state(&model, 0).unwrap();
        let f = SimpleFunction::uniform_scalar(&[c(0.1, 0.0); 10], 5.0).unwrap();
        let g = SimpleFunction::constant(vec![c(0.1, 0.0)], 5.0).unwrap();
        let init = ApproxState::single(u.clone(), g).unwrap();
        let schedule = Schedule { partition: Some(vec![0.0, 0.5, 5.0]), restarts: 1, ..Default::default() };
        let out = optimize(&model, &u, &f, &init, &schedule).unwrap();
        assert!(out.cost <= out.initial_cost);
        assert!(out.cost < 0.012, "{}", out.cost);
    }
}
