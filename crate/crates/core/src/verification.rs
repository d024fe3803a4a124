//! Independent cross-checks of the numerical core: an adaptive ODE propagator, high-cutoff reference models and an explicit field-expansion residual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{atom_cavity_ae, atom_cavity_limit_closed_form, d_j, limit_coefficients, oscillator_elimination};
use crate::approx::{residual_norm, ApproxState};
use crate::error::{Error, Result};
use crate::operator::{expm, opnorm, CMatrix, CVector, Operator, StateVector, C64, ONE, ZERO};
use crate::semigroup::{generator, GeneratorParts, SimpleFunction, CONTRACTION_TOL};
use crate::slh::{kerr_cavity, ModelFamily, SlhModel};
use crate::truncation::z_bound;

/// Deliberate generator defects, used to check that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// Flip the sign of the `Σ_j β_j L_j*` term.
    FlipDriveCoupling,
}

/// Generator matrix, optionally with a defect injected.
pub fn generator_matrix(model: &SlhModel, alpha: &[C64], beta: &[C64], mutation: Option<Mutation>) -> Result<CMatrix> {
    let parts = GeneratorParts::new(model);
    let mut g = parts.assemble(alpha, beta)?;
    if let Some(Mutation::FlipDriveCoupling) = mutation {
        for (j, b) in beta.iter().enumerate() {
            g -= parts.coupling_adjoint(j) * (*b * 2.0);
        }
    }
    Ok(g)
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Solve `v′ = Gv` on `[0, t]` with local error per step at most `tol`.
pub fn ode_propagate(g: &Operator, u: &StateVector, t: f64, tol: f64) -> Result<StateVector> {
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::InvalidParameter(format!("tolerance {tol:e} outside [1e-12, 1e-6]")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t} must be finite and nonnegative")));
    }
    if g.dim() != u.dim() {
        return Err(Error::InvalidDimension("generator and vector dimensions differ".into()));
    }
    let gm = g.matrix();
    let mut v = u.vector().clone();
    if t == 0.0 {
        return StateVector::new(v, u.factor_dims().to_vec());
    }
    let scale = gm.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let mut h = (0.1 / scale).min(t);
    let mut s = 0.0;
    let mut k: Vec<CVector> = vec![CVector::zeros(v.len()); 7];
    k[0] = gm * &v;
    while s < t {
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::StepUnderflow(s));
        }
        let h_step = h.min(t - s);
        let hc = C64::new(h_step, 0.0);
        for stage in 1..7 {
            let mut y = v.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                if A[stage][j] != 0.0 {
                    y += kj * (hc * A[stage][j]);
                }
            }
            k[stage] = gm * y;
        }
        let mut v5 = v.clone();
        let mut err = CVector::zeros(v.len());
        for j in 0..7 {
            v5 += &k[j] * (hc * B5[j]);
            err += &k[j] * (hc * (B5[j] - B4[j]));
        }
        let e = err.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if e <= tol {
            s += h_step;
            v = v5;
            k[0] = k[6].clone();
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * (tol / e).powf(0.2)).clamp(0.2, 5.0) };
        h = h_step * factor;
    }
    StateVector::new(v, u.factor_dims().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalError {
    pub value: f64,
    /// The same quantity against a reference at twice the cutoff.
    pub value_doubled: f64,
    /// Doubling the reference changed the value by at most 1% (or 1e-12 absolute).
    pub converged: bool,
}

/// Copy a vector on `[..., k+1]` into `[..., K+1]` by zero padding the last factor.
pub fn embed_last_factor(u: &StateVector, big_levels: usize) -> Result<StateVector> {
    let dims = u.factor_dims();
    let small = *dims.last().unwrap();
    if big_levels < small {
        return Err(Error::InvalidDimension(format!("cannot embed {small} levels into {big_levels}")));
    }
    let outer = u.dim() / small;
    let mut v = CVector::zeros(outer * big_levels);
    for o in 0..outer {
        for n in 0..small {
            v[o * big_levels + n] = u.vector()[o * small + n];
        }
    }
    let mut big = dims.to_vec();
    *big.last_mut().unwrap() = big_levels;
    StateVector::new(v, big)
}

fn propagate_vec(model: &SlhModel, alpha: C64, beta: C64, t: f64, u: &StateVector, mutation: Option<Mutation>) -> Result<StateVector> {
    let g = generator_matrix(model, &[alpha], &[beta], mutation)?;
    let p = expm(&(g * C64::new(t, 0.0)))?;
    StateVector::new(p * u.vector(), u.factor_dims().to_vec())
}

/// `‖embed(T^(k)_t u) − T^(K)_t embed(u)‖` with the high-cutoff model standing in for the untruncated one.
#[allow(clippy::too_many_arguments)]
pub fn empirical_truncation_error(
    family: &ModelFamily,
    k: usize,
    k_ref: usize,
    alpha: C64,
    beta: C64,
    t: f64,
    u: &StateVector,
    mutation: Option<Mutation>,
) -> Result<EmpiricalError> {
    if k_ref < 3 * k {
        return Err(Error::InvalidParameter(format!("reference cutoff {k_ref} must be at least 3k = {}", 3 * k)));
    }
    let small = family.build(k)?;
    if u.dim() != small.dim() {
        return Err(Error::InvalidDimension("vector is not supported on the level-k space".into()));
    }
    let u = StateVector::new(u.vector().clone(), small.factor_dims().to_vec())?;
    let approx = propagate_vec(&small, alpha, beta, t, &u, mutation)?;
    let against = |kr: usize| -> Result<f64> {
        let big = family.build(kr)?;
        let ub = embed_last_factor(&u, kr + 1)?;
        let exact = propagate_vec(&big, alpha, beta, t, &ub, mutation)?;
        Ok(embed_last_factor(&approx, kr + 1)?.sub(&exact).norm())
    };
    let value = against(k_ref)?;
    let value_doubled = against(2 * k_ref)?;
    let converged = (value - value_doubled).abs() <= (0.01 * value_doubled).max(1e-12);
    Ok(EmpiricalError { value, value_doubled, converged })
}

/// Coefficients of `e(c·1_[0,t])` in the single-mode number basis up to `order`.
fn exp_vector_coeffs(c: C64, t: f64, order: usize) -> Vec<C64> {
    let z = c * t.sqrt();
    let mut out = Vec::with_capacity(order + 1);
    let mut term = ONE;
    out.push(term);
    for n in 1..=order {
        term = term * z / (n as f64).sqrt();
        out.push(term);
    }
    out
}

/// Residual of a one-interval approximant computed with explicitly expanded field vectors.
pub fn fock_expand_residual(
    model: &SlhModel,
    u: &StateVector,
    f: &SimpleFunction,
    approx: &ApproxState,
    order: usize,
) -> Result<f64> {
    if order < 12 {
        return Err(Error::InvalidParameter("expansion order must be at least 12".into()));
    }
    if f.intervals() != 1 || f.channels() != 1 || approx.terms().iter().any(|t| t.g.intervals() != 1 || t.g.channels() != 1) {
        return Err(Error::InvalidAmplitude("the expansion oracle handles one channel on one interval".into()));
    }
    let t = f.final_time();
    for x in std::iter::once(f.norm_sq()).chain(approx.terms().iter().map(|t| t.g.norm_sq())) {
        let mut tail = x.exp();
        for n in 1..=order + 1 {
            tail *= x / n as f64;
        }
        if tail > 1e-14 {
            return Err(Error::InvalidAmplitude(format!("amplitude norm² {x} too large for order {order}")));
        }
    }
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let ef = exp_vector_coeffs(f.value(0)[0], t, order);
    let ef_norm = dot(&ef, &ef).re.sqrt();
    let coherent: Vec<C64> = ef.iter().map(|z| z / ef_norm).collect();
    let fields: Vec<Vec<C64>> = approx.terms().iter().map(|term| exp_vector_coeffs(term.g.value(0)[0], t, order)).collect();

    let mut psi_prime_sq = ZERO;
    for (a, ta) in approx.terms().iter().enumerate() {
        for (b, tb) in approx.terms().iter().enumerate() {
            psi_prime_sq += ta.u.inner(&tb.u) * dot(&fields[a], &fields[b]);
        }
    }
    let mut cross = 0.0;
    for (term, field) in approx.terms().iter().zip(&fields) {
        let g = generator(model, f.value(0), term.g.value(0))?;
        let tv = ode_propagate(&g.matrix, &term.u, t, 1e-12)?;
        let eg_norm = dot(field, field).re.sqrt();
        cross += (u.inner(&tv) * eg_norm).re;
    }
    let psi_sq = u.vector().norm_squared() * dot(&coherent, &coherent).re;
    let sq = psi_sq - 2.0 * cross + psi_prime_sq.re;
    Ok(sq.max(0.0).sqrt())
}

/// A random model with identity scattering, coupling entries in `[−scale, scale]` and a random self-adjoint Hamiltonian.
pub fn random_slh_model<R: Rng>(rng: &mut R, dim: usize, channels: usize, scale: f64) -> Result<SlhModel> {
    let draw = |rng: &mut R| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
    let l = (0..channels)
        .map(|_| Operator::from_matrix(CMatrix::from_fn(dim, dim, |_, _| draw(rng))))
        .collect::<Result<Vec<_>>>()?;
    let x = CMatrix::from_fn(dim, dim, |_, _| draw(rng));
    let h = (&x + x.adjoint()) * C64::new(0.5, 0.0);
    let s = (0..channels)
        .map(|i| (0..channels).map(|j| if i == j { Operator::identity(&[dim]) } else { Operator::zeros(&[dim]) }).collect())
        .collect();
    SlhModel::new(format!("random dim={dim}"), s, l, Operator::from_matrix(h)?, Default::default())
}

pub fn random_amplitudes<R: Rng>(rng: &mut R, channels: usize, scale: f64) -> Vec<C64> {
    (0..channels).map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect()
}

pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> StateVector {
    let v = CVector::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = v.norm();
    StateVector::new(v / C64::new(n, 0.0), vec![dim]).expect("dimension is consistent")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceGrid {
    pub lambda: f64,
    pub ks: Vec<usize>,
    pub k_ref: usize,
    pub alpha: C64,
    pub beta: C64,
    pub times: Vec<f64>,
    pub r: usize,
    pub s: usize,
}

impl Default for DominanceGrid {
    fn default() -> Self {
        Self {
            lambda: 25.0,
            ks: (3..=10).collect(),
            k_ref: 60,
            alpha: C64::new(0.1, 0.0),
            beta: C64::new(0.1, 0.0),
            times: vec![0.1, 0.5, 1.0],
            r: 2,
            s: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceOutcome {
    pub cases: usize,
    pub violations: usize,
    /// Largest empirical/bound ratio seen.
    pub worst_ratio: f64,
    pub worst_case: (usize, f64, usize),
    pub unconverged: usize,
}

/// Compare the empirical truncation error with `z` at every grid point and basis state.
pub fn dominance_check(grid: &DominanceGrid, mutation: Option<Mutation>) -> Result<DominanceOutcome> {
    let delta = 50.0;
    let family = ModelFamily::Kerr { lambda: grid.lambda, delta, chi: -delta / 60.0 };
    let mut out = DominanceOutcome { cases: 0, violations: 0, worst_ratio: 0.0, worst_case: (0, 0.0, 0), unconverged: 0 };
    let reference = family.build(grid.k_ref)?;
    let doubled = family.build(2 * grid.k_ref)?;
    for &k in &grid.ks {
        let small = family.build(k)?;
        let consts = family.constants(k, &[grid.alpha], &[grid.beta])?;
        for &t in &grid.times {
            let z = z_bound(&consts, grid.r, grid.s, t)?;
            let ps = expm(&(generator_matrix(&small, &[grid.alpha], &[grid.beta], mutation)? * C64::new(t, 0.0)))?;
            let pr = expm(&(generator_matrix(&reference, &[grid.alpha], &[grid.beta], mutation)? * C64::new(t, 0.0)))?;
            let pd = expm(&(generator_matrix(&doubled, &[grid.alpha], &[grid.beta], mutation)? * C64::new(t, 0.0)))?;
            for n in 0..=k {
                let err = |p: &CMatrix, levels: usize| -> f64 {
                    let mut acc = 0.0;
                    for row in 0..levels {
                        let mut d = p[(row, n)];
                        if row <= k {
                            d -= ps[(row, n)];
                        }
                        acc += d.norm_sqr();
                    }
                    acc.sqrt()
                };
                let e = err(&pr, grid.k_ref + 1);
                let e2 = err(&pd, 2 * grid.k_ref + 1);
                if (e - e2).abs() > (0.01 * e2).max(1e-12) {
                    out.unconverged += 1;
                }
                out.cases += 1;
                let ratio = if z > 0.0 { e / z } else if e > 1e-12 { f64::INFINITY } else { 0.0 };
                if e > z + 1e-12 {
                    out.violations += 1;
                }
                if ratio > out.worst_ratio {
                    out.worst_ratio = ratio;
                    out.worst_case = (k, t, n);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteOptions {
    pub quick: bool,
    pub seed: u64,
    pub mutation: Option<Mutation>,
}

fn check(name: &str, metric: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: metric <= threshold, metric, threshold, detail }
}

/// Largest `‖e^{tG}u − ODE(u)‖` over random models with random amplitudes.
pub fn matexp_vs_ode(count: usize, max_dim: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let dim = 2 + (i * (max_dim - 2)) / count.max(1);
        let dim = dim.min(max_dim);
        let model = random_slh_model(&mut rng, dim, 1, 0.5)?;
        let (a, b) = (random_amplitudes(&mut rng, 1, 0.5), random_amplitudes(&mut rng, 1, 0.5));
        let g = generator(&model, &a, &b)?;
        let u = random_unit_vector(&mut rng, dim);
        let t = rng.random_range(0.1..1.0);
        let via_exp = crate::operator::matexp(&g.matrix, t)?.apply(&u);
        let via_ode = ode_propagate(&g.matrix, &u, t, 1e-12)?;
        worst = worst.max(via_exp.sub(&via_ode).norm());
    }
    Ok(worst)
}

/// Largest `‖e^{tG}‖ − 1` over the built-in and random model generators.
pub fn contraction_excess(seed: u64, quick: bool, mutation: Option<Mutation>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = C64::new(0.1, 0.0);
    let mut models = vec![kerr_cavity(25.0, 50.0, -50.0 / 60.0, 19)?, crate::slh::atom_cavity(25.0, 5.0, 8)?];
    if !quick {
        models.push(kerr_cavity(25.0, 50.0, -50.0 / 60.0, 59)?);
    }
    for d in [4, 12, 30] {
        models.push(random_slh_model(&mut rng, d, 1, 0.7)?);
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    for model in &models {
        for (al, be) in [(a, a), (ZERO, ZERO), (C64::new(0.3, -0.2), C64::new(-0.1, 0.4))] {
            let g = generator_matrix(model, &[al], &[be], mutation)?;
            for t in [0.01, 0.5, 2.0] {
                let p = Operator::from_matrix(expm(&(&g * C64::new(t, 0.0)))?)?;
                worst = worst.max(opnorm(&p) - 1.0);
            }
        }
    }
    Ok(worst)
}

/// Largest `‖T_{s+t} − T_s T_t‖` over a few generators.
pub fn semigroup_law_defect(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut models = vec![kerr_cavity(25.0, 50.0, -50.0 / 60.0, 19)?];
    models.push(random_slh_model(&mut rng, 10, 2, 0.5)?);
    for model in &models {
        let m = model.channels();
        let g = generator(model, &random_amplitudes(&mut rng, m, 0.3), &random_amplitudes(&mut rng, m, 0.3))?;
        for (s, t) in [(0.1, 0.4), (0.25, 0.25), (1.0, 0.5)] {
            let whole = crate::operator::matexp(&g.matrix, s + t)?;
            let parts = &crate::operator::matexp(&g.matrix, s)? * &crate::operator::matexp(&g.matrix, t)?;
            worst = worst.max(whole.max_abs_diff(&parts));
        }
    }
    Ok(worst)
}

/// Largest gap between the symbolic residual and the expanded-field oracle on small one-interval cases.
pub fn residual_oracle_gap(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let model = kerr_cavity(25.0, 50.0, -50.0 / 60.0, k)?;
        for t in [0.3f64, 1.0] {
            let amp = |rng: &mut ChaCha8Rng| C64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)) / t.sqrt();
            let f = SimpleFunction::constant(vec![amp(&mut rng)], t)?;
            let g = SimpleFunction::constant(vec![amp(&mut rng)], t)?;
            let u = StateVector::new(random_unit_vector(&mut rng, k + 1).into_vector(), vec![k + 1])?;
            let v = u.scale(C64::new(0.5, 0.0)).add(&StateVector::new(random_unit_vector(&mut rng, k + 1).into_vector(), vec![k + 1])?.scale(C64::new(0.3, 0.0)));
            let approx = ApproxState::single(v, g)?;
            let symbolic = residual_norm(&model, &u, &f, &approx)?;
            let oracle = fock_expand_residual(&model, &u, &f, &approx, 16)?;
            worst = worst.max((symbolic - oracle).abs());
        }
    }
    Ok(worst)
}

/// Worst structural defect over both elimination builders at two cutoffs, and the closed-form limit gap.
pub fn ae_structure_defects() -> Result<(f64, f64)> {
    let mut structure: f64 = 0.0;
    let mut closed: f64 = 0.0;
    let drive = C64::new(0.1, 0.0);
    for j_max in [4, 6] {
        let m = atom_cavity_ae(25.0, 5.0, drive, j_max)?;
        structure = structure.max(m.structure_defect());
        let lim = limit_coefficients(&m)?;
        let want = atom_cavity_limit_closed_form(25.0, 5.0, drive)?;
        closed = closed
            .max(lim.s(0, 0).max_abs_diff(want.s(0, 0)))
            .max(lim.l(0).max_abs_diff(want.l(0)))
            .max(lim.h().max_abs_diff(want.h()));
        let osc = sample_oscillator(j_max)?;
        structure = structure.max(osc.structure_defect());
        limit_coefficients(&osc)?;
    }
    closed = closed.max((d_j(25.0, 5.0, 1) - 25.0).abs()).max((d_j(25.0, 5.0, 2) - 362.5).abs());
    Ok((structure, closed))
}

/// A two-level system coupled through a damped cavity, used as the generic elimination example.
pub fn sample_oscillator(j_max: usize) -> Result<crate::adiabatic::AeModel> {
    let op = |rows: &[&[f64]]| Operator::from_real_rows(rows);
    let e11 = op(&[&[-2.0, 0.0], &[0.0, -2.0]])?.with_factor_dims(vec![2])?;
    let f = op(&[&[2.0, 0.0], &[0.0, 2.0]])?;
    let e10 = op(&[&[0.0, 0.5], &[0.0, 0.0]])?;
    let e01 = -&e10.adjoint();
    let e00 = Operator::zeros(&[2]);
    let id = Operator::identity(&[2]);
    oscillator_elimination(&e00, &e01, &e10, &e11, &[f], &[Operator::zeros(&[2])], &[vec![id]], j_max)
}

/// Run the whole suite. `quick` shrinks the randomized and grid portions.
pub fn run_suite(opts: &SuiteOptions) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    let (count, max_dim) = if opts.quick { (6, 20) } else { (20, 60) };
    let gap = matexp_vs_ode(count, max_dim, opts.seed)?;
    checks.push(check("matexp vs ODE", gap, 1e-8, format!("{count} random generators up to dim {max_dim}")));
    let excess = contraction_excess(opts.seed, opts.quick, opts.mutation)?;
    checks.push(check("contraction", excess, CONTRACTION_TOL, "‖e^{tG}‖ − 1 over model generators".into()));
    let law = semigroup_law_defect(opts.seed)?;
    checks.push(check("semigroup law", law, 1e-9, "max |T_{s+t} − T_s T_t|".into()));
    let oracle = residual_oracle_gap(opts.seed)?;
    checks.push(check("residual vs field expansion", oracle, 1e-10, "one-interval Kerr cases k ≤ 3".into()));
    let mut grid = DominanceGrid::default();
    if opts.quick {
        grid.ks = vec![3, 5, 8];
        grid.k_ref = 30;
    }
    let dom = dominance_check(&grid, opts.mutation)?;
    checks.push(check(
        "bound dominance",
        dom.violations as f64,
        0.0,
        format!("{} cases, worst ratio {:.4} at {:?}, {} unconverged", dom.cases, dom.worst_ratio, dom.worst_case, dom.unconverged),
    ));
    let (structure, closed) = ae_structure_defects()?;
    checks.push(check("elimination structure", structure, 1e-12, "ỸY = P⊥ and companions".into()));
    checks.push(check("elimination closed form", closed, 1e-12, "atom-cavity limit and d_j".into()));
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { passed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::c;

    #[test]
    fn ode_trivial_cases() {
        let u = StateVector::from_slice(&[c(1.0, 0.0), c(0.0, 2.0)]).unwrap();
        let z = Operator::zeros(&[2]);
        assert_eq!(ode_propagate(&z, &u, 1.0, 1e-10).unwrap(), u);
        let d = Operator::diagonal(&[c(-1.0, 2.0), c(0.5, 0.0)]).unwrap();
        let v = ode_propagate(&d, &u, 1.5, 1e-12).unwrap();
        assert!((v.entries()[0] - c(-1.5, 3.0).exp()).norm() < 1e-9);
        assert!((v.entries()[1] - c(0.0, 2.0) * 0.75f64.exp()).norm() < 1e-9);
        assert!(ode_propagate(&d, &u, 1.0, 1e-3).is_err());
    }

    #[test]
    fn vacuum_has_no_truncation_error() {
        let fam = ModelFamily::kerr_default();
        let u = StateVector::basis(&[4], 0).unwrap();
        let e = empirical_truncation_error(&fam, 3, 12, ZERO, ZERO, 0.7, &u, None).unwrap();
        assert!(e.value < 1e-12);
        let e0 = empirical_truncation_error(&fam, 3, 12, c(0.1, 0.0), c(0.1, 0.0), 0.0, &u, None).unwrap();
        assert_eq!(e0.value, 0.0);
    }
}
