//! Truncation error functional `z`, per-model constants and certificate assembly.

use serde::{Deserialize, Serialize};

use crate::approx::{residual_norm, ApproxState};
use crate::error::{Error, Result};
use crate::io::{complex_to_pair, pair_to_complex};
use crate::operator::{StateVector, C64};
use crate::semigroup::{common_partition, SimpleFunction};
use crate::slh::{ModelFamily, SlhModel};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundConstants {
    pub gamma: f64,
    pub q_l: f64,
    pub q_a: f64,
    pub q_e: f64,
    pub k: usize,
    pub alpha: C64,
    pub beta: C64,
}

impl BoundConstants {
    pub fn new(gamma: f64, q_l: f64, q_a: f64, q_e: f64) -> Result<Self> {
        let c = Self { gamma, q_l, q_a, q_e, k: 0, alpha: C64::new(0.0, 0.0), beta: C64::new(0.0, 0.0) };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::DegenerateRate(format!("gamma = {} must be positive", self.gamma)));
        }
        for (name, q) in [("q_l", self.q_l), ("q_a", self.q_a), ("q_e", self.q_e)] {
            if !(q >= 0.0) || !q.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {q} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct BoundConstantsFile {
    gamma: f64,
    q_l: f64,
    q_a: f64,
    q_e: f64,
    #[serde(default)]
    k: usize,
    #[serde(default)]
    alpha: [f64; 2],
    #[serde(default)]
    beta: [f64; 2],
}

impl Serialize for BoundConstants {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        BoundConstantsFile {
            gamma: self.gamma,
            q_l: self.q_l,
            q_a: self.q_a,
            q_e: self.q_e,
            k: self.k,
            alpha: complex_to_pair(self.alpha),
            beta: complex_to_pair(self.beta),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for BoundConstants {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let f = BoundConstantsFile::deserialize(de)?;
        let c = BoundConstants {
            gamma: f.gamma,
            q_l: f.q_l,
            q_a: f.q_a,
            q_e: f.q_e,
            k: f.k,
            alpha: pair_to_complex(f.alpha),
            beta: pair_to_complex(f.beta),
        };
        c.validate().map_err(serde::de::Error::custom)?;
        Ok(c)
    }
}

/// `c₀ = 1`, `c_j = √(c_{j−1} 2^j / (2^j − 1))`.
pub fn c_sequence(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut prev = 1.0;
    for j in 0..n {
        if j > 0 {
            let p = 2f64.powi(j as i32);
            prev = (prev * p / (p - 1.0)).sqrt();
        }
        out.push(prev);
    }
    out
}

/// Per-interval truncation error functional for one set of constants.
pub fn z_bound(c: &BoundConstants, r: usize, s: usize, t: f64) -> Result<f64> {
    if r == 0 || s == 0 {
        return Err(Error::InvalidParameter("r and s must be at least 1".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t} must be finite and nonnegative")));
    }
    c.validate()?;
    let g = c.gamma;
    let e = c.q_e / g;
    let a = c.q_a / g;
    let cs = c_sequence(r.max(s));
    let pow2 = |i: usize| 2f64.powi(i as i32);
    let expo = |i: usize| 1.0 - 2f64.powi(-(i as i32));
    let decay = |i: usize| (-g * t / pow2(i)).exp();

    let mut total = t * e.powf(expo(r)) * a.powf(expo(s));
    for i in 0..r {
        total += pow2(i) * cs[i] / g * (1.0 - decay(i)) * e.powf(expo(i)) * a.powf(expo(s));
    }
    for i in 1..s {
        total += pow2(i) * cs[i] / g * (1.0 - decay(i)) * a.powf(expo(i)) * e.powf(expo(r));
    }
    for i in 0..r {
        for j in (0..s).filter(|&j| j != i) {
            let coef = cs[i] * cs[j] * pow2(i + j) / ((pow2(i) - pow2(j)) * g);
            total += coef * (decay(i) - decay(j)) * e.powf(expo(i)) * a.powf(expo(j));
        }
    }
    let tail: f64 = (0..r.min(s)).map(|i| cs[i] * cs[i] * decay(i) * (e * a).powf(expo(i))).sum();
    total += t * tail;
    Ok(c.q_l * total)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn finish(gamma: f64, q_l: f64, q_a: f64, q_e: f64, k: usize, alpha: C64, beta: C64) -> Result<BoundConstants> {
    if gamma == 0.0 {
        return Err(Error::DegenerateRate(format!("gamma vanishes at k = {k} with alpha = beta")));
    }
    let c = BoundConstants { gamma, q_l, q_a, q_e, k, alpha, beta };
    c.validate()?;
    Ok(c)
}

/// Kerr cavity constants.
pub fn kerr_constants(k: usize, alpha: C64, beta: C64, lambda: f64) -> Result<BoundConstants> {
    check_lambda(lambda)?;
    let kf = k as f64;
    let gamma = 0.5 * (lambda * kf + (alpha - beta).norm_sqr());
    let q_l = (lambda * (kf + 1.0)).sqrt() * beta.norm();
    let q_a = beta.norm() * (lambda * kf).sqrt();
    let q_e = alpha.norm() * (lambda * (kf + 1.0)).sqrt() + beta.norm() * (lambda * (kf + 2.0)).sqrt();
    finish(gamma, q_l, q_a, q_e, k, alpha, beta)
}

/// Atom-cavity constants; `γ` as for the Kerr cavity.
pub fn atom_cavity_constants(k: usize, alpha: C64, beta: C64, lambda: f64, chi: f64) -> Result<BoundConstants> {
    check_lambda(lambda)?;
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::InvalidParameter(format!("chi must be nonnegative, got {chi}")));
    }
    let kf = k as f64;
    let sl = lambda.sqrt();
    let gamma = 0.5 * (lambda * kf + (alpha - beta).norm_sqr());
    let q_l = (kf + 1.0).sqrt() * (beta.norm() * sl + chi);
    let q_a = kf.sqrt() * (chi + beta.norm() * sl);
    let q_e = (kf + 1.0).sqrt() * (chi + alpha.norm() * sl) + (kf + 2.0).sqrt() * (chi + beta.norm() * sl);
    finish(gamma, q_l, q_a, q_e, k, alpha, beta)
}

/// `Σ_i z(c_i, r, s, t_{i+1} − t_i)`.
pub fn interval_sum(constants: &[BoundConstants], partition: &[f64], r: usize, s: usize) -> Result<f64> {
    if partition.len() != constants.len() + 1 {
        return Err(Error::Partition(format!(
            "{} intervals but {} constant sets",
            partition.len().saturating_sub(1),
            constants.len()
        )));
    }
    constants
        .iter()
        .zip(partition.windows(2))
        .map(|(c, w)| z_bound(c, r, s, w[1] - w[0]))
        .sum()
}

/// `‖|f⟩ − |f′⟩‖` between normalized coherent states.
pub fn coherent_mismatch(f: &SimpleFunction, f_prime: &SimpleFunction) -> Result<f64> {
    let inner = f.inner(f_prime)?;
    let overlap = (inner - 0.5 * (f.norm_sq() + f_prime.norm_sq())).exp();
    Ok((2.0 - 2.0 * overlap.re).max(0.0).sqrt())
}

/// Where the residual term of a certificate comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResidualSource {
    /// Evaluate `‖U^(k)*ψ − ψ′‖` with the computable propagator.
    Computed,
    /// Caller-supplied residual (for example a bound against the untruncated cocycle).
    Supplied(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub k: Option<f64>,
    pub r: Option<usize>,
    pub s: Option<usize>,
    pub t: f64,
    pub partition: Vec<f64>,
    /// Interval rates per approximant term: `z` values, or `2M₁ + Δt M₂` for elimination.
    pub interval_terms: Vec<Vec<f64>>,
    pub term_norms: Vec<f64>,
    /// `Σ_j Σ_i interval_terms[j][i] · term_norms[j]`.
    pub z_sum: f64,
    /// Multiplier in front of `z_sum` in the squared bound.
    pub rate_factor: f64,
    pub residual: f64,
    pub residual_supplied: bool,
    pub mismatch: f64,
    pub bound: f64,
    pub description: String,
}

impl CertificateReport {
    pub fn bound_sq(&self) -> f64 {
        4.0 * (self.mismatch + self.residual) + self.rate_factor * self.z_sum
    }

    /// Weighted rate sum rebuilt from the per-interval parts.
    pub fn recompute_z_sum(&self) -> f64 {
        self.interval_terms
            .iter()
            .zip(&self.term_norms)
            .map(|(zs, n)| zs.iter().sum::<f64>() * n)
            .sum()
    }

    pub fn is_consistent(&self, tol: f64) -> bool {
        let z = self.recompute_z_sum();
        (z - self.z_sum).abs() <= tol * z.abs().max(1.0)
            && (self.bound_sq().max(0.0).sqrt() - self.bound).abs() <= tol * self.bound.max(1.0)
    }

    /// `rate_factor · z_sum`, the part that vanishes as the approximation is refined.
    pub fn rate_term(&self) -> f64 {
        self.rate_factor * self.z_sum
    }

    pub fn csv_fields(&self) -> [String; 8] {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.k.map(format_k).unwrap_or_default(),
            opt(self.r),
            opt(self.s),
            format!("{}", self.t),
            format!("{:.10e}", self.z_sum),
            format!("{:.10e}", self.residual),
            format!("{:.10e}", self.mismatch),
            format!("{:.10e}", self.bound),
        ]
    }
}

pub const CSV_HEADER: [&str; 8] = ["k", "r", "s", "t", "z_sum", "residual", "mismatch", "bound"];

fn format_k(k: f64) -> String {
    if k.fract() == 0.0 && k.abs() < 1e15 {
        format!("{}", k as i64)
    } else {
        format!("{k}")
    }
}

/// Source of constants for interval `interval` of the common partition, where the amplitudes are `(α, β)`.
pub trait ConstantsSource {
    fn constants(&self, interval: usize, alpha: &[C64], beta: &[C64]) -> Result<BoundConstants>;
}

/// Constants of a built-in family at a fixed level.
pub struct FamilyConstants<'a> {
    pub family: &'a ModelFamily,
    pub k: usize,
}

impl ConstantsSource for FamilyConstants<'_> {
    fn constants(&self, _interval: usize, alpha: &[C64], beta: &[C64]) -> Result<BoundConstants> {
        self.family.constants(self.k, alpha, beta)
    }
}

/// One caller-supplied constant set per interval.
pub struct IntervalConstants<'a>(pub &'a [BoundConstants]);

impl ConstantsSource for IntervalConstants<'_> {
    fn constants(&self, interval: usize, _alpha: &[C64], _beta: &[C64]) -> Result<BoundConstants> {
        self.0.get(interval).cloned().ok_or_else(|| {
            Error::Partition(format!("no constants for interval {interval} ({} supplied)", self.0.len()))
        })
    }
}

pub(crate) fn check_unit(u: &StateVector) -> Result<()> {
    let n = u.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::Normalization(format!("initial system state has norm {n}")));
    }
    Ok(())
}

pub struct TheoremInput<'a> {
    pub model: &'a SlhModel,
    pub u: &'a StateVector,
    pub f: &'a SimpleFunction,
    pub approx: &'a ApproxState,
    pub f_prime: &'a SimpleFunction,
    pub r: usize,
    pub s: usize,
    pub residual: ResidualSource,
}

/// Truncation certificate: `bound² = 4(mismatch + residual) + 2 Σ_j Σ_i z_ij ‖ψ′_j‖`, all intervals included.
pub fn theorem_bound(input: &TheoremInput<'_>, constants: &dyn ConstantsSource) -> Result<CertificateReport> {
    check_unit(input.u)?;
    let approx = input.approx;
    if approx.terms().is_empty() {
        return Err(Error::InvalidApproximant("approximant has no terms".into()));
    }
    let mismatch = coherent_mismatch(input.f, input.f_prime)?;
    let (residual, supplied) = match input.residual {
        ResidualSource::Computed => (residual_norm(input.model, input.u, input.f_prime, approx)?, false),
        ResidualSource::Supplied(v) => (v, true),
    };
    let mut fs: Vec<&SimpleFunction> = vec![input.f_prime];
    fs.extend(approx.terms().iter().map(|t| &t.g));
    let partition = common_partition(&fs)?;
    let fp = input.f_prime.refine(&partition)?;
    let mut interval_terms = Vec::with_capacity(approx.terms().len());
    for term in approx.terms() {
        let g = term.g.refine(&partition)?;
        let zs = (0..fp.intervals())
            .map(|i| {
                let c = constants.constants(i, fp.value(i), g.value(i))?;
                z_bound(&c, input.r, input.s, fp.duration(i))
            })
            .collect::<Result<Vec<_>>>()?;
        interval_terms.push(zs);
    }
    let term_norms: Vec<f64> = approx.terms().iter().map(|t| t.norm()).collect();
    let mut report = CertificateReport {
        k: input.model.level().map(|k| k as f64),
        r: Some(input.r),
        s: Some(input.s),
        t: fp.final_time(),
        partition,
        interval_terms,
        term_norms,
        z_sum: 0.0,
        rate_factor: 2.0,
        residual,
        residual_supplied: supplied,
        mismatch,
        bound: 0.0,
        description: format!("{} terms on {} intervals, model {}", approx.terms().len(), fp.intervals(), input.model.label()),
    };
    report.z_sum = report.recompute_z_sum();
    report.bound = report.bound_sq().max(0.0).sqrt();
    Ok(report)
}
