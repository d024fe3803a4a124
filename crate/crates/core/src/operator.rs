//! Dense complex operators and state vectors on truncated Hilbert spaces.
//!
//! Tensor products flatten `(i_left, i_right)` to `i_left * dim_right + i_right`,
//! so the left factor is the slow one (atom) and the right factor is the oscillator.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: CMatrix,
    factor_dims: Vec<usize>,
}

impl Operator {
    pub fn new(mat: CMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "operator must be square and nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let prod: usize = factor_dims.iter().product();
        if factor_dims.is_empty() || prod != mat.nrows() {
            return Err(Error::InvalidDimension(format!(
                "factor dims {:?} do not multiply to {}",
                factor_dims,
                mat.nrows()
            )));
        }
        Ok(Self { mat, factor_dims })
    }

    /// Single-factor operator.
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        let n = mat.nrows();
        Self::new(mat, vec![n])
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut mat = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidDimension("ragged rows".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                mat[(i, j)] = c(v, 0.0);
            }
        }
        Self::from_matrix(mat)
    }

    pub fn identity(factor_dims: &[usize]) -> Self {
        let n = factor_dims.iter().product();
        Self { mat: CMatrix::identity(n, n), factor_dims: factor_dims.to_vec() }
    }

    pub fn zeros(factor_dims: &[usize]) -> Self {
        let n = factor_dims.iter().product();
        Self { mat: CMatrix::zeros(n, n), factor_dims: factor_dims.to_vec() }
    }

    pub fn diagonal(entries: &[C64]) -> Result<Self> {
        Self::from_matrix(CMatrix::from_diagonal(&CVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint(), factor_dims: self.factor_dims.clone() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { mat: &self.mat * s, factor_dims: self.factor_dims.clone() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }

    /// Same matrix, different tensor labelling.
    pub fn with_factor_dims(self, factor_dims: Vec<usize>) -> Result<Self> {
        Self::new(self.mat, factor_dims)
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        assert_eq!(self.dim(), v.dim(), "operator/state dimension mismatch");
        StateVector { vec: &self.mat * &v.vec, factor_dims: self.factor_dims.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.mat, &self.mat.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn merged_dims(a: &Operator, b: &Operator) -> Vec<usize> {
    assert_eq!(a.dim(), b.dim(), "operator dimension mismatch");
    if a.factor_dims == b.factor_dims {
        a.factor_dims.clone()
    } else {
        vec![a.dim()]
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { factor_dims: merged_dims(self, rhs), mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { factor_dims: merged_dims(self, rhs), mat: &self.mat - &rhs.mat }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { factor_dims: merged_dims(self, rhs), mat: &self.mat * &rhs.mat }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { factor_dims: self.factor_dims.clone(), mat: -&self.mat }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    vec: CVector,
    factor_dims: Vec<usize>,
}

impl StateVector {
    pub fn new(vec: CVector, factor_dims: Vec<usize>) -> Result<Self> {
        let prod: usize = factor_dims.iter().product();
        if vec.is_empty() || factor_dims.is_empty() || prod != vec.len() {
            return Err(Error::InvalidDimension(format!(
                "factor dims {:?} do not multiply to {}",
                factor_dims,
                vec.len()
            )));
        }
        Ok(Self { vec, factor_dims })
    }

    pub fn from_slice(entries: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(entries), vec![entries.len()])
    }

    pub fn zeros(factor_dims: &[usize]) -> Self {
        let n = factor_dims.iter().product();
        Self { vec: CVector::zeros(n), factor_dims: factor_dims.to_vec() }
    }

    /// Basis vector `|index⟩` in the flattened ordering.
    pub fn basis(factor_dims: &[usize], index: usize) -> Result<Self> {
        let mut v = Self::zeros(factor_dims);
        if index >= v.dim() {
            return Err(Error::InvalidIndex { index, dim: v.dim() });
        }
        v.vec[index] = ONE;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn vector(&self) -> &CVector {
        &self.vec
    }

    pub fn into_vector(self) -> CVector {
        self.vec
    }

    pub fn entries(&self) -> &[C64] {
        self.vec.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.vec.dotc(&other.vec)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { vec: &self.vec * s, factor_dims: self.factor_dims.clone() }
    }

    pub fn add(&self, other: &StateVector) -> Self {
        Self { vec: &self.vec + &other.vec, factor_dims: self.factor_dims.clone() }
    }

    pub fn sub(&self, other: &StateVector) -> Self {
        Self { vec: &self.vec - &other.vec, factor_dims: self.factor_dims.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.vec.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim == 0 {
        return Err(Error::InvalidDimension("ladder dimension must be at least 1".into()));
    }
    let mut mat = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        mat[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(mat)
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.adjoint())
}

/// `a* a` built from the truncated ladder operators.
pub fn number(dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    Ok(&a.adjoint() * &a)
}

pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let mut factor_dims = a.factor_dims.clone();
    factor_dims.extend_from_slice(&b.factor_dims);
    Operator { mat: a.mat.kronecker(&b.mat), factor_dims }
}

pub fn tensor_state(a: &StateVector, b: &StateVector) -> StateVector {
    let mut factor_dims = a.factor_dims.clone();
    factor_dims.extend_from_slice(&b.factor_dims);
    StateVector { vec: a.vec.kronecker(&b.vec), factor_dims }
}

pub fn projector(dim: usize, indices: &[usize]) -> Result<Operator> {
    if dim == 0 {
        return Err(Error::InvalidDimension("projector dimension must be at least 1".into()));
    }
    let mut mat = CMatrix::zeros(dim, dim);
    for &i in indices {
        if i >= dim {
            return Err(Error::InvalidIndex { index: i, dim });
        }
        mat[(i, i)] = ONE;
    }
    Operator::from_matrix(mat)
}

/// `|row⟩⟨col|` on a `dim`-dimensional space.
pub fn outer_basis(dim: usize, row: usize, col: usize) -> Result<Operator> {
    if row >= dim || col >= dim {
        return Err(Error::InvalidIndex { index: row.max(col), dim });
    }
    let mut mat = CMatrix::zeros(dim, dim);
    mat[(row, col)] = ONE;
    Operator::from_matrix(mat)
}

/// Largest singular value.
pub fn opnorm(a: &Operator) -> f64 {
    spectral_norm(&a.mat)
}

/// Largest singular value of a possibly rectangular matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Largest eigenvalue of the Hermitian part `(G + G*)/2`.
pub fn numerical_abscissa(g: &Operator) -> f64 {
    let h = (&g.mat + g.mat.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter().map(|col| col.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// `e^{tG}` by scaling and squaring with the [13/13] Padé approximant.
pub fn matexp(g: &Operator, t: f64) -> Result<Operator> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("propagation time {t} must be finite and nonnegative")));
    }
    if !g.is_finite() {
        return Err(Error::Numeric("generator has non-finite entries".into()));
    }
    let mat = expm(&(&g.mat * c(t, 0.0)))?;
    Operator::new(mat, g.factor_dims.clone())
}

/// `e^A = e^μ (cosh q I + sinh q / q (A − μI))` with `μ = tr A / 2`, `q² = −det(A − μI)`.
fn expm2(a: &CMatrix) -> CMatrix {
    let mu = (a[(0, 0)] + a[(1, 1)]) * 0.5;
    let b00 = a[(0, 0)] - mu;
    let q2 = b00 * b00 + a[(0, 1)] * a[(1, 0)];
    let q = q2.sqrt();
    let (ch, sh) = if q.norm() < 1e-3 {
        (ONE + q2 * (0.5 + q2 / 24.0 * (1.0 + q2 / 30.0)), ONE + q2 / 6.0 * (1.0 + q2 / 20.0 * (1.0 + q2 / 42.0)))
    } else {
        (q.cosh(), q.sinh() / q)
    };
    let e = mu.exp();
    CMatrix::from_row_slice(2, 2, &[e * (ch + sh * b00), e * sh * a[(0, 1)], e * sh * a[(1, 0)], e * (ch - sh * b00)])
}

/// Matrix exponential of a square complex matrix.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Numeric("matrix exponential of non-finite matrix".into()));
    }
    if n == 2 && norm <= 1.0 {
        return Ok(expm2(a));
    }
    if norm == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * c(0.5f64.powi(squarings), 0.0);
    let b = |i: usize| c(PADE13[i], 0.0);
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numeric("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn annihilation_lowers() {
        let a = annihilation(2).unwrap();
        let out = a.apply(&StateVector::basis(&[2], 1).unwrap());
        assert_eq!(out, StateVector::basis(&[2], 0).unwrap());

        let a3 = annihilation(3).unwrap();
        let out = a3.apply(&StateVector::basis(&[3], 0).unwrap());
        assert!(out.entries().iter().all(|z| *z == ZERO));

        let a4 = annihilation(4).unwrap();
        let out = a4.apply(&StateVector::basis(&[4], 3).unwrap());
        assert!(close(out.entries()[2], c(1.7320508075688772, 0.0), 1e-15));
        assert!(annihilation(0).is_err());
    }

    #[test]
    fn creation_and_number() {
        let out = creation(3).unwrap().apply(&StateVector::basis(&[3], 2).unwrap());
        assert!(out.norm() == 0.0);
        let out = number(5).unwrap().apply(&StateVector::basis(&[5], 4).unwrap());
        assert_eq!(out, StateVector::basis(&[5], 4).unwrap().scale(c(4.0, 0.0)));
        let out = creation(2).unwrap().apply(&StateVector::basis(&[2], 0).unwrap());
        assert_eq!(out, StateVector::basis(&[2], 1).unwrap());
    }

    #[test]
    fn kronecker_convention() {
        let id6 = tensor(&Operator::identity(&[2]), &Operator::identity(&[3]));
        assert_eq!(id6.matrix(), &CMatrix::identity(6, 6));
        assert_eq!(id6.factor_dims(), &[2, 3]);

        let d = Operator::diagonal(&[c(1.0, 0.0), c(2.0, 0.0)]).unwrap();
        let t = tensor(&d, &Operator::identity(&[2]));
        let want = Operator::diagonal(&[ONE, ONE, c(2.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(t.matrix(), want.matrix());

        // atom basis (e, +, -); sigma_plus = |e><+|
        let sp = outer_basis(3, 0, 1).unwrap();
        let op = tensor(&sp, &annihilation(2).unwrap());
        let plus_one = StateVector::basis(&[3, 2], 2 + 1).unwrap();
        let out = op.apply(&plus_one);
        assert_eq!(out.entries(), StateVector::basis(&[3, 2], 0).unwrap().entries());
    }

    #[test]
    fn exp_examples() {
        let z = Operator::zeros(&[3]);
        assert_eq!(matexp(&z, 5.0).unwrap().matrix(), &CMatrix::identity(3, 3));
        let nil = Operator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let e = matexp(&nil, 1.0).unwrap();
        let want = Operator::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert!(e.max_abs_diff(&want) < 1e-15);
        assert!(matexp(&nil, -1.0).is_err());
        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matexp(&Operator::from_matrix(bad).unwrap(), 1.0).is_err());
    }

    #[test]
    fn exp_of_diagonal_with_large_norm() {
        let d = Operator::diagonal(&[c(-3000.0, 400.0), c(-0.5, -2.0), ZERO]).unwrap();
        let e = matexp(&d, 1.0).unwrap();
        for (i, z) in [c(-3000.0, 400.0), c(-0.5, -2.0), ZERO].iter().enumerate() {
            assert!(close(e.entry(i, i), z.exp(), 1e-12), "{} {}", e.entry(i, i), z.exp());
        }
    }

    #[test]
    fn norms() {
        assert!((opnorm(&Operator::identity(&[4])) - 1.0).abs() < 1e-14);
        let d = Operator::diagonal(&[c(3.0, 0.0), c(0.0, -4.0)]).unwrap();
        assert!((opnorm(&d) - 4.0).abs() < 1e-13);
        for k in 1..8 {
            let a = annihilation(k + 1).unwrap();
            assert!((opnorm(&a) - (k as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn projectors() {
        let p = projector(4, &[0, 1, 2]).unwrap();
        let want = Operator::diagonal(&[ONE, ONE, ONE, ZERO]).unwrap();
        assert_eq!(p, want);
        assert_eq!(&p * &p, p);
        assert!(matches!(projector(3, &[3]), Err(Error::InvalidIndex { .. })));
    }

    #[test]
    fn projector_flattening_on_atom_oscillator() {
        // dims (3, 2): index i_atom * 2 + n
        let p = projector(6, &[0, 1]).unwrap();
        for i_atom in 0..3 {
            for n in 0..2 {
                let idx = i_atom * 2 + n;
                let inside = i_atom == 0;
                assert_eq!(p.entry(idx, idx) == ONE, inside);
            }
        }
    }

    #[test]
    fn adjoint_involution() {
        let m = CMatrix::from_fn(3, 3, |i, j| c(i as f64 - j as f64 * 0.3, (i * j) as f64 + 0.1));
        let op = Operator::from_matrix(m).unwrap();
        assert_eq!(op.adjoint().adjoint(), op);
    }

    #[test]
    fn abscissa_of_damping() {
        let g = Operator::diagonal(&[c(-1.0, 5.0), c(-2.0, 0.0)]).unwrap();
        assert!((numerical_abscissa(&g) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_closed_form_matches_pade() {
        let cases = [[c(0.3, -0.2), c(0.1, 0.4), c(-0.5, 0.0), c(0.0, 0.2)], [c(1e-5, 0.0), c(2e-4, 0.0), ZERO, c(-1e-5, 1e-6)]];
        for m in cases {
            let a = CMatrix::from_row_slice(2, 2, &m);
            let mut big = CMatrix::zeros(3, 3);
            big.view_mut((0, 0), (2, 2)).copy_from(&a);
            let e2 = expm(&a).unwrap();
            let e3 = expm(&big).unwrap();
            assert!(max_abs_diff(&e2, &e3.view((0, 0), (2, 2)).into_owned()) < 1e-15);
        }
    }
}
