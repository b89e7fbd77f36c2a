//! Maxwell-Stefan friction matrix, its inverse on the hyperplane
//! `E = {v : sum v_k = 0}` and the flux matrix `A0(y) = -A(y) P(y) M^{-1}`.

use nalgebra::{Complex, DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::linalg;

/// Lower bound below which a component is treated as vanishing.
pub const INTERIOR_EPS: f64 = 1e-12;
/// How far below zero a component may dip and still be admissible.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Tolerance on `(y|e) = 1`.
pub const SUM_TOL: f64 = 1e-12;
/// Tolerance on `(h|e) = 0` for inputs of the inverse.
pub const E_TOL: f64 = 1e-10;

/// Constant mixture data: molar masses, symmetric friction coefficients and
/// the total mass density.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    molar_masses: DVector<f64>,
    frictions: DMatrix<f64>,
    rho: f64,
}

impl MixtureSpec {
    pub fn new(molar_masses: Vec<f64>, frictions: DMatrix<f64>, rho: f64) -> Result<Self> {
        let n = molar_masses.len();
        if n < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 species, got {n}")));
        }
        if frictions.nrows() != n || frictions.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: frictions.nrows() });
        }
        if let Some((k, m)) = molar_masses.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidSpec(format!("molar mass M_{} = {m} must be positive", k + 1)));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidSpec(format!("density rho = {rho} must be positive")));
        }
        for i in 0..n {
            if frictions[(i, i)] != 0.0 {
                return Err(Error::InvalidSpec(format!("friction f_{0}{0} must be zero", i + 1)));
            }
            for j in (i + 1)..n {
                let f = frictions[(i, j)];
                if f != frictions[(j, i)] {
                    return Err(Error::InvalidSpec(format!("friction matrix not symmetric at ({}, {})", i + 1, j + 1)));
                }
                if !(f > 0.0 && f.is_finite()) {
                    return Err(Error::InvalidSpec(format!("friction f_{}{} = {f} must be positive", i + 1, j + 1)));
                }
            }
        }
        Ok(Self { molar_masses: DVector::from_vec(molar_masses), frictions, rho })
    }

    /// Builds the friction matrix from its strict upper triangle given row
    /// by row: `f_12, f_13, ..., f_1N, f_23, ...`.
    pub fn from_upper_triangle(molar_masses: Vec<f64>, upper: &[f64], rho: f64) -> Result<Self> {
        let n = molar_masses.len();
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: upper.len() });
        }
        let mut f = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = *it.next().expect("length checked");
                f[(i, j)] = v;
                f[(j, i)] = v;
            }
        }
        Self::new(molar_masses, f, rho)
    }

    pub fn n_species(&self) -> usize {
        self.molar_masses.len()
    }

    pub fn molar_masses(&self) -> &DVector<f64> {
        &self.molar_masses
    }

    pub fn frictions(&self) -> &DMatrix<f64> {
        &self.frictions
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Concentrations `c = rho M^{-1} y`.
    pub fn concentrations(&self, y: &DVector<f64>) -> DVector<f64> {
        y.zip_map(&self.molar_masses, |yk, mk| self.rho * yk / mk)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n_species() {
            return Err(Error::DimensionMismatch { expected: self.n_species(), found: len });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositionClass {
    Interior,
    Boundary,
}

/// Mass fractions with `(y|e) = 1` and no component below `-BOUNDARY_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition(DVector<f64>);

impl Composition {
    pub fn new(y: DVector<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::OutOfDomain(format!("need at least 2 components, got {}", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain("non-finite component".into()));
        }
        let sum = y.sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::OutOfDomain(format!("(y|e) = {sum:.17} differs from 1")));
        }
        if let Some((k, v)) = y.iter().enumerate().find(|(_, v)| **v < -BOUNDARY_TOL) {
            return Err(Error::OutOfDomain(format!("y[{k}] = {v:e} below -{BOUNDARY_TOL:e}")));
        }
        Ok(Self(y))
    }

    pub fn from_slice(y: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(y))
    }

    /// Rescales a nonnegative vector onto `(y|e) = 1`.
    pub fn normalized(v: DVector<f64>) -> Result<Self> {
        let s = v.sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::OutOfDomain(format!("cannot normalize vector with sum {s}")));
        }
        Self::new(v / s)
    }

    /// Uniform mass fractions `e / N`.
    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    /// Skips validation; the caller guarantees admissibility.
    pub(crate) fn new_unchecked(y: DVector<f64>) -> Self {
        Self(y)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn class(&self) -> CompositionClass {
        if self.0.iter().all(|&v| v >= INTERIOR_EPS) {
            CompositionClass::Interior
        } else {
            CompositionClass::Boundary
        }
    }

    pub fn is_interior(&self) -> bool {
        self.class() == CompositionClass::Interior
    }

    fn require_positive(&self) -> Result<()> {
        match self.0.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            Some((index, &value)) => Err(Error::NonInteriorComposition { index, value }),
            None => Ok(()),
        }
    }
}

impl std::ops::Index<usize> for Composition {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Orthonormal basis of `E` as the columns of an `N x (N-1)` matrix: the
/// last `N-1` columns of the Householder reflector sending `e/sqrt(N)` to
/// the first coordinate axis.
pub fn e_basis(n: usize) -> DMatrix<f64> {
    let mut w = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    w[0] -= 1.0;
    let wn2 = w.norm_squared();
    let h = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / wn2);
    h.columns(1, n - 1).into_owned()
}

/// A linear map of `E` into itself, stored both as an `N x N` matrix acting
/// on `R^N` and as its `(N-1) x (N-1)` representation in [`e_basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct EMatrix {
    full: DMatrix<f64>,
    basis_rep: DMatrix<f64>,
}

impl EMatrix {
    /// `full` must map `E` into `E`.
    pub fn from_full(full: DMatrix<f64>) -> Self {
        let q = e_basis(full.nrows());
        let basis_rep = q.transpose() * &full * &q;
        Self { full, basis_rep }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_full(DMatrix::identity(n, n))
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn basis_rep(&self) -> &DMatrix<f64> {
        &self.basis_rep
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    /// Largest `|(full v | e)|` over the basis of `E`, relative to `||full||`.
    pub fn e_leakage(&self) -> f64 {
        let q = e_basis(self.dim());
        let img = &self.full * q;
        let leak = img.row_sum().amax();
        let scale = self.full.norm().max(f64::MIN_POSITIVE);
        leak / scale
    }
}

/// Eigenvalues of the map on `E`, ascending by real part; length `N-1`.
pub fn spectrum_on_e(m: &EMatrix) -> Result<Vec<Complex<f64>>> {
    linalg::eigenvalues(m.basis_rep())
}

/// Friction matrix: `b_ij = f_ij y_i` (i != j), `b_ii = -sum_l f_il y_l`.
pub fn assemble_b(spec: &MixtureSpec, y: &Composition) -> Result<DMatrix<f64>> {
    spec.check_dim(y.len())?;
    Ok(assemble_b_raw(spec, y.as_vector()))
}

fn assemble_b_raw(spec: &MixtureSpec, y: &DVector<f64>) -> DMatrix<f64> {
    let n = spec.n_species();
    let f = spec.frictions();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -(0..n).map(|l| f[(i, l)] * y[l]).sum::<f64>()
        } else {
            f[(i, j)] * y[i]
        }
    })
}

/// `P(y) v = v - (v|e) y`.
pub fn project_p(y: &Composition, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: v.len() });
    }
    Ok(v - y.as_vector() * v.sum())
}

/// `B_S(y) = Y^{-1/2} B(y) Y^{1/2}`, assembled entrywise as a symmetric matrix.
pub fn symmetrize_b(spec: &MixtureSpec, y: &Composition) -> Result<DMatrix<f64>> {
    spec.check_dim(y.len())?;
    y.require_positive()?;
    let n = spec.n_species();
    let f = spec.frictions();
    let yv = y.as_vector();
    let sqrt_y = yv.map(f64::sqrt);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -(0..n).map(|k| f[(i, k)] * yv[k]).sum::<f64>()
        } else {
            f[(i, j)] * sqrt_y[i] * sqrt_y[j]
        }
    }))
}

/// LU factorization of the bordered matrix `D(y) = [[B(y), y], [e^T, 0]]`,
/// which applies `(B(y)|_E)^{-1}` to any number of right-hand sides in `E`.
pub struct InverseOnE {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl InverseOnE {
    pub fn new(spec: &MixtureSpec, y: &Composition) -> Result<Self> {
        spec.check_dim(y.len())?;
        let n = spec.n_species();
        let b = assemble_b_raw(spec, y.as_vector());
        let mut d = DMatrix::zeros(n + 1, n + 1);
        d.view_mut((0, 0), (n, n)).copy_from(&b);
        for i in 0..n {
            d[(i, n)] = y[i];
            d[(n, i)] = 1.0;
        }
        let scale = d.amax();
        let lu = d.lu();
        let u = lu.u();
        let pivot_min = u.diagonal().amin();
        if !(pivot_min > 1e-14 * scale) {
            return Err(Error::SingularSystem);
        }
        Ok(Self { lu, n })
    }

    /// `x = (B(y)|_E)^{-1} h` for `h` in `E`.
    pub fn apply(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        if h.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: h.len() });
        }
        let residual = h.sum();
        if residual.abs() > E_TOL * h.amax().max(1.0) {
            return Err(Error::NotInE { residual });
        }
        let mut rhs = DVector::zeros(self.n + 1);
        rhs.rows_mut(0, self.n).copy_from(h);
        let sol = self.lu.solve(&rhs).ok_or(Error::SingularSystem)?;
        let x = sol.rows(0, self.n).into_owned();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(x)
    }

    /// Applies the inverse to every column of `h`.
    pub fn apply_columns(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, h.ncols());
        for j in 0..h.ncols() {
            let x = self.apply(&h.column(j).clone_owned())?;
            out.set_column(j, &x);
        }
        Ok(out)
    }
}

/// Solves `B(y) x = h` for `x` in `E` via the bordered system.
pub fn apply_inverse_on_e(spec: &MixtureSpec, y: &Composition, h: &DVector<f64>) -> Result<DVector<f64>> {
    InverseOnE::new(spec, y)?.apply(h)
}

/// The negative flux matrix `A0(y) = -A(y) P(y) M^{-1}` as a map on `E`.
pub fn flux_matrix_a0(spec: &MixtureSpec, y: &Composition) -> Result<EMatrix> {
    let inv = InverseOnE::new(spec, y)?;
    let n = spec.n_species();
    let m = spec.molar_masses();
    let yv = y.as_vector();
    // Column j of P(y) M^{-1} is (e_j - y) / M_j.
    let pm = DMatrix::from_fn(n, n, |i, j| ((i == j) as u8 as f64 - yv[i]) / m[j]);
    let x = inv.apply_columns(&pm)?;
    Ok(EMatrix::from_full(-x))
}

/// `-A(y) P(y) Y`, symmetric positive semidefinite on the interior.
pub fn mobility_matrix(spec: &MixtureSpec, y: &Composition) -> Result<DMatrix<f64>> {
    let inv = InverseOnE::new(spec, y)?;
    let n = spec.n_species();
    let yv = y.as_vector();
    let py = DMatrix::from_fn(n, n, |i, j| ((i == j) as u8 as f64 - yv[i]) * yv[j]);
    Ok(-inv.apply_columns(&py)?)
}

/// Largest eigenvalue modulus of `A0(y)` on `E`.
pub fn a0_spectral_radius(spec: &MixtureSpec, y: &Composition) -> Result<f64> {
    let a0 = flux_matrix_a0(spec, y)?;
    Ok(spectrum_on_e(&a0)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_species(f12: f64) -> MixtureSpec {
        MixtureSpec::from_upper_triangle(vec![1.0, 1.0], &[f12], 1.0).unwrap()
    }

    fn three_species() -> MixtureSpec {
        MixtureSpec::from_upper_triangle(vec![1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1.0).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn spec_rejects_bad_input() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(MixtureSpec::new(vec![1.0, 1.0], f, 1.0), Err(Error::InvalidSpec(_))));
        assert!(MixtureSpec::from_upper_triangle(vec![1.0, -1.0], &[1.0], 1.0).is_err());
        assert!(MixtureSpec::from_upper_triangle(vec![1.0, 1.0], &[0.0], 1.0).is_err());
        assert!(MixtureSpec::from_upper_triangle(vec![1.0, 1.0], &[1.0], 0.0).is_err());
        assert!(MixtureSpec::from_upper_triangle(vec![1.0], &[], 1.0).is_err());
        assert!(matches!(
            MixtureSpec::from_upper_triangle(vec![1.0, 1.0, 1.0], &[1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn composition_classification() {
        assert_eq!(Composition::from_slice(&[0.5, 0.5]).unwrap().class(), CompositionClass::Interior);
        assert_eq!(Composition::from_slice(&[0.0, 1.0]).unwrap().class(), CompositionClass::Boundary);
        assert_eq!(Composition::from_slice(&[-1e-9, 1.0 + 1e-9]).unwrap().class(), CompositionClass::Boundary);
        assert!(Composition::from_slice(&[-1e-7, 1.0 + 1e-7]).is_err());
        assert!(Composition::from_slice(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn b_for_two_uniform_species() {
        let b = assemble_b(&two_species(1.0), &Composition::from_slice(&[0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]));
    }

    #[test]
    fn b_at_vertex() {
        let f12 = 2.5;
        let b = assemble_b(&two_species(f12), &Composition::from_slice(&[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.0, f12, 0.0, -f12]));
    }

    #[test]
    fn b_three_species_matches_elementwise_oracle() {
        let spec = three_species();
        let y = Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap();
        let b = assemble_b(&spec, &y).unwrap();
        // f12=1, f13=2, f23=3 evaluated by hand.
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                -(1.0 * 0.3 + 2.0 * 0.5), 1.0 * 0.2, 2.0 * 0.2,
                1.0 * 0.3, -(1.0 * 0.2 + 3.0 * 0.5), 3.0 * 0.3,
                2.0 * 0.5, 3.0 * 0.5, -(2.0 * 0.2 + 3.0 * 0.3),
            ],
        );
        assert_abs_diff_eq!((&b - expected).amax(), 0.0, epsilon = 1e-15);
        assert!((&b * y.as_vector()).amax() <= 1e-14);
        assert!(b.row_sum().amax() <= 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let y = Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(assemble_b(&two_species(1.0), &y), Err(Error::DimensionMismatch { .. })));
        assert!(project_p(&y, &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn projection_examples() {
        let y = Composition::from_slice(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let h = v(&[0.3, -0.3]);
        assert_eq!(project_p(&y, &h).unwrap(), h);
        assert!(project_p(&y, y.as_vector()).unwrap().amax() < 1e-16);
        let p = project_p(&y, &v(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], -2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetrized_b_examples() {
        let bs = symmetrize_b(&two_species(1.0), &Composition::from_slice(&[0.5, 0.5]).unwrap()).unwrap();
        assert_abs_diff_eq!((bs - DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5])).amax(), 0.0, epsilon = 1e-15);

        let spec = three_species();
        let y = Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap();
        let bs = symmetrize_b(&spec, &y).unwrap();
        assert!((&bs - bs.transpose()).amax() <= 1e-14);
        let ev = bs.clone().symmetric_eigenvalues();
        assert!(ev.max() <= 1e-12);
        assert!((&bs * y.as_vector().map(f64::sqrt)).amax() <= 1e-14);

        let boundary = Composition::from_slice(&[0.0, 0.4, 0.6]).unwrap();
        assert!(matches!(symmetrize_b(&spec, &boundary), Err(Error::NonInteriorComposition { index: 0, .. })));
    }

    #[test]
    fn inverse_two_species_hand_computation() {
        let x = apply_inverse_on_e(&two_species(1.0), &Composition::from_slice(&[0.5, 0.5]).unwrap(), &v(&[1.0, -1.0]))
            .unwrap();
        assert_abs_diff_eq!(x[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        let x = apply_inverse_on_e(&three_species(), &Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap(), &v(&[0.0; 3]))
            .unwrap();
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn inverse_rejects_vectors_outside_e() {
        let r = apply_inverse_on_e(&three_species(), &Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap(), &v(&[1.0, 0.0, 0.0]));
        assert!(matches!(r, Err(Error::NotInE { .. })));
    }

    #[test]
    fn inverse_row_structure_at_vanishing_component() {
        let spec = three_species();
        let y = Composition::from_slice(&[0.0, 0.4, 0.6]).unwrap();
        let h = v(&[0.7, -0.2, -0.5]);
        let x = apply_inverse_on_e(&spec, &y, &h).unwrap();
        let a10 = 1.0 / (1.0 * 0.4 + 2.0 * 0.6);
        assert!(a10 > 0.0);
        assert_abs_diff_eq!(x[0], -a10 * h[0], epsilon = 1e-14);
        let b = assemble_b(&spec, &y).unwrap();
        assert!((&b * &x - &h).amax() <= 1e-14);
        assert!(x.sum().abs() <= 1e-14);
    }

    #[test]
    fn a0_two_species_eigenvalue_is_inverse_friction() {
        let a0 = flux_matrix_a0(&two_species(1.0), &Composition::from_slice(&[0.5, 0.5]).unwrap()).unwrap();
        let img = a0.full() * v(&[1.0, -1.0]);
        assert_abs_diff_eq!(img[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(img[1], -1.0, epsilon = 1e-14);
        let sp = spectrum_on_e(&a0).unwrap();
        assert_eq!(sp.len(), 1);
        assert_abs_diff_eq!(sp[0].re, 1.0, epsilon = 1e-14);

        for y1 in [0.05, 0.3, 0.71, 0.99] {
            let a0 = flux_matrix_a0(&two_species(4.0), &Composition::from_slice(&[y1, 1.0 - y1]).unwrap()).unwrap();
            assert_abs_diff_eq!(spectrum_on_e(&a0).unwrap()[0].re, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn spectrum_examples() {
        let id = spectrum_on_e(&EMatrix::identity(4)).unwrap();
        assert_eq!(id.len(), 3);
        for z in id {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
        let b = assemble_b(&two_species(1.0), &Composition::from_slice(&[0.5, 0.5]).unwrap()).unwrap();
        let sp = spectrum_on_e(&EMatrix::from_full(b)).unwrap();
        assert_abs_diff_eq!(sp[0].re, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn e_basis_is_orthonormal_and_orthogonal_to_e() {
        for n in 2..10 {
            let q = e_basis(n);
            assert!((q.transpose() * &q - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
            assert!(q.row_sum().amax() < 1e-14);
        }
    }

    #[test]
    fn emat_full_and_basis_rep_agree_on_e() {
        let spec = three_species();
        let a0 = flux_matrix_a0(&spec, &Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap()).unwrap();
        assert!(a0.e_leakage() <= 1e-12);
        let q = e_basis(3);
        let lifted = &q * a0.basis_rep() * q.transpose();
        assert!((lifted * &q - a0.full() * &q).amax() <= 1e-12);
    }

    #[test]
    fn mobility_matrix_is_symmetric_with_e_in_kernel() {
        let spec = three_species();
        let y = Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap();
        let g = mobility_matrix(&spec, &y).unwrap();
        assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        assert!((&g * DVector::from_element(3, 1.0)).amax() <= 1e-12 * g.amax());
        assert!(g.symmetric_eigenvalues().min() >= -1e-12);
    }
}
