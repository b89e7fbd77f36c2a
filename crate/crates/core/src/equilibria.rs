//! Positive chemical equilibria, the tangent space of the equilibrium
//! manifold and conserved linear functionals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::{validate_network, ReactionNetwork, RANK_TOL};
use crate::linalg;
use crate::mixture::{Composition, MixtureSpec};

pub const MAX_NEWTON_ITERS: usize = 100;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;
const ARMIJO_C: f64 = 1e-4;
/// Target accuracy of the log-linear equations.
const NEWTON_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub c_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// Max over the independent reactions of `|(nu_l | log c*) - log K_l|`.
    pub residual: f64,
    pub newton_iters: usize,
    pub manifold_dim: usize,
}

impl EquilibriumResult {
    pub fn composition(&self) -> Composition {
        Composition::new_unchecked(DVector::from_column_slice(&self.y_star))
    }
}

struct LogSystem<'a> {
    nu_hat_t: DMatrix<f64>,
    log_k_hat: DVector<f64>,
    spec: &'a MixtureSpec,
}

impl LogSystem<'_> {
    /// Residual `[nu_hat^T xi - log K_hat; (M exp xi | e)/rho - 1]`.
    fn residual(&self, xi: &DVector<f64>) -> DVector<f64> {
        let s = self.nu_hat_t.nrows();
        let mut f = DVector::zeros(s + 1);
        if s > 0 {
            f.rows_mut(0, s).copy_from(&(&self.nu_hat_t * xi - &self.log_k_hat));
        }
        f[s] = self.mass(xi) / self.spec.rho() - 1.0;
        f
    }

    fn mass(&self, xi: &DVector<f64>) -> f64 {
        xi.iter().zip(self.spec.molar_masses().iter()).map(|(x, m)| m * x.exp()).sum()
    }

    fn jacobian(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let s = self.nu_hat_t.nrows();
        let n = xi.len();
        let mut j = DMatrix::zeros(s + 1, n);
        if s > 0 {
            j.rows_mut(0, s).copy_from(&self.nu_hat_t);
        }
        for k in 0..n {
            j[(s, k)] = self.spec.molar_masses()[k] * xi[k].exp() / self.spec.rho();
        }
        j
    }

    fn linear_residual(&self, f: &DVector<f64>) -> f64 {
        let s = self.nu_hat_t.nrows();
        f.rows(0, s).amax()
    }
}

/// Damped Newton on the log-concentrations, started from `init` (default:
/// uniform mass fractions). Uses minimum-norm steps, so on a
/// positive-dimensional equilibrium manifold the result depends on `init`.
pub fn find_equilibrium(net: &ReactionNetwork, spec: &MixtureSpec, init: Option<&Composition>) -> Result<EquilibriumResult> {
    let report = validate_network(net, spec)?;
    if let Some(err) = report.first_error() {
        return Err(err);
    }
    let n = spec.n_species();
    let init = init.cloned().unwrap_or_else(|| Composition::uniform(n));
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: init.len() });
    }
    if let Some((index, &value)) = init.as_vector().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonInteriorComposition { index, value });
    }

    let s = report.rank;
    let nu_hat_t = DMatrix::from_fn(s, n, |l, j| net.nu()[(j, report.independent[l])]);
    let log_k_hat = DVector::from_iterator(s, report.independent.iter().map(|&l| net.log_k()[l]));
    let sys = LogSystem { nu_hat_t, log_k_hat, spec };

    let mut xi = spec.concentrations(init.as_vector()).map(f64::ln);
    let mut f = sys.residual(&xi);
    let mut iters = 0;
    while f.amax() > NEWTON_TOL {
        if iters == MAX_NEWTON_ITERS {
            return Err(Error::NewtonDiverged { iterations: iters, residual: f.amax() });
        }
        iters += 1;
        let svd = sys.jacobian(&xi).svd(true, true);
        let delta = -svd.solve(&f, 1e-14).expect("both factors computed");

        let phi = 0.5 * f.norm_squared();
        let mut t = 1.0;
        let (xi_new, f_new) = loop {
            let cand = &xi + &delta * t;
            let fc = sys.residual(&cand);
            let phi_c = 0.5 * fc.norm_squared();
            if phi_c.is_finite() && phi_c <= (1.0 - 2.0 * ARMIJO_C * t) * phi {
                break (cand, fc);
            }
            t *= 0.5;
            if t < MIN_STEP {
                // No further decrease is possible; accept if already within contract.
                if sys.linear_residual(&f) <= crate::kinetics::EQUILIBRIUM_TOL && f[s].abs() <= 1e-12 {
                    return Ok(finish(&sys, xi, &f, iters, n - s - 1));
                }
                return Err(Error::NewtonDiverged { iterations: iters, residual: f.amax() });
            }
        };
        xi = xi_new;
        f = f_new;
    }

    if iters == 0 {
        // Already an equilibrium: echo the initial point itself.
        let c = spec.concentrations(init.as_vector());
        return Ok(EquilibriumResult {
            c_star: c.iter().copied().collect(),
            y_star: init.as_vector().iter().copied().collect(),
            residual: sys.linear_residual(&f),
            newton_iters: 0,
            manifold_dim: n - s - 1,
        });
    }
    Ok(finish(&sys, xi, &f, iters, n - s - 1))
}

fn finish(sys: &LogSystem<'_>, xi: DVector<f64>, f: &DVector<f64>, iters: usize, dim: usize) -> EquilibriumResult {
    let c = xi.map(f64::exp);
    let y = c.component_mul(sys.spec.molar_masses()) / sys.spec.rho();
    EquilibriumResult {
        c_star: c.iter().copied().collect(),
        y_star: y.iter().copied().collect(),
        residual: sys.linear_residual(f),
        newton_iters: iters,
        manifold_dim: dim,
    }
}

/// Orthonormal basis (columns) of `N(nu^T Y*^{-1}) ∩ E`, the tangent space
/// of the equilibrium manifold at `y_star`.
pub fn tangent_space(net: &ReactionNetwork, y_star: &Composition) -> Result<DMatrix<f64>> {
    let n = net.n_species();
    if y_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y_star.len() });
    }
    if let Some((index, &value)) = y_star.as_vector().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonInteriorComposition { index, value });
    }
    let m = net.n_reactions();
    let mut stacked = DMatrix::zeros(m + 1, n);
    for l in 0..m {
        for j in 0..n {
            stacked[(l, j)] = net.nu()[(j, l)] / y_star[j];
        }
    }
    stacked.row_mut(m).fill(1.0);

    let s = linalg::independent_columns(net.nu(), RANK_TOL * net.nu().norm()).len();
    let basis = linalg::nullspace(&stacked, 1e-10);
    if basis.ncols() != n - s - 1 {
        return Err(Error::NullspaceDimension { expected: n - s - 1, found: basis.ncols() });
    }
    Ok(basis)
}

/// Orthonormal basis of `S^⊥ = N(nu^T)`; each `q` yields a conserved
/// functional `I_q = sum_cells vol (q | rho M^{-1} y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedFunctionals {
    basis: DMatrix<f64>,
}

impl ConservedFunctionals {
    /// Columns are the vectors `q`; the first is `M e / |M e|` whenever the
    /// network conserves mass.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.ncols() == 0
    }

    /// Evaluates every functional on cells given as `(volume, y)` pairs.
    pub fn evaluate<'a>(&self, spec: &MixtureSpec, cells: impl IntoIterator<Item = (f64, &'a DVector<f64>)>) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for (vol, y) in cells {
            let c = spec.concentrations(y);
            for (d, a) in acc.iter_mut().enumerate() {
                *a += vol * self.basis.column(d).dot(&c);
            }
        }
        acc
    }

    /// Per functional, `sum_cells vol |q| . |rho M^{-1} y|`, a scale for
    /// relative drift measurements.
    pub fn magnitudes<'a>(&self, spec: &MixtureSpec, cells: impl IntoIterator<Item = (f64, &'a DVector<f64>)>) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for (vol, y) in cells {
            let c = spec.concentrations(y).abs();
            for (d, a) in acc.iter_mut().enumerate() {
                *a += vol * self.basis.column(d).abs().dot(&c);
            }
        }
        acc
    }
}

pub fn conserved_functionals(net: &ReactionNetwork, spec: &MixtureSpec) -> ConservedFunctionals {
    let n = net.n_species();
    let null = linalg::nullspace(&net.nu().transpose(), 1e-10);
    let me = spec.molar_masses();
    let conserves_mass = (0..net.n_reactions()).all(|l| net.nu().column(l).dot(me).abs() <= 1e-12 * me.norm() * net.nu().column(l).norm());

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(null.ncols() + 1);
    if conserves_mass && me.len() == n {
        cols.push(me / me.norm());
    }
    cols.extend(null.column_iter().map(|c| c.clone_owned()));
    let basis = linalg::orthonormalize(&DMatrix::from_columns(&cols), 1e-8);
    ConservedFunctionals { basis }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{elementary_rates, Reaction};
    use approx::assert_abs_diff_eq;

    fn spec(masses: Vec<f64>) -> MixtureSpec {
        let n = masses.len();
        MixtureSpec::from_upper_triangle(masses, &vec![1.0; n * (n - 1) / 2], 1.0).unwrap()
    }

    fn isomerization() -> ReactionNetwork {
        ReactionNetwork::new(2, vec![Reaction::new(vec![1, 0], vec![0, 1], 2.0, 1.0)]).unwrap()
    }

    fn association() -> ReactionNetwork {
        ReactionNetwork::new(3, vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0)]).unwrap()
    }

    #[test]
    fn isomerization_equilibrium() {
        let eq = find_equilibrium(&isomerization(), &spec(vec![1.0, 1.0]), None).unwrap();
        assert_abs_diff_eq!(eq.c_star[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.c_star[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(eq.manifold_dim, 0);
        assert!(eq.residual <= 1e-10);
    }

    #[test]
    fn association_equilibrium_from_uniform_start() {
        let eq = find_equilibrium(&association(), &spec(vec![1.0, 1.0, 2.0]), None).unwrap();
        let a = (3f64.sqrt() - 1.0) / 2.0;
        assert_abs_diff_eq!(eq.c_star[0], a, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.c_star[1], a, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.c_star[2], a * a, epsilon = 1e-12);
        assert_eq!(eq.manifold_dim, 1);
        let r = elementary_rates(&association(), &DVector::from_column_slice(&eq.c_star)).unwrap();
        assert!(r.amax() <= 1e-9);
        assert!(eq.newton_iters <= 50);
    }

    #[test]
    fn without_reactions_the_start_is_returned() {
        let init = Composition::from_slice(&[0.2, 0.3, 0.5]).unwrap();
        let eq = find_equilibrium(&ReactionNetwork::empty(3), &spec(vec![1.0, 2.0, 3.0]), Some(&init)).unwrap();
        assert_eq!(eq.y_star, vec![0.2, 0.3, 0.5]);
        assert_eq!(eq.manifold_dim, 2);
        assert_eq!(eq.newton_iters, 0);
    }

    #[test]
    fn inconsistent_network_is_refused() {
        let net = ReactionNetwork::new(
            2,
            vec![
                Reaction::new(vec![1, 0], vec![0, 1], 2.0, 1.0),
                Reaction::new(vec![0, 1], vec![1, 0], 2.0, 1.0),
            ],
        )
        .unwrap();
        assert!(matches!(find_equilibrium(&net, &spec(vec![1.0, 1.0]), None), Err(Error::NoEquilibrium { .. })));
        assert!(matches!(
            find_equilibrium(&isomerization(), &spec(vec![1.0, 2.0]), None),
            Err(Error::MassNotConserved { .. })
        ));
    }

    #[test]
    fn tangent_space_examples() {
        let iso = isomerization();
        let y = Composition::from_slice(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_eq!(tangent_space(&iso, &y).unwrap().ncols(), 0);

        let assoc = association();
        let eq = find_equilibrium(&assoc, &spec(vec![1.0, 1.0, 2.0]), None).unwrap();
        let ys = eq.composition();
        let t = tangent_space(&assoc, &ys).unwrap();
        assert_eq!(t.ncols(), 1);
        let tv = t.column(0);
        assert!(tv.sum().abs() < 1e-14);
        let weighted: f64 = (0..3).map(|j| assoc.nu()[(j, 0)] / ys[j] * tv[j]).sum();
        assert!(weighted.abs() < 1e-13);

        let free = tangent_space(&ReactionNetwork::empty(3), &Composition::uniform(3)).unwrap();
        assert_eq!(free.ncols(), 2);
    }

    #[test]
    fn conserved_functional_examples() {
        let cf = conserved_functionals(&isomerization(), &spec(vec![1.0, 1.0]));
        assert_eq!(cf.len(), 1);
        let q = cf.basis().column(0);
        assert_abs_diff_eq!(q[0], q[1], epsilon = 1e-15);

        let cf = conserved_functionals(&ReactionNetwork::empty(3), &spec(vec![1.0, 2.0, 3.0]));
        assert_eq!(cf.len(), 3);

        let s = spec(vec![1.0, 1.0, 2.0]);
        let cf = conserved_functionals(&association(), &s);
        assert_eq!(cf.len(), 2);
        let me = s.molar_masses() / s.molar_masses().norm();
        assert_abs_diff_eq!(cf.basis().column(0).dot(&me), 1.0, epsilon = 1e-14);
        assert!((association().nu().transpose() * cf.basis()).amax() < 1e-14);
    }
}
