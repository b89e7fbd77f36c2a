//! Reversible mass-action kinetics, chemical potentials, the free energy
//! density and network consistency checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{Composition, MixtureSpec};

/// Relative rank tolerance for the stoichiometric matrix.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance on the Wegscheider relations `sum_k alpha_lk log K_k = log K_l`.
pub const WEGSCHEIDER_TOL: f64 = 1e-10;
/// Tolerance on the log-linear equilibrium equations.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// One reversible elementary reaction `sum_j nu+_j A_j <=> sum_j nu-_j A_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub nu_plus: Vec<u32>,
    pub nu_minus: Vec<u32>,
    pub k_plus: f64,
    pub k_minus: f64,
}

impl Reaction {
    pub fn new(nu_plus: Vec<u32>, nu_minus: Vec<u32>, k_plus: f64, k_minus: f64) -> Self {
        Self { nu_plus, nu_minus, k_plus, k_minus }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    n_species: usize,
    reactions: Vec<Reaction>,
    /// `nu = nu+ - nu-`, one column per reaction.
    nu: DMatrix<f64>,
    log_k: DVector<f64>,
}

impl ReactionNetwork {
    pub fn new(n_species: usize, reactions: Vec<Reaction>) -> Result<Self> {
        for (l, r) in reactions.iter().enumerate() {
            if r.nu_plus.len() != n_species || r.nu_minus.len() != n_species {
                return Err(Error::InvalidNetwork(format!(
                    "reaction {}: stoichiometric vectors must have {n_species} entries",
                    l + 1
                )));
            }
            if r.nu_plus == r.nu_minus {
                return Err(Error::InvalidNetwork(format!("reaction {}: zero stoichiometric column", l + 1)));
            }
            if !(r.k_plus > 0.0 && r.k_plus.is_finite() && r.k_minus > 0.0 && r.k_minus.is_finite()) {
                return Err(Error::InvalidNetwork(format!("reaction {}: rate constants must be positive", l + 1)));
            }
        }
        let m = reactions.len();
        let nu = DMatrix::from_fn(n_species, m, |j, l| {
            reactions[l].nu_plus[j] as f64 - reactions[l].nu_minus[j] as f64
        });
        let log_k = DVector::from_iterator(m, reactions.iter().map(|r| r.k_minus.ln() - r.k_plus.ln()));
        Ok(Self { n_species, reactions, nu, log_k })
    }

    /// The network without reactions (`r = 0`).
    pub fn empty(n_species: usize) -> Self {
        Self::new(n_species, Vec::new()).expect("empty network is valid")
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn nu(&self) -> &DMatrix<f64> {
        &self.nu
    }

    /// `log K_l = log k_l^- - log k_l^+`.
    pub fn log_k(&self) -> &DVector<f64> {
        &self.log_k
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n_species {
            return Err(Error::DimensionMismatch { expected: self.n_species, found: len });
        }
        Ok(())
    }

    /// Per-reaction `(nu_l | M e)`.
    pub fn mass_defects(&self, spec: &MixtureSpec) -> Vec<f64> {
        let me = spec.molar_masses();
        (0..self.n_reactions()).map(|l| self.nu.column(l).dot(me)).collect()
    }

    fn check_mass_conservation(&self, spec: &MixtureSpec) -> Result<()> {
        let me = spec.molar_masses();
        for (l, d) in self.mass_defects(spec).into_iter().enumerate() {
            if d.abs() > 1e-12 * self.nu.column(l).norm() * me.norm() {
                return Err(Error::MassNotConserved { reaction: l + 1, defect: d });
            }
        }
        Ok(())
    }

    /// Max over all reactions of `|(nu_l | log c) - log K_l|`.
    pub fn equilibrium_residual(&self, c: &DVector<f64>) -> f64 {
        let log_c = c.map(f64::ln);
        (0..self.n_reactions())
            .map(|l| (self.nu.column(l).dot(&log_c) - self.log_k[l]).abs())
            .fold(0.0, f64::max)
    }
}

/// `prod_j c_j^{p_j}` with `0^0 = 1`.
fn monomial(c: &DVector<f64>, powers: &[u32]) -> f64 {
    c.iter().zip(powers).map(|(&cj, &p)| cj.powi(p as i32)).product()
}

/// Elementary rates `r_l(c) = -k_l^+ c^{nu_l^+} + k_l^- c^{nu_l^-}`.
pub fn elementary_rates(net: &ReactionNetwork, c: &DVector<f64>) -> Result<DVector<f64>> {
    net.check_dim(c.len())?;
    if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeConcentration { index, value });
    }
    Ok(rates_unchecked(net, c))
}

fn rates_unchecked(net: &ReactionNetwork, c: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        net.n_reactions(),
        net.reactions
            .iter()
            .map(|r| -r.k_plus * monomial(c, &r.nu_plus) + r.k_minus * monomial(c, &r.nu_minus)),
    )
}

/// The mass source `M r(y) = M nu r(rho M^{-1} y)`. Components below zero
/// (admissible up to the boundary tolerance) enter the monomials as zero.
pub fn source_term(net: &ReactionNetwork, spec: &MixtureSpec, y: &Composition) -> Result<DVector<f64>> {
    net.check_dim(y.len())?;
    if spec.n_species() != net.n_species {
        return Err(Error::DimensionMismatch { expected: spec.n_species(), found: net.n_species });
    }
    net.check_mass_conservation(spec)?;
    Ok(source_term_unchecked(net, spec, y.as_vector()))
}

pub(crate) fn source_term_unchecked(net: &ReactionNetwork, spec: &MixtureSpec, y: &DVector<f64>) -> DVector<f64> {
    if net.n_reactions() == 0 {
        return DVector::zeros(y.len());
    }
    let c = spec.concentrations(y).map(|v| v.max(0.0));
    let rates = rates_unchecked(net, &c);
    (&net.nu * rates).component_mul(spec.molar_masses())
}

/// A fixed strictly positive chemical equilibrium, the reference point of
/// the chemical potentials and of the free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEquilibrium {
    y_star: Composition,
    c_star: DVector<f64>,
}

impl ReferenceEquilibrium {
    /// Checks positivity and, for the attached network, the equilibrium
    /// equations to `EQUILIBRIUM_TOL`.
    pub fn new(spec: &MixtureSpec, net: &ReactionNetwork, y_star: Composition) -> Result<Self> {
        if y_star.len() != spec.n_species() {
            return Err(Error::DimensionMismatch { expected: spec.n_species(), found: y_star.len() });
        }
        net.check_dim(y_star.len())?;
        if let Some((index, &value)) = y_star.as_vector().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::NonInteriorComposition { index, value });
        }
        let c_star = spec.concentrations(y_star.as_vector());
        let residual = net.equilibrium_residual(&c_star);
        if residual > EQUILIBRIUM_TOL {
            return Err(Error::NotAnEquilibrium { residual });
        }
        Ok(Self { y_star, c_star })
    }

    pub fn y_star(&self) -> &Composition {
        &self.y_star
    }

    pub fn c_star(&self) -> &DVector<f64> {
        &self.c_star
    }
}

/// `mu_k = log(y_k / y*_k) / M_k`.
pub fn chemical_potential(spec: &MixtureSpec, reference: &ReferenceEquilibrium, y: &Composition) -> Result<DVector<f64>> {
    if y.len() != spec.n_species() {
        return Err(Error::DimensionMismatch { expected: spec.n_species(), found: y.len() });
    }
    if let Some((index, &value)) = y.as_vector().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonInteriorComposition { index, value });
    }
    let ys = reference.y_star.as_vector();
    let m = spec.molar_masses();
    Ok(DVector::from_fn(y.len(), |k, _| (y[k] / ys[k]).ln() / m[k]))
}

/// `psi(y) = sum_k (y_k / M_k) (log(y_k / y*_k) - 1)`, with `0 log 0 = 0`.
pub fn free_energy_density(spec: &MixtureSpec, reference: &ReferenceEquilibrium, y: &Composition) -> f64 {
    free_energy_density_raw(spec, reference, y.as_vector())
}

pub(crate) fn free_energy_density_raw(spec: &MixtureSpec, reference: &ReferenceEquilibrium, y: &DVector<f64>) -> f64 {
    let ys = reference.y_star.as_vector();
    let m = spec.molar_masses();
    y.iter()
        .enumerate()
        .map(|(k, &yk)| if yk > 0.0 { yk / m[k] * ((yk / ys[k]).ln() - 1.0) } else { 0.0 })
        .sum()
}

/// Reaction part of the entropy production, `(mu(y) | M r(y)) <= 0`.
pub fn reaction_entropy_production(
    spec: &MixtureSpec,
    net: &ReactionNetwork,
    reference: &ReferenceEquilibrium,
    y: &Composition,
) -> Result<f64> {
    let mu = chemical_potential(spec, reference, y)?;
    let mr = source_term(net, spec, y)?;
    Ok(mu.dot(&mr))
}

/// A reaction whose stoichiometric column depends on the independent ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependentReaction {
    /// 0-based reaction index.
    pub reaction: usize,
    /// Coefficients on the independent columns, in the order of
    /// [`ValidationReport::independent`].
    pub alpha: Vec<f64>,
    /// `sum_k alpha_lk log K_k - log K_l`.
    pub wegscheider_mismatch: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Per reaction, whether `(nu_l | M e) = 0`.
    pub mass_conserved: Vec<bool>,
    pub mass_defects: Vec<f64>,
    /// Rank `s` of `nu`.
    pub rank: usize,
    /// 0-based indices of a maximal independent column set (first-found).
    pub independent: Vec<usize>,
    pub dependent: Vec<DependentReaction>,
}

impl ValidationReport {
    pub fn mass_ok(&self) -> bool {
        self.mass_conserved.iter().all(|&b| b)
    }

    pub fn wegscheider_ok(&self) -> bool {
        self.dependent.iter().all(|d| d.consistent)
    }

    pub fn is_valid(&self) -> bool {
        self.mass_ok() && self.wegscheider_ok()
    }

    /// The first failed check as an error, mass conservation first.
    pub fn first_error(&self) -> Option<Error> {
        if let Some(l) = self.mass_conserved.iter().position(|&b| !b) {
            return Some(Error::MassNotConserved { reaction: l + 1, defect: self.mass_defects[l] });
        }
        self.dependent
            .iter()
            .find(|d| !d.consistent)
            .map(|d| Error::NoEquilibrium { reaction: d.reaction + 1, mismatch: d.wegscheider_mismatch })
    }
}

/// Checks mass conservation, the rank of `nu` and the Wegscheider relations.
pub fn validate_network(net: &ReactionNetwork, spec: &MixtureSpec) -> Result<ValidationReport> {
    if spec.n_species() != net.n_species {
        return Err(Error::DimensionMismatch { expected: spec.n_species(), found: net.n_species });
    }
    let me = spec.molar_masses();
    let mass_defects = net.mass_defects(spec);
    let mass_conserved = mass_defects
        .iter()
        .enumerate()
        .map(|(l, d)| d.abs() <= 1e-12 * net.nu.column(l).norm() * me.norm())
        .collect();

    let tol = RANK_TOL * net.nu.norm();
    let independent = linalg::independent_columns(&net.nu, tol);
    let rank = independent.len();

    let mut dependent = Vec::new();
    if rank > 0 {
        let nu_hat = DMatrix::from_columns(&independent.iter().map(|&l| net.nu.column(l)).collect::<Vec<_>>());
        let svd = nu_hat.svd(true, true);
        for l in (0..net.n_reactions()).filter(|l| !independent.contains(l)) {
            let col = net.nu.column(l).clone_owned();
            let alpha = svd.solve(&col, 1e-14).expect("both factors computed");
            let mismatch: f64 = independent.iter().zip(alpha.iter()).map(|(&k, a)| a * net.log_k[k]).sum::<f64>()
                - net.log_k[l];
            dependent.push(DependentReaction {
                reaction: l,
                alpha: alpha.iter().copied().collect(),
                wegscheider_mismatch: mismatch,
                consistent: mismatch.abs() <= WEGSCHEIDER_TOL,
            });
        }
    }

    Ok(ValidationReport { mass_conserved, mass_defects, rank, independent, dependent })
}
