//! Randomized property battery over seeded mixtures, compositions and
//! reaction networks. Used by the `verify` subcommand and the test suites.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibria::find_equilibrium;
use crate::error::{Error, Result};
use crate::kinetics::{reaction_entropy_production, Reaction, ReactionNetwork, ReferenceEquilibrium};
use crate::mixture::{self, Composition, InverseOnE, MixtureSpec};

pub const KERNEL_TOL: f64 = 1e-12;
pub const SQRT_KERNEL_TOL: f64 = 1e-11;
pub const ROUND_TRIP_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const ENTROPY_TOL: f64 = 1e-12;
pub const EQUILIBRIUM_ENTROPY_TOL: f64 = 1e-10;
/// Size of the network pool drawn per species count.
pub const NETWORKS_PER_SIZE: usize = 20;

/// Deliberate defects for checking that the battery notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Negates the off-diagonal entries of the friction matrix.
    FlipFrictionOffDiagonal,
}

/// Sampling helpers shared with the test suites.
pub mod sample {
    use super::*;

    pub fn spec(rng: &mut impl Rng, n: usize) -> MixtureSpec {
        let masses: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-0.5..1.5))).collect();
        let upper: Vec<f64> = (0..n * (n - 1) / 2).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        let rho = 10f64.powf(rng.random_range(-0.5..0.5));
        MixtureSpec::from_upper_triangle(masses, &upper, rho).expect("sampled parameters are positive")
    }

    /// Strictly positive composition; some samples have components down to `1e-6`.
    pub fn interior(rng: &mut impl Rng, n: usize) -> Composition {
        let spread = if rng.random_bool(0.25) { 6.0 } else { 1.0 };
        let v = DVector::from_fn(n, |_, _| 10f64.powf(-spread * rng.random::<f64>()));
        Composition::normalized(v).expect("positive sample")
    }

    /// Composition with between 1 and `n - 2` zero components (`n >= 3`).
    pub fn boundary(rng: &mut impl Rng, n: usize) -> Composition {
        let zeros = rng.random_range(1..=n - 2);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..zeros {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        let mut v = interior(rng, n).into_vector();
        for &i in &idx[..zeros] {
            v[i] = 0.0;
        }
        Composition::normalized(v).expect("at least two positive components")
    }

    /// Interior for `n = 2`, otherwise boundary with probability one third.
    pub fn any(rng: &mut impl Rng, n: usize) -> Composition {
        if n >= 3 && rng.random_bool(1.0 / 3.0) {
            boundary(rng, n)
        } else {
            interior(rng, n)
        }
    }

    pub fn in_e(rng: &mut impl Rng, n: usize) -> DVector<f64> {
        let mut h = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mean = h.mean();
        h.add_scalar_mut(-mean);
        h
    }

    /// A mass-conserving, Wegscheider-consistent network with a known
    /// positive equilibrium. Species `0..p` are elementary; each other species
    /// is built from them and gets a formation reaction. Some samples add the
    /// sum of two formation reactions as a dependent reaction.
    pub fn network(rng: &mut impl Rng, n: usize) -> (MixtureSpec, ReactionNetwork, Composition) {
        let p = rng.random_range(1..n);
        let mut masses: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..5.0)).collect();
        let mut recipes: Vec<Vec<u32>> = Vec::new();
        for _ in p..n {
            let mut counts = vec![0u32; n];
            let atoms = rng.random_range(1..=3);
            for _ in 0..atoms {
                counts[rng.random_range(0..p)] += 1;
            }
            masses.push((0..p).map(|k| counts[k] as f64 * masses[k]).sum());
            recipes.push(counts);
        }
        let c_star = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-1.0..0.5)));
        let rho: f64 = masses.iter().zip(c_star.iter()).map(|(m, c)| m * c).sum();
        let upper: Vec<f64> = (0..n * (n - 1) / 2).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        let spec = MixtureSpec::from_upper_triangle(masses, &upper, rho).expect("positive parameters");

        let consistent = |nu_plus: Vec<u32>, nu_minus: Vec<u32>, rng: &mut dyn rand::RngCore| {
            let k_plus = 10f64.powf(rng.random_range(-1.0..1.0));
            let log_k: f64 = (0..n).map(|k| (nu_plus[k] as f64 - nu_minus[k] as f64) * c_star[k].ln()).sum();
            Reaction::new(nu_plus, nu_minus, k_plus, k_plus * log_k.exp())
        };
        let mut reactions = Vec::new();
        for (j, counts) in recipes.iter().enumerate() {
            let mut product = vec![0u32; n];
            product[p + j] = 1;
            reactions.push(consistent(counts.clone(), product, rng));
        }
        if recipes.len() >= 2 && rng.random_bool(0.5) {
            let (a, b) = (rng.random_range(0..recipes.len()), rng.random_range(0..recipes.len()));
            let nu_plus: Vec<u32> = (0..n).map(|k| recipes[a][k] + recipes[b][k]).collect();
            let mut nu_minus = vec![0u32; n];
            nu_minus[p + a] += 1;
            nu_minus[p + b] += 1;
            reactions.push(consistent(nu_plus, nu_minus, rng));
        }
        let net = ReactionNetwork::new(n, reactions).expect("well-formed network");
        let y_star = Composition::normalized(spec.molar_masses().component_mul(&c_star)).expect("positive");
        (spec, net, y_star)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub checked: usize,
    pub passed: usize,
    /// Largest residual relative to the property's threshold scale.
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, checked: 0, passed: 0, worst: 0.0, tolerance }
    }

    fn record(&mut self, residual: f64) {
        self.checked += 1;
        if residual <= self.tolerance {
            self.passed += 1;
        }
        // NaN residuals count as failures and dominate the worst case.
        self.worst = if residual.is_nan() { f64::NAN } else { self.worst.max(residual) };
    }

    fn fail(&mut self) {
        self.checked += 1;
        self.worst = f64::INFINITY;
    }

    pub fn ok(&self) -> bool {
        self.passed == self.checked
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub species: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::ok)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.properties.iter().filter(|p| !p.ok()).map(|p| p.name).collect()
    }
}

fn friction_matrix(spec: &MixtureSpec, y: &Composition, mutation: Option<Mutation>) -> Result<DMatrix<f64>> {
    let mut b = mixture::assemble_b(spec, y)?;
    if mutation == Some(Mutation::FlipFrictionOffDiagonal) {
        let n = b.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    b[(i, j)] = -b[(i, j)];
                }
            }
        }
    }
    Ok(b)
}

struct Battery {
    by: PropertyResult,
    eb: PropertyResult,
    bs_sym: PropertyResult,
    bs_sqrt: PropertyResult,
    round_trip: PropertyResult,
    row: PropertyResult,
    a0: PropertyResult,
    mobility: PropertyResult,
    entropy: PropertyResult,
    eq_entropy: PropertyResult,
}

impl Battery {
    fn new() -> Self {
        Self {
            by: PropertyResult::new("friction_kernel_y", KERNEL_TOL),
            eb: PropertyResult::new("friction_kernel_e", KERNEL_TOL),
            bs_sym: PropertyResult::new("symmetrized_friction_nsd", KERNEL_TOL),
            bs_sqrt: PropertyResult::new("symmetrized_friction_sqrt_kernel", SQRT_KERNEL_TOL),
            round_trip: PropertyResult::new("inverse_round_trip", ROUND_TRIP_TOL),
            row: PropertyResult::new("inverse_zero_row_structure", ROUND_TRIP_TOL),
            a0: PropertyResult::new("flux_matrix_positive_spectrum", 0.0),
            mobility: PropertyResult::new("mobility_symmetric_psd", SYMMETRY_TOL),
            entropy: PropertyResult::new("reaction_entropy_sign", ENTROPY_TOL),
            eq_entropy: PropertyResult::new("equilibrium_entropy_zero", EQUILIBRIUM_ENTROPY_TOL),
        }
    }

    fn into_vec(self) -> Vec<PropertyResult> {
        vec![
            self.by,
            self.eb,
            self.bs_sym,
            self.bs_sqrt,
            self.round_trip,
            self.row,
            self.a0,
            self.mobility,
            self.entropy,
            self.eq_entropy,
        ]
    }

    fn mixture_trial(&mut self, rng: &mut ChaCha8Rng, n: usize, mutation: Option<Mutation>) -> Result<()> {
        let spec = sample::spec(rng, n);
        let y = sample::any(rng, n);
        let yv = y.as_vector();
        let b = friction_matrix(&spec, &y, mutation)?;

        self.by.record((&b * yv).amax());
        self.eb.record(b.row_sum().amax());

        if y.is_interior() {
            let sqrt_y = yv.map(f64::sqrt);
            let bs = DMatrix::from_fn(n, n, |i, j| b[(i, j)] * sqrt_y[j] / sqrt_y[i]);
            let asym = (&bs - bs.transpose()).amax();
            let sym = (&bs + bs.transpose()) * 0.5;
            let max_eig = SymmetricEigen::new(sym).eigenvalues.max();
            self.bs_sym.record(asym.max(max_eig));
            self.bs_sqrt.record((&bs * &sqrt_y).amax());
        }

        // Round trip through the library inverse, checked against the (possibly mutated) B.
        let inv = InverseOnE::new(&spec, &y)?;
        let h = sample::in_e(rng, n);
        let x = inv.apply(&h)?;
        let hn = h.amax().max(f64::MIN_POSITIVE);
        self.round_trip.record((&b * &x - &h).amax() / hn);
        for i in (0..n).filter(|&i| yv[i] == 0.0) {
            self.row.record((x[i] - h[i] / b[(i, i)]).abs() / (h[i] / b[(i, i)]).abs().max(x.amax()).max(f64::MIN_POSITIVE));
        }

        let a0 = mixture::flux_matrix_a0(&spec, &y)?;
        let min_re = mixture::spectrum_on_e(&a0)?.first().map(|z| z.re).unwrap_or(0.0);
        // Recorded as a residual: non-positive real parts fail.
        self.a0.record(if min_re > 0.0 { 0.0 } else { f64::INFINITY });

        if y.is_interior() {
            let g = mixture::mobility_matrix(&spec, &y)?;
            let scale = g.amax().max(f64::MIN_POSITIVE);
            let asym = (&g - g.transpose()).amax() / scale;
            let sym = (&g + g.transpose()) * 0.5;
            let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
            let q = mixture::e_basis(n);
            let min_on_e = SymmetricEigen::new(q.transpose() * &sym * &q).eigenvalues.min();
            let psd = if min_eig >= -SYMMETRY_TOL * scale && min_on_e > 0.0 { 0.0 } else { f64::INFINITY };
            self.mobility.record(asym.max(psd));
        }
        Ok(())
    }

    fn network_trial(&mut self, rng: &mut ChaCha8Rng, pool: &[(MixtureSpec, ReactionNetwork, Composition)]) -> Result<()> {
        let (spec, net, y_star) = &pool[rng.random_range(0..pool.len())];
        let reference = ReferenceEquilibrium::new(spec, net, y_star.clone())?;
        let y = sample::interior(rng, spec.n_species());
        self.entropy.record(reaction_entropy_production(spec, net, &reference, &y)?.max(0.0));

        if rng.random_bool(0.1) {
            let eq = find_equilibrium(net, spec, Some(&y))?;
            let at_eq = reaction_entropy_production(spec, net, &reference, &eq.composition())?;
            self.eq_entropy.record(at_eq.abs());
        }
        Ok(())
    }
}

/// Runs `trials` samples per species count and property family.
pub fn run(species: &[usize], trials: usize, seed: u64, mutation: Option<Mutation>) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::InvalidSpec("trials must be positive".into()));
    }
    if let Some(&n) = species.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidSpec(format!("species count {n} must be at least 2")));
    }
    let mut battery = Battery::new();
    for &n in species {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n as u64);
        for _ in 0..trials {
            if let Err(e) = battery.mixture_trial(&mut rng, n, mutation) {
                match e {
                    Error::SingularSystem | Error::EigenSolverFailed | Error::NotInE { .. } => battery.round_trip.fail(),
                    other => return Err(other),
                }
            }
        }
        let pool: Vec<_> = (0..NETWORKS_PER_SIZE).map(|_| sample::network(&mut rng, n)).collect();
        for _ in 0..trials {
            battery.network_trial(&mut rng, &pool)?;
        }
    }
    Ok(VerifyReport { species: species.to_vec(), trials, seed, properties: battery.into_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::validate_network;

    #[test]
    fn battery_passes() {
        let report = run(&[2, 3, 5], 60, 1, None).unwrap();
        for p in &report.properties {
            assert!(p.ok(), "{p:?}");
            assert!(p.checked > 0, "{} never checked", p.name);
        }
    }

    #[test]
    fn mutation_is_detected() {
        let report = run(&[3, 4], 30, 1, Some(Mutation::FlipFrictionOffDiagonal)).unwrap();
        let failing = report.failing();
        assert!(failing.contains(&"friction_kernel_y"));
        assert!(failing.contains(&"inverse_round_trip"));
    }

    #[test]
    fn sampled_networks_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=6 {
            for _ in 0..10 {
                let (spec, net, y) = sample::network(&mut rng, n);
                assert!(validate_network(&net, &spec).unwrap().is_valid());
                assert!(ReferenceEquilibrium::new(&spec, &net, y).is_ok());
            }
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run(&[2], 0, 0, None).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(run(&[3], 20, 9, None).unwrap(), run(&[3], 20, 9, None).unwrap());
    }
}
