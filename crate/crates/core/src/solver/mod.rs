//! Finite-volume discretization of the Maxwell-Stefan reaction-diffusion
//! system `rho dy/dt = Div(A0(y) grad y) + M r(y)` with zero-flux
//! boundaries, integrated with classical RK4 under a spectral CFL bound.

pub mod grid;
pub mod output;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::equilibria::{conserved_functionals, find_equilibrium, ConservedFunctionals};
use crate::error::{Error, Result};
use crate::kinetics::{self, free_energy_density_raw, validate_network, ReactionNetwork, ReferenceEquilibrium};
use crate::mixture::{self, Composition, InverseOnE, MixtureSpec, BOUNDARY_TOL};

pub use grid::{Field, Grid, InitialCondition, Profile, ZeroMask};

/// Largest undershoot below zero that a step may clip away.
pub const CLIP_TOL: f64 = 1e-10;
pub const MAX_CFL_SAFETY: f64 = 0.9;
/// Below this many faces or cells the loops stay sequential.
const PAR_THRESHOLD: usize = 512;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: MixtureSpec,
    /// `None` means `r = 0`.
    pub network: Option<ReactionNetwork>,
    /// Reference point of the free energy; computed when absent.
    pub reference: Option<ReferenceEquilibrium>,
    pub grid: Grid,
    pub initial: InitialCondition,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub output_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::NonIntegrableConfig(msg));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= MAX_CFL_SAFETY) {
            return bad(format!("cfl_safety = {} must lie in (0, {MAX_CFL_SAFETY}]", self.cfl_safety));
        }
        if !(self.output_interval > 0.0 && self.output_interval.is_finite()) {
            return bad(format!("output_interval = {} must be positive", self.output_interval));
        }
        let n = self.spec.n_species();
        if self.initial.n_species() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.initial.n_species() });
        }
        if let Some(net) = &self.network {
            let report = validate_network(net, &self.spec)?;
            if let Some(err) = report.first_error() {
                return Err(err);
            }
        }
        if let Some(r) = &self.reference {
            if r.y_star().len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.y_star().len() });
            }
        }
        Ok(())
    }
}

/// One record of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub time: f64,
    /// Total free energy `sum_cells vol psi(y)`.
    pub free_energy: f64,
    pub min_component: f64,
    pub max_component: f64,
    /// `max_cells |sum_k y_k - 1|`.
    pub sum_deviation: f64,
    pub conserved_values: Vec<f64>,
    /// Size of the step that ended at `time` (zero for the initial record).
    pub step_size: f64,
    pub all_interior: bool,
}

/// Diffusive flux `A0(y_face) (y_right - y_left) / spacing` through a face,
/// with `y_face` the renormalized arithmetic mean.
pub fn face_flux(spec: &MixtureSpec, y_left: &Composition, y_right: &Composition, spacing: f64) -> Result<DVector<f64>> {
    if y_left.len() != spec.n_species() || y_right.len() != spec.n_species() {
        return Err(Error::DimensionMismatch { expected: spec.n_species(), found: y_left.len().max(y_right.len()) });
    }
    face_flux_raw(spec, y_left.as_vector(), y_right.as_vector(), spacing)
}

fn face_flux_raw(spec: &MixtureSpec, yl: &DVector<f64>, yr: &DVector<f64>, spacing: f64) -> Result<DVector<f64>> {
    let dy = yr - yl;
    if dy.iter().all(|&d| d == 0.0) {
        return Ok(dy);
    }
    let mut mid = (yl + yr) * 0.5;
    let s = mid.sum();
    mid /= s;
    let face = Composition::new_unchecked(mid);
    let inv = InverseOnE::new(spec, &face)?;
    let scaled = dy.component_div(spec.molar_masses());
    let h = mixture::project_p(&face, &scaled)?;
    Ok(inv.apply(&h)? * (-1.0 / spacing))
}

struct Integrator<'a> {
    spec: &'a MixtureSpec,
    network: Option<&'a ReactionNetwork>,
    grid: &'a Grid,
    faces: Vec<(usize, usize, usize)>,
    cfl_safety: f64,
}

impl<'a> Integrator<'a> {
    fn new(config: &'a SimConfig) -> Self {
        Self {
            spec: &config.spec,
            network: config.network.as_ref().filter(|n| n.n_reactions() > 0),
            grid: &config.grid,
            faces: config.grid.interior_faces(),
            cfl_safety: config.cfl_safety,
        }
    }

    fn rhs(&self, ys: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let flux = |&(l, r, axis): &(usize, usize, usize)| face_flux_raw(self.spec, &ys[l], &ys[r], self.grid.spacing(axis));
        let fluxes: Vec<Result<DVector<f64>>> = if self.faces.len() >= PAR_THRESHOLD {
            self.faces.par_iter().map(flux).collect()
        } else {
            self.faces.iter().map(flux).collect()
        };

        let n = self.spec.n_species();
        let mut out = vec![DVector::zeros(n); ys.len()];
        // Accumulate in face order so results do not depend on scheduling.
        for (&(l, r, axis), f) in self.faces.iter().zip(fluxes) {
            let f = f? / self.grid.spacing(axis);
            out[l] += &f;
            out[r] -= &f;
        }
        let inv_rho = 1.0 / self.spec.rho();
        for (rhs, y) in out.iter_mut().zip(ys) {
            if let Some(net) = self.network {
                *rhs += kinetics::source_term_unchecked(net, self.spec, y);
            }
            *rhs *= inv_rho;
        }
        Ok(out)
    }

    fn stable_dt(&self, ys: &[DVector<f64>]) -> Result<f64> {
        let radius = |y: &DVector<f64>| mixture::a0_spectral_radius(self.spec, &Composition::new_unchecked(y.clone()));
        let radii: Vec<Result<f64>> = if ys.len() >= PAR_THRESHOLD {
            ys.par_iter().map(radius).collect()
        } else {
            ys.iter().map(radius).collect()
        };
        let mut lambda: f64 = 0.0;
        for r in radii {
            lambda = lambda.max(r?);
        }
        let h = self.grid.min_spacing();
        Ok(self.cfl_safety * self.spec.rho() * h * h / (2.0 * self.grid.dim() as f64 * lambda))
    }

    fn check_stage(stage: &[DVector<f64>], time: f64) -> Result<()> {
        let min = stage.iter().map(|y| y.min()).fold(f64::INFINITY, f64::min);
        if !(min >= -BOUNDARY_TOL) {
            return Err(Error::StepRejected { time, min_component: min });
        }
        Ok(())
    }

    fn step(&self, ys: &[DVector<f64>], time: f64, dt: f64) -> Result<Vec<DVector<f64>>> {
        let axpy = |a: f64, k: &[DVector<f64>]| -> Vec<DVector<f64>> {
            ys.iter().zip(k).map(|(y, k)| y + k * a).collect()
        };
        let k1 = self.rhs(ys)?;
        let y2 = axpy(0.5 * dt, &k1);
        Self::check_stage(&y2, time)?;
        let k2 = self.rhs(&y2)?;
        let y3 = axpy(0.5 * dt, &k2);
        Self::check_stage(&y3, time)?;
        let k3 = self.rhs(&y3)?;
        let y4 = axpy(dt, &k3);
        Self::check_stage(&y4, time)?;
        let k4 = self.rhs(&y4)?;

        let mut next: Vec<DVector<f64>> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| y + (&k1[i] + (&k2[i] + &k3[i]) * 2.0 + &k4[i]) * (dt / 6.0))
            .collect();

        let min = next.iter().map(|y| y.min()).fold(f64::INFINITY, f64::min);
        if !(min >= -CLIP_TOL) {
            return Err(Error::StepRejected { time: time + dt, min_component: min });
        }
        for y in next.iter_mut().filter(|y| y.min() < 0.0) {
            y.apply(|v| *v = v.max(0.0));
            let s = y.sum();
            *y /= s;
        }
        Ok(next)
    }
}

fn field_vectors(field: &Field) -> Vec<DVector<f64>> {
    field.vectors().cloned().collect()
}

/// Per-cell `(1/rho) [div(A0 grad y) + M r(y)]`; every entry lies in `E`.
pub fn semidiscrete_rhs(config: &SimConfig, field: &Field) -> Result<Vec<DVector<f64>>> {
    Integrator::new(config).rhs(&field_vectors(field))
}

/// `cfl_safety rho h_min^2 / (2 dim Lambda)` with `Lambda` the largest
/// spectral radius of `A0` over the cells.
pub fn stable_dt(config: &SimConfig, field: &Field) -> Result<f64> {
    Integrator::new(config).stable_dt(&field_vectors(field))
}

/// One classical RK4 step. Undershoots down to `-CLIP_TOL` are clipped and
/// the affected cells renormalized; anything larger rejects the step.
pub fn step_rk4(config: &SimConfig, field: &Field, dt: f64) -> Result<Field> {
    let next = Integrator::new(config).step(&field_vectors(field), field.time, dt)?;
    Ok(Field {
        grid: field.grid.clone(),
        values: next.into_iter().map(Composition::new_unchecked).collect(),
        time: field.time + dt,
    })
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub diagnostics: Vec<Diagnostics>,
    pub final_field: Field,
    pub snapshots: Vec<Field>,
    pub reference: ReferenceEquilibrium,
    pub functionals: ConservedFunctionals,
    /// Per functional, the largest `|I_q(t) - I_q(0)|` relative to its scale.
    pub conserved_drift: Vec<f64>,
    /// Largest `|sum_k y_k - 1|` seen after any step.
    pub max_sum_deviation: f64,
    /// Smallest component seen after any step.
    pub min_component: f64,
    pub steps: usize,
}

/// The free-energy reference used when the config does not fix one.
pub fn default_reference(config: &SimConfig, initial: &Field) -> Result<ReferenceEquilibrium> {
    let spec = &config.spec;
    let n = spec.n_species();
    let mean = initial.mean();
    let start = if mean.iter().all(|&v| v > 0.0) {
        Composition::normalized(mean)?
    } else {
        Composition::uniform(n)
    };
    match config.network.as_ref().filter(|net| net.n_reactions() > 0) {
        Some(net) => {
            let eq = find_equilibrium(net, spec, Some(&start))?;
            ReferenceEquilibrium::new(spec, net, eq.composition())
        }
        None => ReferenceEquilibrium::new(spec, &ReactionNetwork::empty(n), start),
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    simulate_observed(config, |_, _| {})
}

/// Like [`simulate`], calling `observer` at every diagnostics record.
pub fn simulate_observed(config: &SimConfig, observer: impl FnMut(&Field, &Diagnostics)) -> Result<SimOutput> {
    config.validate()?;
    let field = config.initial.build(&config.grid, config.seed)?;
    simulate_from(config, field, observer)
}

/// Integrates from an explicitly given initial field.
pub fn simulate_from(config: &SimConfig, initial: Field, mut observer: impl FnMut(&Field, &Diagnostics)) -> Result<SimOutput> {
    config.validate()?;
    if initial.grid != config.grid {
        return Err(Error::NonIntegrableConfig("initial field lives on a different grid".into()));
    }
    if initial.n_species() != config.spec.n_species() {
        return Err(Error::DimensionMismatch { expected: config.spec.n_species(), found: initial.n_species() });
    }
    for y in &initial.values {
        Composition::new(y.as_vector().clone())?;
    }

    let spec = &config.spec;
    let reference = match &config.reference {
        Some(r) => r.clone(),
        None => default_reference(config, &initial)?,
    };
    let empty = ReactionNetwork::empty(spec.n_species());
    let functionals = conserved_functionals(config.network.as_ref().unwrap_or(&empty), spec);
    let integrator = Integrator::new(config);

    let vol = config.grid.cell_volume();
    let record = |ys: &[DVector<f64>], time: f64, dt: f64| -> Diagnostics {
        Diagnostics {
            time,
            free_energy: ys.iter().map(|y| vol * free_energy_density_raw(spec, &reference, y)).sum(),
            min_component: ys.iter().map(|y| y.min()).fold(f64::INFINITY, f64::min),
            max_component: ys.iter().map(|y| y.max()).fold(f64::NEG_INFINITY, f64::max),
            sum_deviation: ys.iter().map(|y| (y.sum() - 1.0).abs()).fold(0.0, f64::max),
            conserved_values: functionals.evaluate(spec, ys.iter().map(|y| (vol, y))),
            step_size: dt,
            all_interior: ys.iter().all(|y| y.min() >= mixture::INTERIOR_EPS),
        }
    };
    let to_field = |ys: &[DVector<f64>], time: f64| Field {
        grid: config.grid.clone(),
        values: ys.iter().cloned().map(Composition::new_unchecked).collect(),
        time,
    };

    let mut ys = field_vectors(&initial);
    let mut t = 0.0;
    let q0 = functionals.evaluate(spec, ys.iter().map(|y| (vol, y)));
    let q_scale: Vec<f64> = functionals
        .magnitudes(spec, ys.iter().map(|y| (vol, y)))
        .iter()
        .zip(&q0)
        .map(|(m, q)| m.max(q.abs()).max(f64::MIN_POSITIVE))
        .collect();

    let mut snapshot_times: Vec<f64> = config.snapshot_times.iter().copied().filter(|&s| s <= config.t_end).collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();

    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut si = 0;
    while si < snapshot_times.len() && snapshot_times[si] <= 0.0 {
        snapshots.push(to_field(&ys, 0.0));
        si += 1;
    }
    let d0 = record(&ys, 0.0, 0.0);
    observer(&to_field(&ys, 0.0), &d0);
    diagnostics.push(d0);

    let mut drift = vec![0.0f64; functionals.len()];
    let mut max_sum_dev = ys.iter().map(|y| (y.sum() - 1.0).abs()).fold(0.0, f64::max);
    let mut min_component = ys.iter().map(|y| y.min()).fold(f64::INFINITY, f64::min);
    let mut k_out = 1usize;
    let mut steps = 0usize;

    while t < config.t_end {
        let next_out = (k_out as f64 * config.output_interval).min(config.t_end);
        let next_snap = snapshot_times.get(si).copied().unwrap_or(f64::INFINITY);
        let target = next_out.min(next_snap);
        let dt_stable = integrator.stable_dt(&ys)?;
        let (dt, hit) = if target - t <= dt_stable { (target - t, true) } else { (dt_stable, false) };

        ys = integrator.step(&ys, t, dt)?;
        steps += 1;
        t = if hit { target } else { t + dt };

        max_sum_dev = max_sum_dev.max(ys.iter().map(|y| (y.sum() - 1.0).abs()).fold(0.0, f64::max));
        min_component = min_component.min(ys.iter().map(|y| y.min()).fold(f64::INFINITY, f64::min));

        if hit && target == next_snap {
            snapshots.push(to_field(&ys, t));
            si += 1;
        }
        if hit && target == next_out {
            let d = record(&ys, t, dt);
            for (q, ((v, v0), s)) in drift.iter_mut().zip(d.conserved_values.iter().zip(&q0).zip(&q_scale)) {
                *q = q.max((v - v0).abs() / s);
            }
            observer(&to_field(&ys, t), &d);
            diagnostics.push(d);
            while (k_out as f64) * config.output_interval <= t {
                k_out += 1;
            }
        }
    }

    Ok(SimOutput {
        diagnostics,
        final_field: to_field(&ys, t),
        snapshots,
        reference,
        functionals,
        conserved_drift: drift,
        max_sum_deviation: max_sum_dev,
        min_component,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::Reaction;
    use approx::assert_abs_diff_eq;

    fn comp(x: &[f64]) -> Composition {
        Composition::from_slice(x).unwrap()
    }

    fn two_species(f12: f64) -> MixtureSpec {
        MixtureSpec::from_upper_triangle(vec![1.0, 1.0], &[f12], 1.0).unwrap()
    }

    fn config(spec: MixtureSpec, network: Option<ReactionNetwork>, grid: Grid, initial: InitialCondition) -> SimConfig {
        SimConfig {
            spec,
            network,
            reference: None,
            grid,
            initial,
            t_end: 0.01,
            cfl_safety: 0.4,
            output_interval: 0.001,
            snapshot_times: vec![],
            seed: 0,
        }
    }

    fn uniform_ic(y: &[f64]) -> InitialCondition {
        InitialCondition::new(Profile::Uniform { value: comp(y) })
    }

    #[test]
    fn face_flux_examples() {
        let spec = two_species(1.0);
        let y = comp(&[0.4, 0.6]);
        assert_eq!(face_flux(&spec, &y, &y, 0.1).unwrap().amax(), 0.0);
        let f = face_flux(&spec, &y, &comp(&[0.6, 0.4]), 0.1).unwrap();
        assert_abs_diff_eq!(f[0], 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(f[1], -2.0, epsilon = 1e-13);
    }

    #[test]
    fn two_cell_rhs_matches_hand_computation() {
        let spec = two_species(1.0);
        let grid = Grid::line(0.2, 2).unwrap();
        let cfg = config(spec, None, grid.clone(), uniform_ic(&[0.5, 0.5]));
        let field = Field::new(grid, vec![comp(&[0.4, 0.6]), comp(&[0.6, 0.4])], 0.0).unwrap();
        let rhs = semidiscrete_rhs(&cfg, &field).unwrap();
        assert_abs_diff_eq!(rhs[0][0], 20.0, epsilon = 1e-11);
        assert_abs_diff_eq!(rhs[0][1], -20.0, epsilon = 1e-11);
        assert_abs_diff_eq!(rhs[1][0], -20.0, epsilon = 1e-11);
        assert_abs_diff_eq!(rhs[1][1], 20.0, epsilon = 1e-11);
    }

    #[test]
    fn rhs_vanishes_for_uniform_and_equilibrium_fields() {
        let grid = Grid::line(1.0, 8).unwrap();
        let cfg = config(two_species(1.0), None, grid.clone(), uniform_ic(&[0.3, 0.7]));
        let field = cfg.initial.build(&grid, 0).unwrap();
        assert!(semidiscrete_rhs(&cfg, &field).unwrap().iter().all(|r| r.amax() == 0.0));

        let net = ReactionNetwork::new(2, vec![Reaction::new(vec![1, 0], vec![0, 1], 2.0, 1.0)]).unwrap();
        let cfg = config(two_species(1.0), Some(net), grid.clone(), uniform_ic(&[1.0 / 3.0, 2.0 / 3.0]));
        let field = cfg.initial.build(&grid, 0).unwrap();
        assert!(semidiscrete_rhs(&cfg, &field).unwrap().iter().all(|r| r.amax() < 1e-15));
        let next = step_rk4(&cfg, &field, 1e-3).unwrap();
        assert!(next.values.iter().zip(&field.values).all(|(a, b)| (a.as_vector() - b.as_vector()).amax() < 1e-15));
    }

    #[test]
    fn stable_dt_examples() {
        let grid = Grid::line(1.0, 10).unwrap();
        let cfg = config(two_species(1.0), None, grid.clone(), uniform_ic(&[0.5, 0.5]));
        let field = cfg.initial.build(&grid, 0).unwrap();
        let dt = stable_dt(&cfg, &field).unwrap();
        assert_abs_diff_eq!(dt, 2e-3, epsilon = 1e-15);

        let cfg2 = config(two_species(2.0), None, grid.clone(), uniform_ic(&[0.5, 0.5]));
        assert_abs_diff_eq!(stable_dt(&cfg2, &field).unwrap(), 4e-3, epsilon = 1e-15);

        let fine = Grid::line(1.0, 20).unwrap();
        let cfg3 = config(two_species(1.0), None, fine.clone(), uniform_ic(&[0.5, 0.5]));
        let field3 = cfg3.initial.build(&fine, 0).unwrap();
        assert_abs_diff_eq!(stable_dt(&cfg3, &field3).unwrap(), 5e-4, epsilon = 1e-15);
    }

    #[test]
    fn sinusoidal_perturbation_decays_monotonically() {
        let n = 64;
        let grid = Grid::line(1.0, n).unwrap();
        let cfg = config(two_species(1.0), None, grid.clone(), uniform_ic(&[0.5, 0.5]));
        let values = (0..n)
            .map(|i| {
                let x = grid.cell_center(i)[0];
                let a = 0.5 + 0.1 * (std::f64::consts::PI * x).cos();
                comp(&[a, 1.0 - a])
            })
            .collect();
        let mut field = Field::new(grid, values, 0.0).unwrap();
        let mean = field.mean();
        let mut prev = field.deviation_from(&mean);
        for _ in 0..50 {
            let dt = stable_dt(&cfg, &field).unwrap();
            field = step_rk4(&cfg, &field, dt).unwrap();
            let dev = field.deviation_from(&mean);
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = Grid::line(1.0, 32).unwrap();
        let ic = InitialCondition::new(Profile::Step {
            left: comp(&[0.0, 1.0]),
            right: comp(&[1.0, 0.0]),
            position: 0.5,
            width: 0.0,
        });
        let cfg = config(two_species(1.0), None, grid.clone(), ic);
        let field = cfg.initial.build(&grid, 0).unwrap();
        let dt = stable_dt(&cfg, &field).unwrap();
        assert!(matches!(step_rk4(&cfg, &field, 10.0 * dt), Err(Error::StepRejected { .. })));
    }

    #[test]
    fn config_validation() {
        let grid = Grid::line(1.0, 4).unwrap();
        let mut cfg = config(two_species(1.0), None, grid, uniform_ic(&[0.5, 0.5]));
        cfg.cfl_safety = 0.95;
        assert!(matches!(cfg.validate(), Err(Error::NonIntegrableConfig(_))));
        cfg.cfl_safety = 0.4;
        cfg.t_end = 0.0;
        assert!(cfg.validate().is_err());
        cfg.t_end = 1.0;
        cfg.network = Some(ReactionNetwork::new(2, vec![Reaction::new(vec![1, 0], vec![0, 1], 2.0, 1.0)]).unwrap());
        cfg.spec = MixtureSpec::from_upper_triangle(vec![1.0, 2.0], &[1.0], 1.0).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::MassNotConserved { .. })));
    }

    #[test]
    fn simulate_records_outputs_and_snapshots() {
        let grid = Grid::line(1.0, 16).unwrap();
        let ic = InitialCondition::new(Profile::GaussianBump {
            background: comp(&[0.5, 0.5]),
            peak: comp(&[0.8, 0.2]),
            center: vec![0.3],
            width: 0.1,
        });
        let mut cfg = config(two_species(1.0), None, grid, ic);
        cfg.snapshot_times = vec![0.0, 0.005, 0.5];
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.diagnostics.len(), 11);
        assert_abs_diff_eq!(out.diagnostics.last().unwrap().time, 0.01, epsilon = 0.0);
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[1].time, 0.005);
        assert_eq!(out.final_field.time, 0.01);
        for w in out.diagnostics.windows(2) {
            assert!(w[1].free_energy <= w[0].free_energy + 1e-9);
        }
        assert!(out.max_sum_deviation <= 1e-12);
        assert!(out.conserved_drift.iter().all(|d| *d <= 1e-12));
    }
}
