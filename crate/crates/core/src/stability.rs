//! Linearization at a chemical equilibrium on box domains. On a Neumann
//! Laplacian eigenmode with eigenvalue `-lambda` the linearized operator
//! reduces to the `N x N` mode matrix `lambda A0(y*) - M r'(y*)` acting on `E`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::ReactionNetwork;
use crate::linalg;
use crate::mixture::{self, Composition, EMatrix, MixtureSpec};
use crate::solver::Field;

pub const MIN_K_MAX: usize = 8;
/// Largest equilibrium residual accepted by the linearization.
pub const JACOBIAN_EQ_TOL: f64 = 1e-8;
/// Singular values below `SEMISIMPLE_TOL ||A||` count as zero.
pub const SEMISIMPLE_TOL: f64 = 1e-9;
/// Singular values within this factor of the threshold are undecidable.
const UNDECIDED_BAND: f64 = 10.0;
/// Deviations below this are treated as round-off in decay fits.
pub const DECAY_FLOOR: f64 = 1e-13;
/// Fits only use samples at least this factor above the smallest deviation,
/// which keeps the bias from using the final state as the limit small.
const DECAY_WINDOW: f64 = 1e3;
pub const MIN_DECADES: f64 = 2.0;

fn check_equilibrium(net: &ReactionNetwork, spec: &MixtureSpec, y_star: &Composition) -> Result<DVector<f64>> {
    let n = spec.n_species();
    if y_star.len() != n || net.n_species() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y_star.len().max(net.n_species()) });
    }
    if let Some((index, &value)) = y_star.as_vector().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonInteriorComposition { index, value });
    }
    let c = spec.concentrations(y_star.as_vector());
    let residual = net.equilibrium_residual(&c);
    if residual > JACOBIAN_EQ_TOL {
        return Err(Error::NotAnEquilibrium { residual });
    }
    Ok(c)
}

/// `M r'(y*) = -M nu K nu^T Y*^{-1}` with `K = diag(k_l^- c*^{nu_l^-})`.
pub fn reaction_jacobian(net: &ReactionNetwork, spec: &MixtureSpec, y_star: &Composition) -> Result<DMatrix<f64>> {
    let c = check_equilibrium(net, spec, y_star)?;
    let n = spec.n_species();
    let m = spec.molar_masses();
    let mut jac = DMatrix::zeros(n, n);
    for (l, rx) in net.reactions().iter().enumerate() {
        let kl = rx.k_minus * rx.nu_minus.iter().zip(c.iter()).map(|(&p, &ci)| ci.powi(p as i32)).product::<f64>();
        let nu = net.nu().column(l);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] -= m[i] * nu[i] * kl * nu[j] / y_star[j];
            }
        }
    }
    Ok(jac)
}

/// `lambda A0(y*) + M nu K nu^T Y*^{-1}` restricted to `E`.
pub fn mode_matrix(spec: &MixtureSpec, net: &ReactionNetwork, y_star: &Composition, lambda: f64) -> Result<EMatrix> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::OutOfDomain(format!("Laplace eigenvalue {lambda} must be non-negative")));
    }
    let reaction = -reaction_jacobian(net, spec, y_star)?;
    if lambda == 0.0 {
        return Ok(EMatrix::from_full(reaction));
    }
    let a0 = mixture::flux_matrix_a0(spec, y_star)?;
    Ok(EMatrix::from_full(a0.full() * lambda + reaction))
}

fn null_count(m: &DMatrix<f64>, norm: f64) -> Result<usize> {
    if norm == 0.0 {
        return Ok(m.ncols());
    }
    let tol = SEMISIMPLE_TOL * norm;
    let sv = linalg::singular_values(m);
    if let Some(&s) = sv.iter().find(|&&s| s > tol / UNDECIDED_BAND && s < tol * UNDECIDED_BAND) {
        return Err(Error::SemisimplicityUndecided { singular_value: s, tolerance: tol });
    }
    Ok(sv.iter().filter(|&&s| s <= tol).count())
}

/// Dimension of the intersection of `ker A` and `range A`, which is
/// `nullity(A^2) - nullity(A)`.
/// Equals `d` minus the rank of `W^T V` for orthonormal right and left kernel
/// bases `V`, `W`. Counting singular values of `A^2` directly squares the
/// condition number and misjudges stiff networks.
fn kernel_range_overlap(a: &DMatrix<f64>, norm: f64, d: usize) -> Result<usize> {
    if d == 0 || norm == 0.0 {
        return Ok(0);
    }
    let right = linalg::nullspace(a, SEMISIMPLE_TOL);
    let left = linalg::nullspace(&a.transpose(), SEMISIMPLE_TOL);
    if right.ncols() != d || left.ncols() != d {
        return Err(Error::SemisimplicityUndecided { singular_value: 0.0, tolerance: SEMISIMPLE_TOL * norm });
    }
    // Cosines of the angles between the kernels; they are bounded by 1.
    null_count(&(left.transpose() * right), 1.0)
}

/// Orthonormal basis (in `R^N`) of the kernel of the mode-0 matrix on `E`.
pub fn mode0_kernel(spec: &MixtureSpec, net: &ReactionNetwork, y_star: &Composition) -> Result<DMatrix<f64>> {
    let t0 = mode_matrix(spec, net, y_star, 0.0)?;
    let rep = t0.basis_rep();
    let norm = linalg::singular_values(rep).first().copied().unwrap_or(0.0);
    let null = if norm == 0.0 {
        DMatrix::identity(rep.ncols(), rep.ncols())
    } else {
        linalg::nullspace(rep, SEMISIMPLE_TOL)
    };
    Ok(mixture::e_basis(spec.n_species()) * null)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpectrum {
    /// Wave numbers per axis.
    pub index: Vec<usize>,
    pub lambda: f64,
    /// `N - 1` eigenvalues on `E` as `[re, im]`, ascending by real part.
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub modes: Vec<ModeSpectrum>,
    pub kernel_dim_mode0: usize,
    pub semisimple: bool,
    pub spectral_gap: f64,
    pub modes_used: usize,
}

/// Neumann Laplacian eigenvalues `sum_a (k_a pi / L_a)^2` for `0 <= k_a <= k_max`,
/// in lexicographic order of the multi-index.
pub fn neumann_modes(lengths: &[f64], k_max: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 0.0)];
    for &len in lengths {
        out = out
            .into_iter()
            .flat_map(|(idx, lam)| {
                (0..=k_max).map(move |k| {
                    let mut idx = idx.clone();
                    idx.push(k);
                    let w = k as f64 * std::f64::consts::PI / len;
                    (idx, lam + w * w)
                })
            })
            .collect();
    }
    out
}

pub fn spectrum_report(
    spec: &MixtureSpec,
    net: &ReactionNetwork,
    y_star: &Composition,
    domain_lengths: &[f64],
    k_max: usize,
) -> Result<SpectrumReport> {
    if k_max < MIN_K_MAX {
        return Err(Error::OutOfDomain(format!("k_max = {k_max} must be at least {MIN_K_MAX}")));
    }
    if domain_lengths.is_empty() || domain_lengths.len() > 2 || domain_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::OutOfDomain(format!("invalid box lengths {domain_lengths:?}")));
    }

    let t0 = mode_matrix(spec, net, y_star, 0.0)?;
    let rep = t0.basis_rep();
    let norm = linalg::singular_values(rep).first().copied().unwrap_or(0.0);
    let kernel_dim = null_count(rep, norm)?;
    let kernel_dim_sq = kernel_dim + kernel_range_overlap(rep, norm, kernel_dim)?;
    let semisimple = kernel_dim == kernel_dim_sq;

    let a0 = mixture::flux_matrix_a0(spec, y_star)?;
    let reaction = t0.full().clone();
    let modes: Vec<ModeSpectrum> = neumann_modes(domain_lengths, k_max)
        .into_par_iter()
        .map(|(index, lambda)| {
            let t = EMatrix::from_full(a0.full() * lambda + &reaction);
            let ev = mixture::spectrum_on_e(&t)?;
            Ok(ModeSpectrum { index, lambda, eigenvalues: ev.iter().map(|z| [z.re, z.im]).collect() })
        })
        .collect::<Result<_>>()?;

    let mut mode0: Vec<[f64; 2]> = modes[0].eigenvalues.clone();
    mode0.sort_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])));
    let spectral_gap = mode0[kernel_dim..]
        .iter()
        .chain(modes[1..].iter().flat_map(|m| m.eigenvalues.iter()))
        .map(|z| z[0])
        .fold(f64::INFINITY, f64::min);

    Ok(SpectrumReport { modes, kernel_dim_mode0: kernel_dim, semisimple, spectral_gap, modes_used: k_max })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    /// `log10` of the deviation range covered by the fitted window.
    pub decades: f64,
    pub samples: usize,
}

/// Least-squares fit of `log dev(t) = a - rate t`. The window keeps samples
/// above both [`DECAY_FLOOR`] and a fixed factor over the smallest positive
/// deviation.
pub fn decay_rate_estimate(times: &[f64], deviations: &[f64]) -> Result<DecayFit> {
    if times.len() != deviations.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: deviations.len() });
    }
    let smallest = deviations.iter().copied().filter(|&d| d > 0.0 && d.is_finite()).fold(f64::INFINITY, f64::min);
    let cutoff = (smallest * DECAY_WINDOW).max(DECAY_FLOOR);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(deviations)
        .filter(|(_, &d)| d.is_finite() && d >= cutoff)
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    let decades = if pts.len() < 3 {
        0.0
    } else {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        (hi - lo) / std::f64::consts::LN_10
    };
    if decades < MIN_DECADES {
        return Err(Error::InsufficientDecay { decades });
    }

    let n = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for &(t, l) in &pts {
        stt += (t - mt) * (t - mt);
        stl += (t - mt) * (l - ml);
        sll += (l - ml) * (l - ml);
    }
    let slope = stl / stt;
    let r_squared = if sll > 0.0 { stl * stl / (stt * sll) } else { 1.0 };
    Ok(DecayFit { rate: -slope, r_squared, decades, samples: pts.len() })
}

/// `max_cells ||y(t) - y_limit||_inf` for each field.
pub fn field_deviations(fields: &[Field], limit: &Field) -> Vec<f64> {
    fields
        .iter()
        .map(|f| {
            f.vectors()
                .zip(limit.vectors())
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Decay rate of a trajectory towards its final state.
pub fn decay_rate_from_fields(fields: &[Field]) -> Result<DecayFit> {
    let Some((limit, rest)) = fields.split_last() else {
        return Err(Error::InsufficientDecay { decades: 0.0 });
    };
    let times: Vec<f64> = rest.iter().map(|f| f.time).collect();
    decay_rate_estimate(&times, &field_deviations(rest, limit))
}
