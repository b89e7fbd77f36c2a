//! TOML scenario files. The layout is published in `schema/scenario.schema.json`;
//! unknown keys and out-of-range physical parameters are rejected before any
//! computation starts.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use crate::equilibria::{find_equilibrium, EquilibriumResult};
use crate::error::{Error, Result};
use crate::kinetics::{Reaction, ReactionNetwork};
use crate::mixture::{Composition, MixtureSpec};
use crate::solver::{Grid, InitialCondition, Profile, SimConfig, ZeroMask, MAX_CFL_SAFETY};

/// Accepted deviation of a written composition from unit sum.
const FILE_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub mixture: MixtureSection,
    #[serde(default)]
    pub reactions: Vec<ReactionSection>,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub run: RunSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub n_species: usize,
    pub molar_masses: Vec<f64>,
    /// Upper triangle `f_12, f_13, .., f_1N, f_23, ..` row by row.
    pub friction: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    pub nu_plus: Vec<u32>,
    pub nu_minus: Vec<u32>,
    pub k_plus: f64,
    pub k_minus: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub profile: ProfileSection,
    #[serde(default)]
    pub zero_masks: Vec<ZeroMaskSection>,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSection {
    Uniform {
        value: Vec<f64>,
    },
    Step {
        left: Vec<f64>,
        right: Vec<f64>,
        position: f64,
        #[serde(default)]
        width: f64,
    },
    GaussianBump {
        background: Vec<f64>,
        peak: Vec<f64>,
        center: Vec<f64>,
        width: f64,
    },
    TwoBlob {
        background: Vec<f64>,
        blobs: [Vec<f64>; 2],
        centers: [Vec<f64>; 2],
        width: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroMaskSection {
    /// 1-based species number.
    pub species: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub cfl_safety: f64,
    pub output_interval: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: MixtureSpec,
    pub network: ReactionNetwork,
    pub config: SimConfig,
    pub output_dir: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive and finite")))
    }
}

fn composition(name: &str, v: &[f64], n: usize) -> Result<Composition> {
    if v.len() != n {
        return Err(invalid(format!("{name} has {} entries, expected {n}", v.len())));
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(invalid(format!("{name} has entry {x} outside [0, inf)")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > FILE_SUM_TOL {
        return Err(invalid(format!("{name} sums to {sum}, expected 1")));
    }
    Composition::normalized(DVector::from_column_slice(v))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<Scenario> {
        let mx = &self.mixture;
        let n = mx.n_species;
        if n < 2 {
            return Err(invalid(format!("mixture.n_species = {n} must be at least 2")));
        }
        if mx.molar_masses.len() != n {
            return Err(invalid(format!("mixture.molar_masses has {} entries, expected {n}", mx.molar_masses.len())));
        }
        if mx.friction.len() != n * (n - 1) / 2 {
            return Err(invalid(format!("mixture.friction has {} entries, expected {}", mx.friction.len(), n * (n - 1) / 2)));
        }
        for (k, &m) in mx.molar_masses.iter().enumerate() {
            positive(&format!("mixture.molar_masses[{}]", k + 1), m)?;
        }
        for (k, &f) in mx.friction.iter().enumerate() {
            positive(&format!("mixture.friction[{}]", k + 1), f)?;
        }
        positive("mixture.rho", mx.rho)?;
        let spec = MixtureSpec::from_upper_triangle(mx.molar_masses.clone(), &mx.friction, mx.rho)?;

        let mut reactions = Vec::with_capacity(self.reactions.len());
        for (l, r) in self.reactions.iter().enumerate() {
            positive(&format!("reactions[{}].k_plus", l + 1), r.k_plus)?;
            positive(&format!("reactions[{}].k_minus", l + 1), r.k_minus)?;
            reactions.push(Reaction::new(r.nu_plus.clone(), r.nu_minus.clone(), r.k_plus, r.k_minus));
        }
        let network = ReactionNetwork::new(n, reactions)?;

        let g = &self.grid;
        if !(g.dim == 1 || g.dim == 2) || g.lengths.len() != g.dim || g.cells.len() != g.dim {
            return Err(invalid(format!("grid needs dim in {{1, 2}} with matching lengths and cells, got dim = {}", g.dim)));
        }
        for &l in &g.lengths {
            positive("grid.lengths", l)?;
        }
        if let Some(c) = g.cells.iter().find(|&&c| c < 2) {
            return Err(invalid(format!("grid.cells entry {c} must be at least 2")));
        }
        let grid = Grid::new(g.lengths.clone(), g.cells.clone())?;

        let profile = match &self.initial.profile {
            ProfileSection::Uniform { value } => Profile::Uniform { value: composition("initial.profile.value", value, n)? },
            ProfileSection::Step { left, right, position, width } => Profile::Step {
                left: composition("initial.profile.left", left, n)?,
                right: composition("initial.profile.right", right, n)?,
                position: *position,
                width: *width,
            },
            ProfileSection::GaussianBump { background, peak, center, width } => Profile::GaussianBump {
                background: composition("initial.profile.background", background, n)?,
                peak: composition("initial.profile.peak", peak, n)?,
                center: center.clone(),
                width: *width,
            },
            ProfileSection::TwoBlob { background, blobs, centers, width } => Profile::TwoBlob {
                background: composition("initial.profile.background", background, n)?,
                blobs: [
                    composition("initial.profile.blobs[1]", &blobs[0], n)?,
                    composition("initial.profile.blobs[2]", &blobs[1], n)?,
                ],
                centers: centers.clone(),
                width: *width,
            },
        };
        let mut zero_masks = Vec::with_capacity(self.initial.zero_masks.len());
        for m in &self.initial.zero_masks {
            if m.species == 0 || m.species > n {
                return Err(invalid(format!("initial.zero_masks species {} outside 1..={n}", m.species)));
            }
            if !(m.lower <= m.upper) {
                return Err(invalid(format!("initial.zero_masks interval [{}, {}] is empty", m.lower, m.upper)));
            }
            zero_masks.push(ZeroMask { species: m.species - 1, lower: m.lower, upper: m.upper });
        }
        if !(self.initial.noise >= 0.0 && self.initial.noise.is_finite()) {
            return Err(invalid(format!("initial.noise = {} must be nonnegative", self.initial.noise)));
        }
        let initial = InitialCondition { profile, zero_masks, noise: self.initial.noise };

        let run = &self.run;
        positive("run.t_end", run.t_end)?;
        positive("run.output_interval", run.output_interval)?;
        if !(run.cfl_safety > 0.0 && run.cfl_safety <= MAX_CFL_SAFETY) {
            return Err(invalid(format!("run.cfl_safety = {} must lie in (0, {MAX_CFL_SAFETY}]", run.cfl_safety)));
        }
        if let Some(t) = self.outputs.snapshot_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(invalid(format!("outputs.snapshot_times entry {t} must be nonnegative")));
        }

        let config = SimConfig {
            spec: spec.clone(),
            network: (network.n_reactions() > 0).then(|| network.clone()),
            reference: None,
            grid,
            initial,
            t_end: run.t_end,
            cfl_safety: run.cfl_safety,
            output_interval: run.output_interval,
            snapshot_times: self.outputs.snapshot_times.clone(),
            seed: run.seed,
        };
        // Builds the initial field once so profile errors surface here.
        config.initial.build(&config.grid, config.seed)?;
        Ok(Scenario { spec, network, config, output_dir: self.outputs.directory.clone() })
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        ScenarioFile::parse(text)?.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Equilibrium reached from the volume mean of the initial field, or from
    /// the default start when that mean touches the boundary.
    pub fn equilibrium(&self) -> Result<EquilibriumResult> {
        let field = self.config.initial.build(&self.config.grid, self.config.seed)?;
        let mean = field.mean();
        let init = if mean.iter().all(|&v| v > 0.0) { Some(Composition::normalized(mean)?) } else { None };
        find_equilibrium(&self.network, &self.spec, init.as_ref())
    }
}
