use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mixture::Composition;

/// Tensor-product box grid in one or two dimensions. Cells are numbered
/// with the first axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<f64>,
    cells: Vec<usize>,
}

impl Grid {
    pub fn new(extents: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 || extents.len() != cells.len() {
            return Err(Error::NonIntegrableConfig(format!(
                "grid needs 1 or 2 axes with matching extents and cell counts, got {} and {}",
                extents.len(),
                cells.len()
            )));
        }
        if let Some(l) = extents.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::NonIntegrableConfig(format!("grid extent {l} must be positive")));
        }
        if let Some(n) = cells.iter().find(|n| **n < 2) {
            return Err(Error::NonIntegrableConfig(format!("need at least 2 cells per axis, got {n}")));
        }
        Ok(Self { extents, cells })
    }

    pub fn line(length: f64, cells: usize) -> Result<Self> {
        Self::new(vec![length], vec![cells])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing(axis)
    }

    pub fn domain_volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Multi-index of a linear cell index.
    pub fn index(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        self.cells
            .iter()
            .map(|&n| {
                let i = rest % n;
                rest /= n;
                i
            })
            .collect()
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.index(cell)
            .into_iter()
            .enumerate()
            .map(|(a, i)| (i as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Interior faces as `(left cell, right cell, axis)`, in a fixed order.
    pub fn interior_faces(&self) -> Vec<(usize, usize, usize)> {
        let mut faces = Vec::new();
        let stride1 = self.cells[0];
        for axis in 0..self.dim() {
            let stride = if axis == 0 { 1 } else { stride1 };
            for cell in 0..self.n_cells() {
                let idx = self.index(cell);
                if idx[axis] + 1 < self.cells[axis] {
                    faces.push((cell, cell + stride, axis));
                }
            }
        }
        faces
    }
}

/// The PDE state: one composition per cell at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<Composition>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Composition>, time: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch { expected: grid.n_cells(), found: values.len() });
        }
        let n = values.first().map(|v| v.len()).unwrap_or(0);
        if let Some(v) = values.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        Ok(Self { grid, values, time })
    }

    pub fn uniform(grid: Grid, y: &Composition) -> Self {
        let values = vec![y.clone(); grid.n_cells()];
        Self { grid, values, time: 0.0 }
    }

    pub fn n_species(&self) -> usize {
        self.values[0].len()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.values.iter().map(|c| c.as_vector())
    }

    /// Cells as `(volume, y)` pairs.
    pub fn weighted(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        let vol = self.grid.cell_volume();
        self.vectors().map(move |y| (vol, y))
    }

    /// Volume-weighted mean composition.
    pub fn mean(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.n_species());
        for y in self.vectors() {
            acc += y;
        }
        acc / self.values.len() as f64
    }

    pub fn min_component(&self) -> f64 {
        self.vectors().map(|y| y.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_component(&self) -> f64 {
        self.vectors().map(|y| y.max()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_cells |sum_k y_k - 1|`.
    pub fn sum_deviation(&self) -> f64 {
        self.vectors().map(|y| (y.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_cells |y - reference|_inf`.
    pub fn deviation_from(&self, reference: &DVector<f64>) -> f64 {
        self.vectors().map(|y| (y - reference).amax()).fold(0.0, f64::max)
    }

    pub fn all_interior(&self) -> bool {
        self.values.iter().all(|c| c.is_interior())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Uniform { value: Composition },
    /// `left` below `position` on the first axis, `right` above; a positive
    /// `width` smooths the jump with a tanh ramp.
    Step { left: Composition, right: Composition, position: f64, width: f64 },
    GaussianBump { background: Composition, peak: Composition, center: Vec<f64>, width: f64 },
    TwoBlob { background: Composition, blobs: [Composition; 2], centers: [Vec<f64>; 2], width: f64 },
}

/// Sets one species to zero on `lower <= x_0 <= upper` before renormalizing.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroMask {
    /// 0-based species index.
    pub species: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub profile: Profile,
    pub zero_masks: Vec<ZeroMask>,
    /// Amplitude of a seeded uniform perturbation added per cell.
    pub noise: f64,
}

impl InitialCondition {
    pub fn new(profile: Profile) -> Self {
        Self { profile, zero_masks: Vec::new(), noise: 0.0 }
    }

    pub fn n_species(&self) -> usize {
        match &self.profile {
            Profile::Uniform { value } => value.len(),
            Profile::Step { left, .. } => left.len(),
            Profile::GaussianBump { background, .. } | Profile::TwoBlob { background, .. } => background.len(),
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        let n = self.n_species();
        let same = |c: &Composition| {
            if c.len() == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: n, found: c.len() })
            }
        };
        let point = |p: &Vec<f64>| {
            if p.len() == grid.dim() {
                Ok(())
            } else {
                Err(Error::NonIntegrableConfig(format!("profile center needs {} coordinates", grid.dim())))
            }
        };
        match &self.profile {
            Profile::Uniform { .. } => {}
            Profile::Step { right, width, .. } => {
                same(right)?;
                if *width < 0.0 {
                    return Err(Error::NonIntegrableConfig("step width must be nonnegative".into()));
                }
            }
            Profile::GaussianBump { peak, center, width, .. } => {
                same(peak)?;
                point(center)?;
                if !(*width > 0.0) {
                    return Err(Error::NonIntegrableConfig("bump width must be positive".into()));
                }
            }
            Profile::TwoBlob { blobs, centers, width, .. } => {
                same(&blobs[0])?;
                same(&blobs[1])?;
                point(&centers[0])?;
                point(&centers[1])?;
                if !(*width > 0.0) {
                    return Err(Error::NonIntegrableConfig("blob width must be positive".into()));
                }
            }
        }
        if let Some(m) = self.zero_masks.iter().find(|m| m.species >= n) {
            return Err(Error::NonIntegrableConfig(format!("zero mask species {} out of range", m.species + 1)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::NonIntegrableConfig("noise amplitude must be nonnegative".into()));
        }
        Ok(())
    }

    fn profile_at(&self, x: &[f64]) -> DVector<f64> {
        let gauss = |c: &[f64], w: f64| {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * w * w)).exp()
        };
        match &self.profile {
            Profile::Uniform { value } => value.as_vector().clone(),
            Profile::Step { left, right, position, width } => {
                let w = if *width > 0.0 {
                    0.5 * (1.0 + ((x[0] - position) / width).tanh())
                } else if x[0] < *position {
                    0.0
                } else {
                    1.0
                };
                left.as_vector() * (1.0 - w) + right.as_vector() * w
            }
            Profile::GaussianBump { background, peak, center, width } => {
                let w = gauss(center, *width);
                background.as_vector() * (1.0 - w) + peak.as_vector() * w
            }
            Profile::TwoBlob { background, blobs, centers, width } => {
                let mut wa = gauss(&centers[0], *width);
                let mut wb = gauss(&centers[1], *width);
                let total = wa + wb;
                if total > 1.0 {
                    wa /= total;
                    wb /= total;
                }
                background.as_vector() * (1.0 - wa - wb) + blobs[0].as_vector() * wa + blobs[1].as_vector() * wb
            }
        }
    }

    /// Samples the profile at cell centers, then applies zero masks and noise.
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<Field> {
        self.check(grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_species();
        let mut values = Vec::with_capacity(grid.n_cells());
        for cell in 0..grid.n_cells() {
            let x = grid.cell_center(cell);
            let mut y = self.profile_at(&x);
            if self.noise > 0.0 {
                let mut xi = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0) * self.noise);
                let mean = xi.mean();
                xi.add_scalar_mut(-mean);
                y += xi;
                y.apply(|v| *v = v.max(0.0));
            }
            for m in &self.zero_masks {
                if x[0] >= m.lower && x[0] <= m.upper {
                    y[m.species] = 0.0;
                }
            }
            let y = Composition::normalized(y).map_err(|e| {
                Error::NonIntegrableConfig(format!("initial composition in cell {cell} is degenerate: {e}"))
            })?;
            values.push(y);
        }
        Field::new(grid.clone(), values, 0.0)
    }
}
