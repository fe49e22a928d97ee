//! Uniform voxel grid, named fields and boundary conditions.
//!
//! The grid is cell-centered: a grid of `n` cells with spacing `h` covers the
//! physical extent `n * h`, and the first cell center sits at `origin + h/2`.
//! Data is stored x-fastest (`idx = i + nx*(j + ny*k)`), matching the layout
//! of raw voxel volumes and VTK structured points.

use crate::error::{Error, Result};
use indexmap::IndexMap;

/// Geometry of a uniform cell-centered voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    /// Grid with the given cell counts and spacings, origin at zero.
    ///
    /// An axis may have a single cell, in which case it is not simulated
    /// (no derivatives are taken along it); simulated axes need at least
    /// two cells.
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::with_origin(dims, spacing, [0.0; 3])
    }

    pub fn with_origin(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        for ax in 0..3 {
            if dims[ax] == 0 {
                return Err(Error::InvalidGrid(format!(
                    "dims must be ≥ 2 on simulated axes (1 for a flat axis); axis {ax} has 0"
                )));
            }
            if !(spacing[ax] > 0.0) || !spacing[ax].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "spacing must be strictly positive; axis {ax} has {}",
                    spacing[ax]
                )));
            }
            if !origin[ax].is_finite() {
                return Err(Error::InvalidGrid(format!("origin must be finite on axis {ax}")));
            }
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical extent per axis, `n * h`.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// True if derivatives are taken along `axis` (more than one cell).
    pub fn simulated(&self, axis: usize) -> bool {
        self.dims[axis] > 1
    }

    /// Flat index of cell (i, j, k), x-fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Physical coordinates of the center of cell (i, j, k).
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.spacing[0],
            self.origin[1] + (j as f64 + 0.5) * self.spacing[1],
            self.origin[2] + (k as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Cell volume `hx*hy*hz`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
}

/// Boundary condition on one side of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcSide {
    /// Wrap-around.
    Periodic,
    /// Fixed value at the face (imposed at the cell boundary, 2nd order).
    Dirichlet(f64),
    /// No flux through the face.
    ZeroFlux,
    /// Prescribed flux into the domain through the face, per area and time.
    Flux(f64),
}

/// Boundary conditions for one axis (low side, high side).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBc {
    pub lo: BcSide,
    pub hi: BcSide,
}

impl AxisBc {
    pub fn periodic() -> Self {
        AxisBc { lo: BcSide::Periodic, hi: BcSide::Periodic }
    }
    pub fn zero_flux() -> Self {
        AxisBc { lo: BcSide::ZeroFlux, hi: BcSide::ZeroFlux }
    }
    pub fn dirichlet(lo: f64, hi: f64) -> Self {
        AxisBc { lo: BcSide::Dirichlet(lo), hi: BcSide::Dirichlet(hi) }
    }
}

/// Per-axis transform family admitted by the spectral steppers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralAxisKind {
    Periodic,
    DirichletPair,
    ZeroFluxPair,
}

/// Boundary conditions for all three axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub axes: [AxisBc; 3],
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        BoundarySpec { axes: [AxisBc::periodic(); 3] }
    }

    pub fn zero_flux() -> Self {
        BoundarySpec { axes: [AxisBc::zero_flux(); 3] }
    }

    pub fn dirichlet(value: f64) -> Self {
        BoundarySpec { axes: [AxisBc::dirichlet(value, value); 3] }
    }

    pub fn new(axes: [AxisBc; 3]) -> Result<Self> {
        let bc = BoundarySpec { axes };
        bc.validate()?;
        Ok(bc)
    }

    /// Periodic must be specified on both sides of an axis or neither.
    pub fn validate(&self) -> Result<()> {
        for (ax, axis) in self.axes.iter().enumerate() {
            let lo_p = matches!(axis.lo, BcSide::Periodic);
            let hi_p = matches!(axis.hi, BcSide::Periodic);
            if lo_p != hi_p {
                return Err(Error::InvalidBc(format!(
                    "axis {ax}: periodic must be specified on both sides or neither"
                )));
            }
        }
        Ok(())
    }

    /// Transform family for `axis`, or an error when the side combination is
    /// not spectral-steppable (mixed kinds are fine for explicit Euler).
    pub fn spectral_axis_kind(&self, axis: usize) -> Result<SpectralAxisKind> {
        let a = &self.axes[axis];
        match (a.lo, a.hi) {
            (BcSide::Periodic, BcSide::Periodic) => Ok(SpectralAxisKind::Periodic),
            (BcSide::Dirichlet(_), BcSide::Dirichlet(_)) => Ok(SpectralAxisKind::DirichletPair),
            (BcSide::ZeroFlux, BcSide::ZeroFlux) => Ok(SpectralAxisKind::ZeroFluxPair),
            _ => Err(Error::InvalidBc(format!(
                "axis {axis}: spectral stepping needs periodic, Dirichlet/Dirichlet or \
                 zero-flux/zero-flux sides; use explicit Euler for mixed combinations"
            ))),
        }
    }

    /// Checks all simulated axes for spectral compatibility.
    pub fn spectral_compatible(&self, grid: &GridSpec) -> Result<()> {
        for ax in 0..3 {
            if grid.simulated(ax) {
                self.spectral_axis_kind(ax)?;
            }
        }
        Ok(())
    }
}

/// A named collection of scalar fields sharing one grid.
///
/// Values are stored as contiguous `f64` arrays in x-fastest order. Fields
/// keep their insertion order, which also fixes the order of file output.
#[derive(Debug, Clone)]
pub struct VoxelFields {
    grid: GridSpec,
    fields: IndexMap<String, Vec<f64>>,
}

impl VoxelFields {
    /// Empty container for the given grid.
    pub fn create(grid: GridSpec) -> Self {
        VoxelFields { grid, fields: IndexMap::new() }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fields.contains_key(name)
    }

    fn check_new_name(&self, name: &str) -> Result<()> {
        if name.is_empty() {
            return Err(Error::InvalidParam("field names must be nonempty".into()));
        }
        if self.fields.contains_key(name) {
            return Err(Error::FieldExists(name.into()));
        }
        Ok(())
    }

    /// Adds a field filled with a constant.
    pub fn add_uniform(&mut self, name: &str, value: f64) -> Result<()> {
        self.check_new_name(name)?;
        if !value.is_finite() {
            return Err(Error::InvalidParam(format!("field \"{name}\": value must be finite")));
        }
        self.fields.insert(name.into(), vec![value; self.grid.len()]);
        Ok(())
    }

    /// Adds a field from an existing array (must match the grid size; all
    /// values must be finite).
    pub fn add_from(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.check_new_name(name)?;
        if values.len() != self.grid.len() {
            return Err(Error::SizeMismatch { expected: self.grid.len(), got: values.len() });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "field \"{name}\": values must be finite"
            )));
        }
        self.fields.insert(name.into(), values);
        Ok(())
    }

    /// Adds a field initialized from a generator evaluated at cell centers.
    pub fn add_with<F: FnMut(f64, f64, f64) -> f64>(&mut self, name: &str, mut f: F) -> Result<()> {
        self.check_new_name(name)?;
        let [nx, ny, nz] = self.grid.dims;
        let mut data = Vec::with_capacity(self.grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let [x, y, z] = self.grid.cell_center(i, j, k);
                    data.push(f(x, y, z));
                }
            }
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "field \"{name}\": generator produced non-finite values"
            )));
        }
        self.fields.insert(name.into(), data);
        Ok(())
    }

    pub fn field(&self, name: &str) -> Result<&[f64]> {
        self.fields
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NoSuchField(name.into()))
    }

    pub fn field_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.fields
            .get_mut(name)
            .map(Vec::as_mut_slice)
            .ok_or_else(|| Error::NoSuchField(name.into()))
    }

    /// Mutable access to several distinct fields at once.
    pub fn fields_mut<const N: usize>(&mut self, names: [&str; N]) -> Result<[&mut [f64]; N]> {
        for a in 0..N {
            if !self.fields.contains_key(names[a]) {
                return Err(Error::NoSuchField(names[a].into()));
            }
            for b in (a + 1)..N {
                if names[a] == names[b] {
                    return Err(Error::InvalidParam(format!("field \"{}\" requested twice", names[a])));
                }
            }
        }
        let mut out: [Option<&mut [f64]>; N] = std::array::from_fn(|_| None);
        for (key, value) in self.fields.iter_mut() {
            if let Some(pos) = names.iter().position(|n| n == key) {
                out[pos] = Some(value.as_mut_slice());
            }
        }
        Ok(out.map(|o| o.expect("checked above")))
    }

    pub fn remove(&mut self, name: &str) -> Result<Vec<f64>> {
        self.fields
            .shift_remove(name)
            .ok_or_else(|| Error::NoSuchField(name.into()))
    }

    /// Bytes held by the field arrays themselves.
    pub fn field_bytes(&self) -> usize {
        self.fields.values().map(|v| v.capacity() * std::mem::size_of::<f64>()).sum()
    }

    /// True if every value of every field is finite.
    pub fn all_finite(&self) -> bool {
        self.fields.values().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
