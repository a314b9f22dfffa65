//! Imaging geometry, scene grids and synthetic scenes.
//!
//! Voxel order is fixed: Z outer, Y middle, X inner, so voxel `(ix, iy, iz)`
//! lives at flat index `(iz * ny + iy) * nx + ix`. Array elements are ordered
//! elevation (Z) outer, azimuth (Y) inner. Both orders define the column and
//! row layout of the measurement operator and must not change.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free-space propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Regular voxel grid covering the imaging volume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl SceneGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let grid = SceneGrid {
            dims,
            spacing,
            origin,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid of `dims` voxels with spacing `spacing`, centered on the origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let origin = [0, 1, 2].map(|a| -0.5 * (dims[a].max(1) - 1) as f64 * spacing[a]);
        Self::new(dims, spacing, origin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "grid dims must be >= 1, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!(
                "grid spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("voxel count overflows"))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let [nx, ny, _] = self.dims;
        (iz * ny + iy) * nx + ix
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [0, 1, 2].map(|a| self.origin[a] + c[a] as f64 * self.spacing[a])
    }

    /// Inverse of [`SceneGrid::position`] for positions on the lattice.
    pub fn index_of(&self, pos: [f64; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = (pos[a] - self.origin[a]) / self.spacing[a];
            let r = f.round();
            if r < 0.0 || r >= self.dims[a] as f64 || (f - r).abs() > 1e-6 {
                return None;
            }
            c[a] = r as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }
}

/// Positions of all voxels in flat index order.
pub fn voxel_positions(grid: &SceneGrid) -> Vec<[f64; 3]> {
    (0..grid.len()).map(|n| grid.position(n)).collect()
}

/// Antenna phase centres of the (virtual) planar array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub elements: Vec<[f64; 3]>,
    /// Extent along Y in meters.
    pub aperture_az: f64,
    /// Extent along Z in meters.
    pub aperture_el: f64,
}

impl ArrayGeometry {
    pub fn new(elements: Vec<[f64; 3]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("array needs at least one element"));
        }
        if elements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("element positions must be finite"));
        }
        let extent = |a: usize| {
            let (lo, hi) = elements
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                    (lo.min(e[a]), hi.max(e[a]))
                });
            hi - lo
        };
        let (aperture_az, aperture_el) = (extent(1), extent(2));
        Ok(ArrayGeometry {
            elements,
            aperture_az,
            aperture_el,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Uniform `n_az x n_el` array in the Y-Z plane at `x = -standoff`, centred on
/// the Y/Z origin.
pub fn make_planar_array(
    n_az: usize,
    n_el: usize,
    size_az: f64,
    size_el: f64,
    standoff: f64,
) -> Result<ArrayGeometry> {
    if n_az == 0 || n_el == 0 {
        return Err(Error::invalid("element counts must be >= 1"));
    }
    if !(size_az > 0.0 && size_el > 0.0) || !size_az.is_finite() || !size_el.is_finite() {
        return Err(Error::invalid("aperture sizes must be positive"));
    }
    if !standoff.is_finite() {
        return Err(Error::invalid("standoff must be finite"));
    }
    let axis = |n: usize, size: f64| -> Vec<f64> {
        if n == 1 {
            vec![0.0]
        } else {
            let step = size / (n - 1) as f64;
            (0..n).map(|i| -0.5 * size + i as f64 * step).collect()
        }
    };
    let ys = axis(n_az, size_az);
    let zs = axis(n_el, size_el);
    let elements = zs
        .iter()
        .flat_map(|&z| ys.iter().map(move |&y| [-standoff, y, z]))
        .collect();
    ArrayGeometry::new(elements)
}

/// Stepped-frequency waveform after pulse compression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
    pub c: f64,
    /// LFM slope of the raw chirp. Carried for completeness, never used: the
    /// measurement model starts after range compression.
    pub chirp_rate: f64,
}

impl Waveform {
    pub fn new(carrier_hz: f64, bandwidth_hz: f64, n_freq: usize) -> Result<Self> {
        let wf = Waveform {
            carrier_hz,
            bandwidth_hz,
            n_freq,
            c: SPEED_OF_LIGHT,
            chirp_rate: 0.0,
        };
        wf.validate()?;
        Ok(wf)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        if !(self.bandwidth_hz >= 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::invalid("bandwidth must be >= 0"));
        }
        if self.n_freq == 0 {
            return Err(Error::invalid("need at least one frequency sample"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("propagation speed must be positive"));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        if self.n_freq == 1 {
            return vec![self.carrier_hz];
        }
        let lo = self.carrier_hz - 0.5 * self.bandwidth_hz;
        let step = self.bandwidth_hz / (self.n_freq - 1) as f64;
        (0..self.n_freq).map(|q| lo + q as f64 * step).collect()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        self.frequencies()
            .into_iter()
            .map(|f| 2.0 * std::f64::consts::PI * f / self.c)
            .collect()
    }
}

/// Complex scattering amplitudes on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Reflectivity {
    pub grid: SceneGrid,
    pub values: Vec<Complex64>,
}

impl Reflectivity {
    pub fn new(grid: SceneGrid, values: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "volume has {} values, grid has {} voxels",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("reflectivity"));
        }
        Ok(Reflectivity { grid, values })
    }

    pub fn zeros(grid: SceneGrid) -> Self {
        Reflectivity {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| v.norm_sqr() > 0.0).count()
    }
}

/// Synthetic scene families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// One unit scatterer at the grid centre.
    SinglePoint,
    /// Unit scatterers on a regular lattice with the given stride.
    PointGrid { stride: usize },
    /// Edge skeleton of an airframe-like target: fuselage, wings and tail.
    Wireframe,
}

impl ScenePreset {
    pub fn name(&self) -> &'static str {
        match self {
            ScenePreset::SinglePoint => "single_point",
            ScenePreset::PointGrid { .. } => "point_grid",
            ScenePreset::Wireframe => "wireframe",
        }
    }
}

impl fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_point" => Ok(ScenePreset::SinglePoint),
            "point_grid" => Ok(ScenePreset::PointGrid { stride: 4 }),
            "wireframe" => Ok(ScenePreset::Wireframe),
            other => Err(Error::invalid(format!("unknown scene preset `{other}`"))),
        }
    }
}

/// Builds a preset scene. The result depends only on `(preset, grid, seed)`.
pub fn scene_preset(preset: ScenePreset, grid: &SceneGrid, seed: u64) -> Result<Reflectivity> {
    grid.validate()?;
    let mut scene = Reflectivity::zeros(*grid);
    let [nx, ny, nz] = grid.dims;
    match preset {
        ScenePreset::SinglePoint => {
            let n = grid.index(nx / 2, ny / 2, nz / 2);
            scene.values[n] = Complex64::new(1.0, 0.0);
        }
        ScenePreset::PointGrid { stride } => {
            if stride == 0 {
                return Err(Error::invalid("point_grid stride must be >= 1"));
            }
            let off = stride / 2;
            for iz in (off.min(nz - 1)..nz).step_by(stride) {
                for iy in (off.min(ny - 1)..ny).step_by(stride) {
                    for ix in (off.min(nx - 1)..nx).step_by(stride) {
                        scene.values[grid.index(ix, iy, iz)] = Complex64::new(1.0, 0.0);
                    }
                }
            }
        }
        ScenePreset::Wireframe => wireframe(&mut scene, seed),
    }
    Ok(scene)
}

// Airframe skeleton seen from the array (range along X). The fuselage runs
// along Y, the wings along Z, the fin along X. Each member carries a smooth
// amplitude profile whose level and slope depend on the seed.
fn wireframe(scene: &mut Reflectivity, seed: u64) {
    let grid = scene.grid;
    let [nx, ny, nz] = grid.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frac = |n: usize, f: f64| ((n as f64 - 1.0) * f).round() as usize;
    let (cx, cz) = (nx / 2, nz / 2);

    let mut members: Vec<Vec<[usize; 3]>> = Vec::new();
    // Fuselage.
    members.push(
        (frac(ny, 0.1)..=frac(ny, 0.9))
            .map(|iy| [cx, iy, cz])
            .collect(),
    );
    // Wings, swept slightly back in range.
    let wing_y = frac(ny, 0.55);
    members.push(
        (frac(nz, 0.1)..=frac(nz, 0.9))
            .map(|iz| {
                let sweep = (iz as isize - cz as isize).unsigned_abs() / 3;
                [cx, wing_y.saturating_sub(sweep), iz]
            })
            .collect(),
    );
    // Tailplane.
    let tail_y = frac(ny, 0.15);
    members.push(
        (frac(nz, 0.3)..=frac(nz, 0.7))
            .map(|iz| [cx, tail_y, iz])
            .collect(),
    );
    // Fin, rising in range from the tail.
    members.push(
        (cx.saturating_sub(frac(nx, 0.3))..cx)
            .map(|ix| [ix, tail_y, cz])
            .collect(),
    );

    for member in members {
        let level = rng.random_range(0.55..1.0);
        let slope = rng.random_range(-0.35..0.35);
        let len = member.len().max(2) as f64 - 1.0;
        for (i, [ix, iy, iz]) in member.into_iter().enumerate() {
            let t = i as f64 / len - 0.5;
            let amp = (level * (1.0 + slope * t)).clamp(0.2, 1.0);
            let v = &mut scene.values[grid.index(ix, iy, iz)];
            if v.re < amp {
                *v = Complex64::new(amp, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn single_element_array() {
        let g = make_planar_array(1, 1, 0.3, 0.7, 1.0).unwrap();
        assert_eq!(g.elements, vec![[-1.0, 0.0, 0.0]]);
    }

    #[test]
    fn two_by_two_array() {
        let g = make_planar_array(2, 2, 0.4, 0.4, 1.0).unwrap();
        let expect = [
            [-1.0, -0.2, -0.2],
            [-1.0, 0.2, -0.2],
            [-1.0, -0.2, 0.2],
            [-1.0, 0.2, 0.2],
        ];
        assert_eq!(g.len(), 4);
        for (e, x) in g.elements.iter().zip(expect) {
            assert!(approx(*e, x), "{e:?} vs {x:?}");
        }
        assert!((g.aperture_az - 0.4).abs() < 1e-12);
    }

    #[test]
    fn three_element_line() {
        let g = make_planar_array(3, 1, 3.0, 0.5, 1.0).unwrap();
        let ys: Vec<f64> = g.elements.iter().map(|e| e[1]).collect();
        assert_eq!(ys, vec![-1.5, 0.0, 1.5]);
    }

    #[test]
    fn bad_array_arguments() {
        assert!(make_planar_array(0, 1, 1.0, 1.0, 1.0).is_err());
        assert!(make_planar_array(1, 1, 0.0, 1.0, 1.0).is_err());
        assert!(make_planar_array(1, 1, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn array_centroid() {
        let g = make_planar_array(5, 4, 0.8, 0.3, 2.5).unwrap();
        let n = g.len() as f64;
        let c = [0, 1, 2].map(|a| g.elements.iter().map(|e| e[a]).sum::<f64>() / n);
        assert!(approx(c, [-2.5, 0.0, 0.0]));
    }

    #[test]
    fn voxel_position_examples() {
        let g = SceneGrid::new([1, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(voxel_positions(&g), vec![[0.0, 0.0, 0.0]]);
        let g = SceneGrid::new([2, 1, 1], [0.5, 1.0, 1.0], [0.0; 3]).unwrap();
        assert_eq!(voxel_positions(&g), vec![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]);
        let g = SceneGrid::new([3, 4, 5], [0.1, 0.2, 0.3], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(voxel_positions(&g).len(), 60);
    }

    #[test]
    fn voxel_index_round_trip() {
        let g = SceneGrid::new([3, 4, 5], [0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]).unwrap();
        for (n, p) in voxel_positions(&g).into_iter().enumerate() {
            assert_eq!(g.index_of(p), Some(n));
            let [ix, iy, iz] = g.coords(n);
            assert_eq!(g.index(ix, iy, iz), n);
        }
    }

    #[test]
    fn invalid_grids() {
        assert!(SceneGrid::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(SceneGrid::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn waveform_frequencies() {
        let wf = Waveform::new(10e9, 2e9, 5).unwrap();
        assert_eq!(wf.frequencies(), vec![9e9, 9.5e9, 10e9, 10.5e9, 11e9]);
        let wf = Waveform::new(10e9, 2e9, 1).unwrap();
        let k = wf.wavenumbers()[0];
        assert!((k - 2.0 * std::f64::consts::PI * 10e9 / SPEED_OF_LIGHT).abs() < 1e-12);
        assert!(Waveform::new(0.0, 1.0, 1).is_err());
        assert!(Waveform::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn preset_examples() {
        let g = SceneGrid::centered([8, 8, 8], [0.01; 3]).unwrap();
        let s = scene_preset(ScenePreset::SinglePoint, &g, 0).unwrap();
        assert_eq!(s.nonzero_count(), 1);
        assert_eq!(s.values[g.index(4, 4, 4)], Complex64::new(1.0, 0.0));

        let s = scene_preset("point_grid".parse().unwrap(), &g, 0).unwrap();
        assert_eq!(s.nonzero_count(), 8);
        assert!(s.values.iter().all(|v| v.norm_sqr() == 0.0 || *v == Complex64::new(1.0, 0.0)));

        let a = scene_preset(ScenePreset::Wireframe, &g, 3).unwrap();
        let b = scene_preset(ScenePreset::Wireframe, &g, 3).unwrap();
        assert_eq!(a, b);
        assert!("aircraft".parse::<ScenePreset>().is_err());
    }

    #[test]
    fn wireframe_is_sparse_and_seeded() {
        let g = SceneGrid::centered([16, 16, 16], [0.01; 3]).unwrap();
        let a = scene_preset(ScenePreset::Wireframe, &g, 0).unwrap();
        let b = scene_preset(ScenePreset::Wireframe, &g, 1).unwrap();
        let nnz = a.nonzero_count();
        assert!(nnz > 16 && nnz < g.len() / 20, "nnz = {nnz}");
        assert_eq!(nnz, b.nonzero_count());
        assert_ne!(a, b);
        assert!(a.values.iter().all(|v| v.norm() <= 1.0));
    }
}
