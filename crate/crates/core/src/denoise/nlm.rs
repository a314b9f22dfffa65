use rayon::prelude::*;

use super::{check_radius, check_volume, reflect, Denoiser};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::model::SceneGrid;

/// Fully 3D non-local means. Patch similarities come from the magnitude
/// volume; the resulting weights average the complex values, so real and
/// imaginary parts share one weight map.
#[derive(Clone, Debug)]
pub struct Nlm3d {
    patch_radius: usize,
    search_radius: usize,
    bandwidth: Option<f64>,
    h_factor: f64,
}

impl Nlm3d {
    pub fn new(
        patch_radius: usize,
        search_radius: usize,
        bandwidth: Option<f64>,
        h_factor: f64,
    ) -> Result<Self> {
        if let Some(h) = bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("NLM bandwidth must be positive, got {h}")));
            }
        }
        if !(h_factor > 0.0 && h_factor.is_finite()) {
            return Err(Error::invalid(format!("NLM h_factor must be positive, got {h_factor}")));
        }
        Ok(Nlm3d {
            patch_radius,
            search_radius,
            bandwidth,
            h_factor,
        })
    }

    /// Bandwidth used for `v`: fixed, or `h_factor` times the robust noise
    /// estimate with a floor relative to the peak magnitude.
    pub fn bandwidth_for(&self, grid: &SceneGrid, v: &[C64]) -> f64 {
        match self.bandwidth {
            Some(h) => h,
            None => {
                let peak = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
                (self.h_factor * estimate_noise_sigma(grid, v)).max(1e-3 * peak)
            }
        }
    }

    fn prepare(&self, grid: &SceneGrid, v: &[C64]) -> Result<Prepared> {
        check_volume(grid, v)?;
        let reach = self.patch_radius + self.search_radius;
        check_radius(grid, reach, "NLM patch + search")?;
        let mag = Padded::new(grid, reach, |n| v[n].norm());
        let val = Padded::new(grid, self.search_radius, |n| v[n]);
        let h = self.bandwidth_for(grid, v);
        Ok(Prepared { mag, val, h })
    }

    /// Normalized weights for every voxel, voxel-major with the search
    /// window in z, y, x order. Patch distances come from per-offset squared
    /// differences box-summed along each axis.
    fn all_weights(&self, grid: &SceneGrid, prep: &Prepared) -> Vec<f64> {
        let (w, p) = (self.search_radius, self.patch_radius);
        let span = 2 * w + 1;
        let offsets: Vec<[isize; 3]> = (0..span.pow(3))
            .map(|k| [k % span, (k / span) % span, k / (span * span)].map(|o| o as isize - w as isize))
            .collect();
        let patch_len = ((2 * p + 1).pow(3)) as f64;
        let inv_h2 = 1.0 / (prep.h * prep.h);
        let n = grid.dims;
        let per_offset: Vec<Vec<f64>> = offsets
            .par_iter()
            .map(|o| {
                let e = n.map(|d| d + 2 * p);
                let mut sq = vec![0.0; e[0] * e[1] * e[2]];
                for z in 0..e[2] {
                    for y in 0..e[1] {
                        for x in 0..e[0] {
                            let c = [x + w, y + w, z + w];
                            let q = [0, 1, 2].map(|a| (c[a] as isize + o[a]) as usize);
                            let d = prep.mag.get(c) - prep.mag.get(q);
                            sq[(z * e[1] + y) * e[0] + x] = d * d;
                        }
                    }
                }
                let d2 = box_sum(&sq, e, p);
                d2.into_iter().map(|d| (-(d / patch_len) * inv_h2).exp()).collect()
            })
            .collect();
        let k = offsets.len();
        let mut weights = vec![0.0; grid.len() * k];
        weights.par_chunks_mut(k).enumerate().for_each(|(v, row)| {
            for (j, col) in per_offset.iter().enumerate() {
                row[j] = col[v];
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        });
        weights
    }

    /// Normalized weights applied at one voxel, in search-window order.
    pub fn weights_at(&self, grid: &SceneGrid, v: &[C64], voxel: usize) -> Result<Vec<f64>> {
        let prep = self.prepare(grid, v)?;
        if voxel >= grid.len() {
            return Err(Error::invalid(format!("voxel {voxel} outside the grid")));
        }
        let k = (2 * self.search_radius + 1).pow(3);
        Ok(self.all_weights(grid, &prep)[voxel * k..(voxel + 1) * k].to_vec())
    }
}

struct Prepared {
    mag: Padded<f64>,
    val: Padded<C64>,
    h: f64,
}

struct Padded<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy + Send + Sync> Padded<T> {
    fn new(grid: &SceneGrid, pad: usize, f: impl Fn(usize) -> T + Sync) -> Self {
        let dims = grid.dims.map(|d| d + 2 * pad);
        let pad = pad as isize;
        let data = (0..dims.iter().product())
            .into_par_iter()
            .map(|i| {
                let c = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
                let s = [0, 1, 2].map(|a| reflect(c[a] as isize - pad, grid.dims[a]));
                f(grid.index(s[0], s[1], s[2]))
            })
            .collect();
        Padded { dims, data }
    }

    #[inline]
    fn get(&self, c: [usize; 3]) -> T {
        self.data[(c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]]
    }
}

impl Denoiser for Nlm3d {
    fn denoise(&self, grid: &SceneGrid, v: &[C64]) -> Result<Vec<C64>> {
        let prep = self.prepare(grid, v)?;
        if v.iter().all(|c| c.norm_sqr() == 0.0) {
            return Ok(v.to_vec());
        }
        let w = self.search_radius as isize;
        let k = (2 * self.search_radius + 1).pow(3);
        let weights = self.all_weights(grid, &prep);
        let out = weights
            .par_chunks(k)
            .enumerate()
            .map(|(n, wts)| {
                let c = grid.coords(n);
                let mut acc = ZERO;
                let mut j = 0;
                for oz in -w..=w {
                    for oy in -w..=w {
                        for ox in -w..=w {
                            let q = [
                                (c[0] as isize + w + ox) as usize,
                                (c[1] as isize + w + oy) as usize,
                                (c[2] as isize + w + oz) as usize,
                            ];
                            acc += prep.val.get(q) * wts[j];
                            j += 1;
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "nlm3d"
    }
}

// Sums each (2r+1)^3 box of a volume with extents `e`, shrinking every
// axis by 2r.
fn box_sum(src: &[f64], e: [usize; 3], r: usize) -> Vec<f64> {
    let mut cur = src.to_vec();
    let mut dims = e;
    for axis in 0..3 {
        let mut out_dims = dims;
        out_dims[axis] -= 2 * r;
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let mut out = vec![0.0; out_dims.iter().product()];
        for z in 0..out_dims[2] {
            for y in 0..out_dims[1] {
                for x in 0..out_dims[0] {
                    let base = (z * dims[1] + y) * dims[0] + x;
                    out[(z * out_dims[1] + y) * out_dims[0] + x] =
                        (0..=2 * r).map(|t| cur[base + t * stride]).sum();
                }
            }
        }
        cur = out;
        dims = out_dims;
    }
    cur
}

/// Robust noise level of the magnitude volume: median absolute deviation of
/// its 7-point Laplacian, scaled to a Gaussian standard deviation.
pub fn estimate_noise_sigma(grid: &SceneGrid, v: &[C64]) -> f64 {
    let [nx, ny, nz] = grid.dims;
    let mag: Vec<f64> = v.iter().map(|c| c.norm()).collect();
    let at = |x: isize, y: isize, z: isize| {
        mag[grid.index(reflect(x, nx), reflect(y, ny), reflect(z, nz))]
    };
    let mut lap: Vec<f64> = (0..grid.len())
        .map(|n| {
            let [x, y, z] = grid.coords(n).map(|c| c as isize);
            at(x - 1, y, z) + at(x + 1, y, z) + at(x, y - 1, z) + at(x, y + 1, z) + at(x, y, z - 1)
                + at(x, y, z + 1)
                - 6.0 * at(x, y, z)
        })
        .collect();
    let med = median(&mut lap);
    let mut dev: Vec<f64> = lap.iter().map(|l| (l - med).abs()).collect();
    1.482_6 * median(&mut dev) / 42f64.sqrt()
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noisy(grid: &SceneGrid, seed: u64, sigma: f64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..grid.len())
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                C64::new(1.0 + sigma * a, sigma * b)
            })
            .collect()
    }

    #[test]
    fn constant_volume_is_fixed() {
        let grid = SceneGrid::centered([6, 6, 6], [1.0; 3]).unwrap();
        let c = C64::new(-0.4, 0.9);
        let out = Nlm3d::new(1, 2, None, 1.0).unwrap().denoise(&grid, &vec![c; grid.len()]).unwrap();
        assert!(out.iter().all(|v| (v - c).norm() < 1e-12));
    }

    #[test]
    fn weights_are_normalized() {
        let grid = SceneGrid::centered([5, 6, 7], [1.0; 3]).unwrap();
        let v = noisy(&grid, 1, 0.3);
        let nlm = Nlm3d::new(1, 2, None, 1.0).unwrap();
        for voxel in [0, 17, 100, grid.len() - 1] {
            let w = nlm.weights_at(&grid, &v, voxel).unwrap();
            assert_eq!(w.len(), 125);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn weights_match_direct_patch_distances() {
        let grid = SceneGrid::centered([5, 4, 6], [1.0; 3]).unwrap();
        let v = noisy(&grid, 4, 0.5);
        let h = 0.7;
        let nlm = Nlm3d::new(1, 1, Some(h), 1.0).unwrap();
        let mag = |c: [isize; 3]| {
            let s = [0, 1, 2].map(|a| reflect(c[a], grid.dims[a]));
            v[grid.index(s[0], s[1], s[2])].norm()
        };
        for voxel in [0, 31, grid.len() - 1] {
            let c = grid.coords(voxel).map(|x| x as isize);
            let mut raw = Vec::new();
            for oz in -1..=1 {
                for oy in -1..=1 {
                    for ox in -1..=1 {
                        let mut d2 = 0.0;
                        for pz in -1..=1 {
                            for py in -1..=1 {
                                for px in -1..=1 {
                                    let a = mag([c[0] + px, c[1] + py, c[2] + pz]);
                                    let b = mag([c[0] + ox + px, c[1] + oy + py, c[2] + oz + pz]);
                                    d2 += (a - b) * (a - b);
                                }
                            }
                        }
                        raw.push((-d2 / 27.0 / (h * h)).exp());
                    }
                }
            }
            let total: f64 = raw.iter().sum();
            let got = nlm.weights_at(&grid, &v, voxel).unwrap();
            for (g, r) in got.iter().zip(&raw) {
                assert!((g - r / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduces_noise_and_is_deterministic() {
        let grid = SceneGrid::centered([8, 8, 8], [1.0; 3]).unwrap();
        let v = noisy(&grid, 7, 0.2);
        let nlm = Nlm3d::new(1, 2, None, 1.0).unwrap();
        let a = nlm.denoise(&grid, &v).unwrap();
        let b = nlm.denoise(&grid, &v).unwrap();
        assert_eq!(a, b);
        let err = |x: &[C64]| x.iter().map(|c| (c - C64::new(1.0, 0.0)).norm_sqr()).sum::<f64>();
        assert!(err(&a) < 0.5 * err(&v));
    }

    #[test]
    fn noise_estimate_tracks_sigma() {
        let grid = SceneGrid::centered([16, 16, 16], [1.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<C64> = (0..grid.len())
            .map(|_| C64::new(5.0 + 0.1 * rng.sample::<f64, _>(StandardNormal), 0.0))
            .collect();
        let s = estimate_noise_sigma(&grid, &v);
        assert!((s - 0.1).abs() < 0.02, "{s}");
    }

    #[test]
    fn invalid_parameters() {
        assert!(Nlm3d::new(1, 2, Some(0.0), 1.0).is_err());
        assert!(Nlm3d::new(1, 2, None, -1.0).is_err());
        let grid = SceneGrid::centered([2, 8, 8], [1.0; 3]).unwrap();
        let nlm = Nlm3d::new(1, 2, None, 1.0).unwrap();
        assert!(nlm.denoise(&grid, &vec![ZERO; grid.len()]).is_err());
    }
}
