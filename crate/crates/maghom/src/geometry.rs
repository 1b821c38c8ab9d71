//! Cell geometry: analytic inclusion shapes, voxelized masks with connected
//! component labels, and the `epsilon`-cell tiling of a macroscopic box.
//!
//! The periodic cell is `Q = (0,1)^3`. Inclusions are unions of analytic
//! primitives (balls and axis-aligned boxes) that must lie strictly inside
//! `Q`; voxelization samples the primitive at voxel centers `(i+1/2)/N`.
//! Connected components use 6-neighbor adjacency without periodic wrap, which
//! is sound because masks are required to keep at least one empty voxel layer
//! next to every cell face (the same layer that keeps rigid bodies away from
//! the zero-trace boundary condition of the cell problem).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One analytic inclusion primitive inside the unit cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InclusionShape {
    Ball { center: [f64; 3], radius: f64 },
    Box { lo: [f64; 3], hi: [f64; 3] },
}

impl InclusionShape {
    /// Signed distance from the shape's closure to the cell boundary
    /// (positive = strictly inside).
    fn boundary_clearance(&self) -> f64 {
        match self {
            InclusionShape::Ball { center, radius } => center
                .iter()
                .map(|&c| (c - radius).min(1.0 - c - radius))
                .fold(f64::INFINITY, f64::min),
            InclusionShape::Box { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .map(|(&l, &h)| l.min(1.0 - h))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Strict membership of a point (open set).
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            InclusionShape::Ball { center, radius } => {
                let d2: f64 = p
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 < radius * radius
            }
            InclusionShape::Box { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(&x, (&l, &h))| l < x && x < h),
        }
    }
}

/// Union of analytic primitives describing the rigid inclusion set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub shapes: Vec<InclusionShape>,
}

impl InclusionSpec {
    pub fn empty() -> Self {
        Self { shapes: Vec::new() }
    }

    pub fn ball(center: [f64; 3], radius: f64) -> Self {
        Self {
            shapes: vec![InclusionShape::Ball { center, radius }],
        }
    }

    /// Check well-formedness: finite parameters, positive measure, and the
    /// closure of every shape strictly inside the open cell.
    pub fn validate(&self) -> Result<()> {
        for shape in &self.shapes {
            match shape {
                InclusionShape::Ball { center, radius } => {
                    if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() {
                        return Err(Error::NonFiniteInput {
                            context: "inclusion ball parameters".into(),
                        });
                    }
                    if *radius <= 0.0 {
                        return Err(Error::InvalidParams(format!(
                            "ball radius must be positive, got {radius}"
                        )));
                    }
                }
                InclusionShape::Box { lo, hi } => {
                    if !lo.iter().chain(hi.iter()).all(|c| c.is_finite()) {
                        return Err(Error::NonFiniteInput {
                            context: "inclusion box parameters".into(),
                        });
                    }
                    if lo.iter().zip(hi.iter()).any(|(l, h)| l >= h) {
                        return Err(Error::InvalidParams(
                            "inclusion box needs lo < hi componentwise".into(),
                        ));
                    }
                }
            }
            if shape.boundary_clearance() <= 0.0 {
                return Err(Error::SeparationViolated { separation: 0 });
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        self.shapes.iter().any(|s| s.contains(p))
    }
}

/// Voxelized inclusion mask at resolution `n` with connected-component
/// labels (0 = matrix, 1.. = rigid component index).
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionMask {
    n: usize,
    occ: Vec<bool>,
    labels: Vec<u32>,
    n_components: usize,
    separation: usize,
}

impl InclusionMask {
    /// Voxelize `spec` at resolution `n` (voxel-center membership), label
    /// components, and verify the one-voxel separation layer to the faces.
    pub fn build(spec: &InclusionSpec, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidParams(format!(
                "mask resolution must be at least 4, got {n}"
            )));
        }
        spec.validate()?;
        let mut occ = vec![false; n * n * n];
        let h = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [
                        (i as f64 + 0.5) * h,
                        (j as f64 + 0.5) * h,
                        (k as f64 + 0.5) * h,
                    ];
                    occ[(i * n + j) * n + k] = spec.contains(p);
                }
            }
        }
        Self::from_occupancy(n, occ)
    }

    /// Build directly from an occupancy array (used by replication and the
    /// raw-import path). Checks separation and labels components.
    pub fn from_occupancy(n: usize, occ: Vec<bool>) -> Result<Self> {
        assert_eq!(occ.len(), n * n * n);
        let separation = separation_to_faces(n, &occ);
        if separation < 1 {
            return Err(Error::SeparationViolated { separation });
        }
        let (labels, n_components) = label_components(n, &occ);
        Ok(Self {
            n,
            occ,
            labels,
            n_components,
            separation,
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Minimum distance (in voxel layers) from any occupied voxel to a cell
    /// face; equals `n` for an empty mask.
    pub fn separation(&self) -> usize {
        self.separation
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occ[self.idx(i, j, k)]
    }

    /// Component label of a voxel (0 for matrix material).
    #[inline]
    pub fn label(&self, i: usize, j: usize, k: usize) -> u32 {
        self.labels[self.idx(i, j, k)]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    /// Occupancy lookup for a point of the unit cell (voxel of the point).
    pub fn occupied_at(&self, z: [f64; 3]) -> bool {
        let n = self.n;
        let clamp = |x: f64| -> usize {
            let i = (x.rem_euclid(1.0) * n as f64).floor() as isize;
            (i.max(0) as usize).min(n - 1)
        };
        self.occupied(clamp(z[0]), clamp(z[1]), clamp(z[2]))
    }

    pub fn occupied_count(&self) -> usize {
        self.occ.iter().filter(|&&b| b).count()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.occupied_count() as f64 / (self.n * self.n * self.n) as f64
    }

    /// Tile the mask `m` times per edge onto an `(m n)^3` grid. Every copy of
    /// every component becomes its own rigid body (fresh label).
    pub fn replicate(&self, m: usize) -> Result<Self> {
        assert!(m >= 1);
        let n = self.n;
        let nn = m * n;
        let mut occ = vec![false; nn * nn * nn];
        for i in 0..nn {
            for j in 0..nn {
                for k in 0..nn {
                    occ[(i * nn + j) * nn + k] = self.occupied(i % n, j % n, k % n);
                }
            }
        }
        Self::from_occupancy(nn, occ)
    }

    /// Serialize as a raw voxel dump: three little-endian `u32` header words
    /// `(N, N, N)` followed by `N^3` occupancy bytes, row-major with z
    /// fastest.
    pub fn export_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.occ.len());
        for _ in 0..3 {
            out.extend_from_slice(&(self.n as u32).to_le_bytes());
        }
        out.extend(self.occ.iter().map(|&b| b as u8));
        out
    }

    pub fn import_raw(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::InvalidParams("mask dump shorter than header".into()));
        }
        let dims: Vec<u32> = (0..3)
            .map(|i| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()))
            .collect();
        if dims[0] != dims[1] || dims[1] != dims[2] {
            return Err(Error::InvalidParams(format!(
                "mask dump must be cubic, header says {dims:?}"
            )));
        }
        let n = dims[0] as usize;
        if bytes.len() != 12 + n * n * n {
            return Err(Error::InvalidParams(format!(
                "mask dump length {} does not match header resolution {n}",
                bytes.len()
            )));
        }
        let occ = bytes[12..].iter().map(|&b| b != 0).collect();
        Self::from_occupancy(n, occ)
    }
}

/// Minimum voxel distance from occupied voxels to the cell faces.
fn separation_to_faces(n: usize, occ: &[bool]) -> usize {
    let mut sep = n;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if occ[(i * n + j) * n + k] {
                    let d = i
                        .min(n - 1 - i)
                        .min(j)
                        .min(n - 1 - j)
                        .min(k)
                        .min(n - 1 - k);
                    sep = sep.min(d);
                }
            }
        }
    }
    sep
}

/// Label connected components of the occupancy under 6-neighbor adjacency
/// (no periodic wrap; callers guarantee the separation layer).
fn label_components(n: usize, occ: &[bool]) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; occ.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..occ.len() {
        if !occ[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            let k = v % n;
            let j = (v / n) % n;
            let i = v / (n * n);
            let mut visit = |ii: usize, jj: usize, kk: usize| {
                let w = (ii * n + jj) * n + kk;
                if occ[w] && labels[w] == 0 {
                    labels[w] = next;
                    stack.push(w);
                }
            };
            if i > 0 {
                visit(i - 1, j, k);
            }
            if i + 1 < n {
                visit(i + 1, j, k);
            }
            if j > 0 {
                visit(i, j - 1, k);
            }
            if j + 1 < n {
                visit(i, j + 1, k);
            }
            if k > 0 {
                visit(i, j, k - 1);
            }
            if k + 1 < n {
                visit(i, j, k + 1);
            }
        }
    }
    (labels, next as usize)
}

/// Axis-aligned macroscopic box domain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxisBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl AxisBox {
    pub fn unit() -> Self {
        Self {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(l, h)| (h - l).max(0.0))
            .product()
    }
}

/// Index of scaled unit cells `eps (z + Q)` contained in a macroscopic box.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TilingIndex {
    /// Cell size as an exact rational `num/den`.
    pub eps_num: u32,
    pub eps_den: u32,
    /// Integer translations `z` with `eps (z + Q)` inside the closed domain.
    pub cells: Vec<[i64; 3]>,
    /// Total measure covered by the listed cells.
    pub covered_measure: f64,
    /// Measure of the uncovered remainder of the domain.
    pub complement_measure: f64,
}

/// Enumerate all cells `eps (z + Q)`, `z` integer, whose closure is contained
/// in the closure of `domain`, where `eps = num/den`.
pub fn tile(eps_num: u32, eps_den: u32, domain: &AxisBox) -> Result<TilingIndex> {
    if eps_num == 0 || eps_den == 0 {
        return Err(Error::InvalidParams(
            "tiling requires a positive rational epsilon".into(),
        ));
    }
    if domain
        .lo
        .iter()
        .chain(domain.hi.iter())
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFiniteInput {
            context: "tiling domain".into(),
        });
    }
    let eps = eps_num as f64 / eps_den as f64;
    let scale = domain
        .lo
        .iter()
        .chain(domain.hi.iter())
        .map(|x| x.abs())
        .fold(1.0, f64::max);
    let slack = 1e-12 * scale;
    let mut ranges = Vec::with_capacity(3);
    for axis in 0..3 {
        let zmin = ((domain.lo[axis] - slack) / eps).ceil() as i64;
        let zmax = ((domain.hi[axis] + slack) / eps - 1.0).floor() as i64;
        ranges.push((zmin, zmax));
    }
    let mut cells = Vec::new();
    if ranges.iter().all(|(lo, hi)| lo <= hi) {
        for i in ranges[0].0..=ranges[0].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for k in ranges[2].0..=ranges[2].1 {
                    cells.push([i, j, k]);
                }
            }
        }
    }
    let covered = cells.len() as f64 * eps * eps * eps;
    Ok(TilingIndex {
        eps_num,
        eps_den,
        cells,
        covered_measure: covered,
        complement_measure: domain.volume() - covered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tile_unit_cube_halves_and_thirds() {
        let unit = AxisBox::unit();
        let t2 = tile(1, 2, &unit).unwrap();
        assert_eq!(t2.cells.len(), 8);
        assert_relative_eq!(t2.complement_measure, 0.0, epsilon = 1e-12);
        let t3 = tile(1, 3, &unit).unwrap();
        assert_eq!(t3.cells.len(), 27);
        assert_relative_eq!(t3.complement_measure, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tile_non_divisor_epsilon_leaves_remainder() {
        // eps = 2/5: two cells fit per axis, z in {0,1}^3, and the uncovered
        // remainder has measure 1 - (4/5)^3 = 0.488.
        let t = tile(2, 5, &AxisBox::unit()).unwrap();
        assert_eq!(t.cells.len(), 8);
        for cell in &t.cells {
            assert!(cell.iter().all(|&z| z == 0 || z == 1));
        }
        assert_relative_eq!(t.covered_measure, 0.512, epsilon = 1e-12);
        assert_relative_eq!(t.complement_measure, 0.488, epsilon = 1e-12);
        // The remainder measure is controlled linearly by eps: |Ω \ Ω_eps| <= 3 eps.
        assert!(t.complement_measure <= 3.0 * 0.4);
    }

    #[test]
    fn tile_remainder_linear_in_eps() {
        for den in 2..20u32 {
            let t = tile(1, den, &AxisBox::unit()).unwrap();
            assert!(t.complement_measure <= 3.0 / den as f64 + 1e-12);
            assert!(t.complement_measure >= -1e-12);
        }
    }

    #[test]
    fn centered_ball_is_one_component_with_separation() {
        let spec = InclusionSpec::ball([0.5, 0.5, 0.5], 0.25);
        let mask = InclusionMask::build(&spec, 8).unwrap();
        assert_eq!(mask.n_components(), 1);
        assert!(mask.separation() >= 1);
        assert!(mask.occupied_count() > 0);
        // Voxel centers nearest the cell center are occupied.
        assert!(mask.occupied(4, 4, 4));
        assert!(mask.occupied_at([0.5, 0.5, 0.5]));
        assert!(!mask.occupied_at([0.05, 0.5, 0.5]));
    }

    #[test]
    fn touching_ball_reports_separation_violated() {
        let spec = InclusionSpec::ball([0.5, 0.5, 0.5], 0.5);
        match InclusionMask::build(&spec, 8) {
            Err(Error::SeparationViolated { .. }) => {}
            other => panic!("expected SeparationViolated, got {other:?}"),
        }
    }

    #[test]
    fn small_box_inclusion_accepted() {
        let spec = InclusionSpec {
            shapes: vec![InclusionShape::Box {
                lo: [0.1; 3],
                hi: [0.2; 3],
            }],
        };
        let mask = InclusionMask::build(&spec, 16).unwrap();
        assert_eq!(mask.n_components(), 1);
        assert!(mask.separation() >= 1);
        // Box (0.1,0.2)^3 at N=16 covers exactly the voxels with centers
        // strictly inside; centers are odd multiples of 1/32, so only
        // (2.5/16, ...) = 0.15625 qualifies per axis.
        assert_eq!(mask.occupied_count(), 1);
        assert!(mask.occupied(2, 2, 2));
    }

    #[test]
    fn two_balls_two_components() {
        let spec = InclusionSpec {
            shapes: vec![
                InclusionShape::Ball {
                    center: [0.3, 0.3, 0.3],
                    radius: 0.12,
                },
                InclusionShape::Ball {
                    center: [0.7, 0.7, 0.7],
                    radius: 0.12,
                },
            ],
        };
        let mask = InclusionMask::build(&spec, 16).unwrap();
        assert_eq!(mask.n_components(), 2);
        let a = mask.label(5, 5, 5);
        let b = mask.label(11, 11, 11);
        assert!(a > 0 && b > 0 && a != b);
    }

    #[test]
    fn empty_spec_empty_mask() {
        let mask = InclusionMask::build(&InclusionSpec::empty(), 8).unwrap();
        assert_eq!(mask.n_components(), 0);
        assert_eq!(mask.occupied_count(), 0);
        assert_eq!(mask.separation(), 8);
    }

    #[test]
    fn degenerate_shapes_rejected() {
        assert!(InclusionSpec::ball([0.5; 3], -0.1).validate().is_err());
        let flat = InclusionSpec {
            shapes: vec![InclusionShape::Box {
                lo: [0.2, 0.2, 0.2],
                hi: [0.2, 0.4, 0.4],
            }],
        };
        assert!(flat.validate().is_err());
        assert!(InclusionSpec::ball([0.5, 0.5, f64::NAN], 0.1).validate().is_err());
    }

    #[test]
    fn replication_relabels_every_copy() {
        let spec = InclusionSpec::ball([0.5, 0.5, 0.5], 0.25);
        let mask = InclusionMask::build(&spec, 8).unwrap();
        let big = mask.replicate(2).unwrap();
        assert_eq!(big.resolution(), 16);
        assert_eq!(big.n_components(), 8);
        assert_eq!(big.occupied_count(), 8 * mask.occupied_count());
        assert_relative_eq!(big.volume_fraction(), mask.volume_fraction(), epsilon = 1e-15);
    }

    #[test]
    fn volume_fraction_converges_linearly() {
        // Voxelized volume fraction of the ball approaches the analytic value
        // at first order in the voxel size; the constant is fitted from the
        // first refinement step with margin.
        let spec = InclusionSpec::ball([0.5, 0.5, 0.5], 0.25);
        let fr: Vec<f64> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| InclusionMask::build(&spec, n).unwrap().volume_fraction())
            .collect();
        let c = (fr[1] - fr[0]).abs() * 8.0 * 2.0;
        assert!((fr[2] - fr[1]).abs() <= c / 16.0, "d={} c={}", (fr[2] - fr[1]).abs(), c);
        assert!((fr[3] - fr[2]).abs() <= c / 32.0);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.25f64.powi(3);
        assert!((fr[3] - exact).abs() < 0.01);
    }

    #[test]
    fn raw_export_import_roundtrip() {
        let spec = InclusionSpec::ball([0.4, 0.55, 0.5], 0.2);
        let mask = InclusionMask::build(&spec, 16).unwrap();
        let bytes = mask.export_raw();
        assert_eq!(bytes.len(), 12 + 16 * 16 * 16);
        let back = InclusionMask::import_raw(&bytes).unwrap();
        assert_eq!(back, mask);
    }
}
