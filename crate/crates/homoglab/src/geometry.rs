//! Unit cell, inclusion and lattice bookkeeping, plus the structured grids
//! every other module assembles on.
//!
//! The unit cell is Y = [0,1)^2 with an axis-aligned box inclusion whose
//! closure stays strictly inside Y. Grids are uniform; a grid is only
//! accepted when its lines resolve every inclusion face exactly, so region
//! tags are exact and tagged volumes match closed-form counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-cell region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Matrix,
    Inclusion,
}

/// The unit cell with its model inclusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicGeometry {
    pub dim: usize,
    /// Per-axis lower bounds of the inclusion box.
    pub lower: [f64; 2],
    /// Per-axis upper bounds of the inclusion box.
    pub upper: [f64; 2],
    /// Volume fraction of the inclusion.
    pub theta: f64,
}

impl PeriodicGeometry {
    /// Axis-aligned box inclusion in 2D. The closure of the box must be
    /// strictly inside Y.
    pub fn box_2d(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        for k in 0..2 {
            if !(lower[k] > 0.0 && upper[k] < 1.0 && lower[k] < upper[k]) {
                return Err(Error::Geometry(format!(
                    "inclusion box [{}, {}] x [{}, {}] must satisfy 0 < lo < hi < 1 on every axis",
                    lower[0], upper[0], lower[1], upper[1]
                )));
            }
        }
        let theta = (upper[0] - lower[0]) * (upper[1] - lower[1]);
        Ok(Self { dim: 2, lower, upper, theta })
    }

    /// The centered box of side 0.5, the workhorse example.
    pub fn centered_half_box() -> Self {
        Self::box_2d([0.25, 0.25], [0.75, 0.75]).unwrap()
    }

    /// Whether a point of Y (fractional coordinates) lies in the open inclusion.
    pub fn contains(&self, y: [f64; 2]) -> bool {
        (0..2).all(|k| y[k] > self.lower[k] && y[k] < self.upper[k])
    }

    /// Smallest resolution whose grid lines hit every face of the box, if one
    /// exists below a search cap.
    pub fn smallest_compatible_resolution(&self) -> Option<usize> {
        (1..=8192).find(|&r| self.resolution_compatible(r))
    }

    pub fn resolution_compatible(&self, resolution: usize) -> bool {
        let r = resolution as f64;
        [self.lower[0], self.lower[1], self.upper[0], self.upper[1]]
            .iter()
            .all(|b| (b * r - (b * r).round()).abs() < 1e-9)
    }
}

/// The ε-lattice over Ω. Ω is fixed to the unit square and ε = 1/n, so the
/// inner and covering index sets coincide and cover Ω exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonLattice {
    /// Cell size ε = 1/n.
    pub epsilon: f64,
    /// Cells per axis.
    pub n: usize,
    /// Inner cell indices (row-major over the n x n lattice).
    pub inner_cells: Vec<[usize; 2]>,
    /// Covering cell indices; equals `inner_cells` for the unit square.
    pub covering_cells: Vec<[usize; 2]>,
}

impl EpsilonLattice {
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Geometry("epsilon lattice needs n >= 1".into()));
        }
        let mut cells = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                cells.push([i, j]);
            }
        }
        Ok(Self {
            epsilon: 1.0 / n as f64,
            n,
            inner_cells: cells.clone(),
            covering_cells: cells,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.covering_cells.len()
    }
}

/// Uniform structured grid, either periodic (on Y) or with boundary nodes
/// (Dirichlet grids on Ω or ω).
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    /// Cells per axis.
    pub resolution: [usize; 2],
    pub periodic: bool,
    /// Per-cell region tag, row-major.
    pub tags: Vec<Region>,
    /// Physical extent per axis (1.0 for Y and Ω).
    pub extent: [f64; 2],
}

impl StructuredGrid {
    pub fn cell_count(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    /// Nodes per axis. Periodic grids identify opposite faces.
    pub fn nodes_per_axis(&self) -> [usize; 2] {
        if self.periodic {
            self.resolution
        } else {
            [self.resolution[0] + 1, self.resolution[1] + 1]
        }
    }

    pub fn node_count(&self) -> usize {
        let n = self.nodes_per_axis();
        n[0] * n[1]
    }

    /// Cell side lengths.
    pub fn h(&self) -> [f64; 2] {
        [
            self.extent[0] / self.resolution[0] as f64,
            self.extent[1] / self.resolution[1] as f64,
        ]
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.resolution[0] + i
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        let n = self.nodes_per_axis();
        let (i, j) = if self.periodic {
            (i % self.resolution[0], j % self.resolution[1])
        } else {
            (i, j)
        };
        j * n[0] + i
    }

    /// The four node indices of cell (i, j), counterclockwise from the
    /// lower-left corner.
    pub fn cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    pub fn node_coord(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [i as f64 * h[0], j as f64 * h[1]]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1]]
    }

    pub fn tag(&self, i: usize, j: usize) -> Region {
        self.tags[self.cell_index(i, j)]
    }

    /// Total volume of inclusion-tagged cells.
    pub fn tagged_volume(&self) -> f64 {
        let h = self.h();
        let cell = h[0] * h[1];
        self.tags.iter().filter(|t| **t == Region::Inclusion).count() as f64 * cell
    }
}

/// Periodic grid on the unit cell Y with exact inclusion tagging.
pub fn build_unit_cell_grid(geom: &PeriodicGeometry, resolution: usize) -> Result<StructuredGrid> {
    if resolution == 0 {
        return Err(Error::Geometry("resolution must be positive".into()));
    }
    if !geom.resolution_compatible(resolution) {
        let suggestion = geom.smallest_compatible_resolution().unwrap_or(0);
        return Err(Error::Resolution {
            msg: format!(
                "resolution {resolution} does not align with inclusion bounds ({:?}, {:?})",
                geom.lower, geom.upper
            ),
            suggestion,
        });
    }
    let tags = tag_cells_by_center(geom, resolution);
    Ok(StructuredGrid {
        resolution: [resolution, resolution],
        periodic: true,
        tags,
        extent: [1.0, 1.0],
    })
}

/// Non-periodic grid on Y, same tagging. Used for the inclusion Dirichlet
/// problem and the unfolded y-space.
pub fn build_unit_cell_grid_dirichlet(
    geom: &PeriodicGeometry,
    resolution: usize,
) -> Result<StructuredGrid> {
    let g = build_unit_cell_grid(geom, resolution)?;
    Ok(StructuredGrid { periodic: false, ..g })
}

fn tag_cells_by_center(geom: &PeriodicGeometry, resolution: usize) -> Vec<Region> {
    let h = 1.0 / resolution as f64;
    let mut tags = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            let c = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            tags.push(if geom.contains(c) { Region::Inclusion } else { Region::Matrix });
        }
    }
    tags
}

/// Tag an arbitrary inclusion shape by sampling its indicator at cell
/// barycenters. No alignment guarantee; excluded from the rate studies.
pub fn tag_by_indicator<F: Fn([f64; 2]) -> bool>(grid: &mut StructuredGrid, indicator: F) {
    let res = grid.resolution;
    for j in 0..res[1] {
        for i in 0..res[0] {
            let c = grid.cell_center(i, j);
            let idx = grid.cell_index(i, j);
            grid.tags[idx] = if indicator(c) { Region::Inclusion } else { Region::Matrix };
        }
    }
}

/// Dirichlet grid on Ω = unit square at resolution n·M, with inclusion tags
/// exactly the union of the ε-scaled inclusion copies.
pub fn build_epsilon_domain(
    geom: &PeriodicGeometry,
    n: usize,
    subcells: usize,
) -> Result<(EpsilonLattice, StructuredGrid)> {
    let lattice = EpsilonLattice::unit_square(n)?;
    if !geom.resolution_compatible(subcells) {
        let suggestion = geom.smallest_compatible_resolution().unwrap_or(0);
        return Err(Error::Resolution {
            msg: format!("subresolution {subcells} does not align with inclusion bounds"),
            suggestion,
        });
    }
    let res = n * subcells;
    // Local tag pattern for one ε-cell, replicated over the lattice.
    let local = tag_cells_by_center(geom, subcells);
    let mut tags = Vec::with_capacity(res * res);
    for j in 0..res {
        for i in 0..res {
            let (li, lj) = (i % subcells, j % subcells);
            tags.push(local[lj * subcells + li]);
        }
    }
    let grid = StructuredGrid {
        resolution: [res, res],
        periodic: false,
        tags,
        extent: [1.0, 1.0],
    };
    Ok((lattice, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_geometry_theta() {
        let g = PeriodicGeometry::centered_half_box();
        assert!((g.theta - 0.25).abs() < 1e-15);
        assert!(PeriodicGeometry::box_2d([0.0, 0.25], [0.75, 0.75]).is_err());
        assert!(PeriodicGeometry::box_2d([0.5, 0.25], [0.4, 0.75]).is_err());
    }

    #[test]
    fn unit_cell_grid_exact_tagging() {
        let g = PeriodicGeometry::centered_half_box();
        let grid = build_unit_cell_grid(&g, 8).unwrap();
        assert_eq!(grid.cell_count(), 64);
        let inc = grid.tags.iter().filter(|t| **t == Region::Inclusion).count();
        assert_eq!(inc, 16);
        assert!((grid.tagged_volume() - 0.25).abs() < 1e-15);

        let fine = build_unit_cell_grid(&g, 64).unwrap();
        assert!((fine.tagged_volume() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn incompatible_resolution_rejected_with_suggestion() {
        let g = PeriodicGeometry::centered_half_box();
        match build_unit_cell_grid(&g, 6) {
            Err(Error::Resolution { suggestion, .. }) => assert_eq!(suggestion, 4),
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn epsilon_domain_counts() {
        let g = PeriodicGeometry::centered_half_box();
        let (lat, grid) = build_epsilon_domain(&g, 4, 8).unwrap();
        assert_eq!(lat.inner_cells.len(), 16);
        assert_eq!(lat.covering_cells.len(), 16);
        assert!((grid.tagged_volume() - 0.25).abs() < 1e-12);

        let (_, grid2) = build_epsilon_domain(&g, 2, 4).unwrap();
        assert_eq!(grid2.resolution, [8, 8]);
        assert_eq!(grid2.node_count(), 81);
    }

    #[test]
    fn fine_cells_partition_into_epsilon_cells() {
        let g = PeriodicGeometry::centered_half_box();
        let (lat, grid) = build_epsilon_domain(&g, 3, 4).unwrap();
        let m = 4;
        let mut counts = vec![0usize; lat.cell_count()];
        for j in 0..grid.resolution[1] {
            for i in 0..grid.resolution[0] {
                let cell = (j / m) * lat.n + i / m;
                counts[cell] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == m * m));
    }

    #[test]
    fn indicator_tagging() {
        let g = PeriodicGeometry::centered_half_box();
        let mut grid = build_unit_cell_grid(&g, 16).unwrap();
        // Disk of radius 0.25 at the center; tagged volume approximates its area.
        tag_by_indicator(&mut grid, |c| {
            let (dx, dy) = (c[0] - 0.5, c[1] - 0.5);
            dx * dx + dy * dy < 0.0625
        });
        let area = std::f64::consts::PI * 0.0625;
        assert!((grid.tagged_volume() - area).abs() < 0.02);
    }
}
