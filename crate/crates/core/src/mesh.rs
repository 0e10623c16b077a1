//! Dyadic Cartesian meshes of the unit square and element neighborhoods.
//!
//! Elements and nodes are enumerated row-major with x running fastest. Interior
//! nodes (the degrees of freedom of the coarse space with homogeneous Dirichlet
//! conditions) get their own row-major enumeration over `1..n-1` in each
//! direction.
//!
//! A [`Patch`] is the neighborhood of order `layers` around an element,
//! artificially extended past the boundary with exterior ghost cells so that
//! every patch has the same shape.

use crate::error::{Error, Result};

/// Highest supported refinement level.
pub const MAX_LEVEL: u32 = 14;

/// Corner order used for all element-local quantities.
pub const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Uniform quadrilateral mesh of `(0,1)^2` with `2^level` cells per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CartesianMesh {
    level: u32,
}

impl CartesianMesh {
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::config(format!("level {level} out of range 0..={MAX_LEVEL}")));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per side, `2^level`.
    pub fn n(&self) -> usize {
        1 << self.level
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn num_elements(&self) -> usize {
        self.n() * self.n()
    }

    pub fn num_nodes(&self) -> usize {
        (self.n() + 1) * (self.n() + 1)
    }

    pub fn num_interior_nodes(&self) -> usize {
        let k = self.n() - 1;
        k * k
    }

    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.n() + ex
    }

    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.n(), e / self.n())
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.n() + 1) + ix
    }

    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        (node % (self.n() + 1), node / (self.n() + 1))
    }

    pub fn node_position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.h(), iy as f64 * self.h())
    }

    /// Interior enumeration of grid point `(ix, iy)`, `None` on or outside the boundary.
    pub fn interior_index(&self, ix: i64, iy: i64) -> Option<usize> {
        let n = self.n() as i64;
        if ix <= 0 || iy <= 0 || ix >= n || iy >= n {
            return None;
        }
        Some(((iy - 1) * (n - 1) + (ix - 1)) as usize)
    }

    /// Grid coordinates of interior node number `k`.
    pub fn interior_coords(&self, k: usize) -> (usize, usize) {
        let w = self.n() - 1;
        (k % w + 1, k / w + 1)
    }

    /// Global node indices of element `e` in (SW, SE, NW, NE) order.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = self.element_coords(e);
        CORNERS.map(|(dx, dy)| self.node_index(ex + dx, ey + dy))
    }

    /// Interior indices of the corners of element `e`.
    pub fn element_interior_nodes(&self, e: usize) -> [Option<usize>; 4] {
        let (ex, ey) = self.element_coords(e);
        CORNERS.map(|(dx, dy)| self.interior_index((ex + dx) as i64, (ey + dy) as i64))
    }

    pub fn cell_center(&self, ex: usize, ey: usize) -> (f64, f64) {
        let h = self.h();
        ((ex as f64 + 0.5) * h, (ey as f64 + 0.5) * h)
    }

    /// Mesh one level finer.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.level + 1)
    }
}

/// Element neighborhood of order `layers`, extended by ghost cells past the boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    mesh: CartesianMesh,
    element: usize,
    layers: usize,
    /// Coarse coordinates of the lower-left patch cell (may be negative).
    origin: (i64, i64),
    interior: Vec<bool>,
    pi: Vec<Option<usize>>,
    phi: [Option<usize>; 4],
}

impl Patch {
    pub fn new(mesh: &CartesianMesh, element: usize, layers: usize) -> Result<Self> {
        if element >= mesh.num_elements() {
            return Err(Error::config(format!(
                "element {element} out of range for {} elements",
                mesh.num_elements()
            )));
        }
        if layers == 0 {
            return Err(Error::config("layers must be at least 1"));
        }
        let (ex, ey) = mesh.element_coords(element);
        let origin = (ex as i64 - layers as i64, ey as i64 - layers as i64);
        let side = 2 * layers + 1;
        let n = mesh.n() as i64;

        let mut interior = Vec::with_capacity(side * side);
        for cy in 0..side as i64 {
            for cx in 0..side as i64 {
                let (gx, gy) = (origin.0 + cx, origin.1 + cy);
                interior.push(gx >= 0 && gy >= 0 && gx < n && gy < n);
            }
        }

        let mut pi = Vec::with_capacity((side + 1) * (side + 1));
        for ny in 0..=side as i64 {
            for nx in 0..=side as i64 {
                pi.push(mesh.interior_index(origin.0 + nx, origin.1 + ny));
            }
        }

        Ok(Self {
            mesh: *mesh,
            element,
            layers,
            origin,
            interior,
            pi,
            phi: mesh.element_interior_nodes(element),
        })
    }

    pub fn mesh(&self) -> &CartesianMesh {
        &self.mesh
    }

    pub fn element(&self) -> usize {
        self.element
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Cells per patch side, `2 layers + 1`.
    pub fn side(&self) -> usize {
        2 * self.layers + 1
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn num_cells(&self) -> usize {
        self.side() * self.side()
    }

    /// Number of local coarse nodes, `(2 layers + 2)^2`.
    pub fn num_nodes(&self) -> usize {
        (self.side() + 1) * (self.side() + 1)
    }

    /// Interior/exterior flag per patch cell, row-major.
    pub fn cell_flags(&self) -> &[bool] {
        &self.interior
    }

    pub fn is_interior_cell(&self, cx: usize, cy: usize) -> bool {
        self.interior[cy * self.side() + cx]
    }

    pub fn num_exterior_cells(&self) -> usize {
        self.interior.iter().filter(|&&f| !f).count()
    }

    /// Local patch node to global interior node.
    pub fn pi(&self) -> &[Option<usize>] {
        &self.pi
    }

    /// Center-element corner to global interior node.
    pub fn phi(&self) -> &[Option<usize>; 4] {
        &self.phi
    }

    /// Local node index of corner `c` of the center element.
    pub fn center_corner_node(&self, c: usize) -> usize {
        let (dx, dy) = CORNERS[c];
        (self.layers + dy) * (self.side() + 1) + self.layers + dx
    }

    /// Half-open range of interior cells in local patch coordinates, per axis.
    pub fn interior_range(&self) -> ((usize, usize), (usize, usize)) {
        let n = self.mesh.n() as i64;
        let side = self.side() as i64;
        let clip = |o: i64| ((-o).clamp(0, side) as usize, (n - o).clamp(0, side) as usize);
        (clip(self.origin.0), clip(self.origin.1))
    }

    /// Restriction of a finer mesh to this patch.
    pub fn fine_submesh(&self, fine_level: u32) -> Result<FineSubmesh> {
        if fine_level <= self.mesh.level() {
            return Err(Error::config(format!(
                "fine level {fine_level} must exceed coarse level {}",
                self.mesh.level()
            )));
        }
        if fine_level > MAX_LEVEL {
            return Err(Error::config(format!(
                "fine level {fine_level} out of range 0..={MAX_LEVEL}"
            )));
        }
        let ratio = 1usize << (fine_level - self.mesh.level());
        Ok(FineSubmesh {
            fine_level,
            ratio,
            side: self.side(),
            origin: (self.origin.0 * ratio as i64, self.origin.1 * ratio as i64),
            coarse_flags: self.interior.clone(),
        })
    }
}

/// A fine mesh aligned with the global fine mesh, covering one patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FineSubmesh {
    fine_level: u32,
    ratio: usize,
    side: usize,
    origin: (i64, i64),
    coarse_flags: Vec<bool>,
}

impl FineSubmesh {
    pub fn fine_level(&self) -> u32 {
        self.fine_level
    }

    /// Fine cells per coarse cell side.
    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn cells_per_side(&self) -> usize {
        self.side * self.ratio
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side() * self.cells_per_side()
    }

    /// Global fine coordinates of the lower-left fine cell.
    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    /// Interior flag of local fine cell `(fx, fy)`, inherited from its coarse parent.
    pub fn is_interior(&self, fx: usize, fy: usize) -> bool {
        self.coarse_flags[(fy / self.ratio) * self.side + fx / self.ratio]
    }
}
