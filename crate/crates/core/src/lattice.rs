//! Site grids, row-major linear indexing and neighborhood systems.
//!
//! Sites are linearized row-major: the last extent varies fastest. Neighbors that
//! fall outside the grid are simply absent, so boundary sites have fewer cliques.

use std::fmt;

use crate::error::{Error, Result};

/// Linear site index in `[0, N)`.
pub type SiteIndex = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridShape {
    dims: Vec<usize>,
}

impl GridShape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::InvalidShape(format!(
                "expected 2 or 3 extents, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidShape(format!("zero extent in {dims:?}")));
        }
        Ok(GridShape { dims: dims.to_vec() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn site_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn to_coords(&self, i: SiteIndex) -> Result<Vec<usize>> {
        let n = self.site_count();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let mut coords = vec![0; self.dims.len()];
        let mut rest = i;
        for (c, &d) in coords.iter_mut().zip(&self.dims).rev() {
            *c = rest % d;
            rest /= d;
        }
        Ok(coords)
    }

    pub fn from_coords(&self, coords: &[usize]) -> Result<SiteIndex> {
        if coords.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                found: coords.len(),
            });
        }
        let mut index = 0;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            if c >= d {
                return Err(Error::IndexOutOfRange { index: c, len: d });
            }
            index = index * d + c;
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeighborhoodKind {
    N4,
    N8,
    N6,
    N26,
}

impl NeighborhoodKind {
    pub fn ndim(self) -> usize {
        match self {
            NeighborhoodKind::N4 | NeighborhoodKind::N8 => 2,
            NeighborhoodKind::N6 | NeighborhoodKind::N26 => 3,
        }
    }

    /// Whether diagonal offsets belong to the system.
    fn includes_diagonals(self) -> bool {
        matches!(self, NeighborhoodKind::N8 | NeighborhoodKind::N26)
    }

    /// Every offset in `{-1, 0, 1}^ndim` that belongs to this system.
    pub fn offsets(self) -> Vec<Vec<isize>> {
        let ndim = self.ndim();
        let mut out = Vec::new();
        for code in 0..3usize.pow(ndim as u32) {
            let mut rest = code;
            let mut offset = vec![0isize; ndim];
            for o in offset.iter_mut().rev() {
                *o = (rest % 3) as isize - 1;
                rest /= 3;
            }
            let nonzero = offset.iter().filter(|&&o| o != 0).count();
            if nonzero == 1 || (nonzero > 1 && self.includes_diagonals()) {
                out.push(offset);
            }
        }
        out
    }
}

impl fmt::Display for NeighborhoodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NeighborhoodKind::N4 => "n4",
            NeighborhoodKind::N8 => "n8",
            NeighborhoodKind::N6 => "n6",
            NeighborhoodKind::N26 => "n26",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for NeighborhoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n4" => Ok(NeighborhoodKind::N4),
            "n8" => Ok(NeighborhoodKind::N8),
            "n6" => Ok(NeighborhoodKind::N6),
            "n26" => Ok(NeighborhoodKind::N26),
            other => Err(Error::InvalidConfig(format!("unknown neighborhood {other:?}"))),
        }
    }
}

/// A grid together with its neighborhood system.
///
/// Adjacency is precomputed once in compressed form; each site's list is sorted
/// by linear index.
#[derive(Debug, Clone)]
pub struct Lattice {
    shape: GridShape,
    kind: NeighborhoodKind,
    starts: Vec<usize>,
    adjacency: Vec<SiteIndex>,
}

impl Lattice {
    pub fn new(shape: GridShape, kind: NeighborhoodKind) -> Result<Self> {
        if kind.ndim() != shape.ndim() {
            return Err(Error::NeighborhoodMismatch {
                kind: kind.to_string(),
                dims: shape.ndim(),
            });
        }
        let offsets = kind.offsets();
        let n = shape.site_count();
        let dims = shape.dims().to_vec();
        let mut strides = vec![1isize; dims.len()];
        for axis in (0..dims.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * dims[axis + 1] as isize;
        }

        let mut starts = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::with_capacity(n * offsets.len());
        let mut coords = vec![0usize; dims.len()];
        starts.push(0);
        for i in 0..n {
            for offset in &offsets {
                let inside = coords.iter().zip(offset).zip(&dims).all(|((&c, &o), &d)| {
                    let moved = c as isize + o;
                    moved >= 0 && moved < d as isize
                });
                if inside {
                    let delta: isize = offset.iter().zip(&strides).map(|(o, s)| o * s).sum();
                    adjacency.push((i as isize + delta) as usize);
                }
            }
            starts.push(adjacency.len());
            // advance row-major coordinates
            for axis in (0..dims.len()).rev() {
                coords[axis] += 1;
                if coords[axis] < dims[axis] {
                    break;
                }
                coords[axis] = 0;
            }
        }
        Ok(Lattice {
            shape,
            kind,
            starts,
            adjacency,
        })
    }

    /// 2D lattice with `rows × cols` sites.
    pub fn grid_2d(rows: usize, cols: usize, kind: NeighborhoodKind) -> Result<Self> {
        Lattice::new(GridShape::new(&[rows, cols])?, kind)
    }

    pub fn grid_3d(depth: usize, rows: usize, cols: usize, kind: NeighborhoodKind) -> Result<Self> {
        Lattice::new(GridShape::new(&[depth, rows, cols])?, kind)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn kind(&self) -> NeighborhoodKind {
        self.kind
    }

    pub fn site_count(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn neighbors(&self, i: SiteIndex) -> Result<&[SiteIndex]> {
        let n = self.site_count();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(self.adjacent(i))
    }

    /// Neighbor list without the bounds check; panics on a bad index.
    #[inline]
    pub(crate) fn adjacent(&self, i: SiteIndex) -> &[SiteIndex] {
        &self.adjacency[self.starts[i]..self.starts[i + 1]]
    }

    /// Each unordered neighbor pair once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (SiteIndex, SiteIndex)> + '_ {
        (0..self.site_count())
            .flat_map(move |i| self.adjacent(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}
