use crate::error::{shape_err, Result};

/// Partition of an `height × width` grid into two disjoint cell lists.
///
/// Cell indices are row-major (`row * width + col`). Used to scatter two
/// separately encoded regions back onto one grid and to gather one region out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionIndex {
    height: usize,
    width: usize,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl RegionIndex {
    pub fn new(height: usize, width: usize, interior: Vec<usize>, boundary: Vec<usize>) -> Result<Self> {
        let cells = height * width;
        if interior.len() + boundary.len() != cells {
            return Err(shape_err(
                "region_index",
                format!("{} + {} cells do not cover a {height}×{width} grid", interior.len(), boundary.len()),
            ));
        }
        let mut seen = vec![false; cells];
        for &i in interior.iter().chain(&boundary) {
            if i >= cells || seen[i] {
                return Err(shape_err("region_index", format!("cell {i} out of range or repeated")));
            }
            seen[i] = true;
        }
        Ok(Self { height, width, interior, boundary })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
}
