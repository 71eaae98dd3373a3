//! Voxel grids on the unit cube with homogeneous Dirichlet boundary nodes.

use super::element_op::{ElementOperator, NONE};

/// Marker for a void voxel.
pub const VOID: u32 = u32::MAX;

/// `n^3` voxels, `(n+1)^3` nodes with x fastest. A node carries unknowns iff it
/// is a corner of a non-void voxel and does not lie on the outer boundary.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    pub n: usize,
    pub voxel_types: Vec<u32>,
    pub node_block: Vec<u32>,
    pub block_node: Vec<u32>,
}

impl BoxGrid {
    pub fn new(n: usize, voxel_types: Vec<u32>) -> Self {
        assert_eq!(voxel_types.len(), n * n * n);
        let np = n + 1;
        let mut touched = vec![false; np * np * np];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if voxel_types[i + n * (j + n * k)] != VOID {
                        for c in crate::hex8::CORNERS {
                            touched[(i + c[0]) + np * ((j + c[1]) + np * (k + c[2]))] = true;
                        }
                    }
                }
            }
        }
        let mut node_block = vec![NONE; np * np * np];
        let mut block_node = Vec::new();
        for k in 1..n {
            for j in 1..n {
                for i in 1..n {
                    let v = i + np * (j + np * k);
                    if touched[v] {
                        node_block[v] = block_node.len() as u32;
                        block_node.push(v as u32);
                    }
                }
            }
        }
        Self {
            n,
            voxel_types,
            node_block,
            block_node,
        }
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let np = self.n + 1;
        i + np * (j + np * k)
    }

    pub fn node_coords(&self, v: usize) -> [usize; 3] {
        let np = self.n + 1;
        [v % np, (v / np) % np, v / (np * np)]
    }

    pub fn nblocks(&self) -> usize {
        self.block_node.len()
    }

    /// Block indices of the eight corners of voxel `(i,j,k)`.
    pub fn voxel_blocks(&self, i: usize, j: usize, k: usize) -> [u32; 8] {
        let mut out = [NONE; 8];
        for (a, c) in crate::hex8::CORNERS.iter().enumerate() {
            out[a] = self.node_block[self.node_index(i + c[0], j + c[1], k + c[2])];
        }
        out
    }

    /// Element operator over the non-void voxels.
    pub fn operator(&self, ncomp: usize, bank: Vec<Vec<f64>>) -> ElementOperator {
        let n = self.n;
        let mut elems = Vec::new();
        let mut types = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let t = self.voxel_types[i + n * (j + n * k)];
                    if t != VOID {
                        elems.push(self.voxel_blocks(i, j, k));
                        types.push(t);
                    }
                }
            }
        }
        ElementOperator {
            ncomp,
            nblocks: self.nblocks(),
            elems,
            types,
            bank,
        }
    }

    /// Grid coordinates of every block, for geometric orderings.
    pub fn block_coords(&self) -> Vec<[usize; 3]> {
        self.block_node.iter().map(|&v| self.node_coords(v as usize)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_nodes_of_full_grid() {
        let g = BoxGrid::new(4, vec![0; 64]);
        assert_eq!(g.nblocks(), 27);
        let op = g.operator(1, vec![vec![0.0; 64]]);
        assert_eq!(op.elems.len(), 64);
    }

    #[test]
    fn void_voxels_drop_isolated_nodes() {
        let mut types = vec![0u32; 27];
        // hollow out the centre voxel: all interior nodes remain touched
        types[13] = VOID;
        let g = BoxGrid::new(3, types);
        assert_eq!(g.nblocks(), 8);
    }
}
