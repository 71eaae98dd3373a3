//! Geometric nested-dissection ordering for structured voxel grids.

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: usize,
    hi: usize,
    periodic: bool,
}

impl Range {
    fn extent(&self) -> usize {
        self.hi + 1 - self.lo
    }
}

const LEAF: usize = 24;

/// Returns the node elimination order (`order[new] = old`) for nodes at the
/// given integer grid coordinates. Each axis spans `0..dims[d]`; periodic axes
/// wrap. Separators are eliminated after the parts they split.
pub fn nested_dissection(coords: &[[usize; 3]], dims: [usize; 3], periodic: [bool; 3]) -> Vec<usize> {
    let ranges = [0, 1, 2].map(|d| Range {
        lo: 0,
        hi: dims[d].max(1) - 1,
        periodic: periodic[d],
    });
    let nodes: Vec<usize> = (0..coords.len()).collect();
    let mut order = Vec::with_capacity(coords.len());
    dissect(nodes, coords, ranges, &mut order);
    order
}

fn dissect(nodes: Vec<usize>, coords: &[[usize; 3]], ranges: [Range; 3], order: &mut Vec<usize>) {
    if nodes.len() <= LEAF {
        order.extend(nodes);
        return;
    }
    let axis = (0..3).max_by_key(|&d| (ranges[d].extent(), 3 - d)).unwrap();
    let r = ranges[axis];
    if r.extent() < 3 {
        order.extend(nodes);
        return;
    }
    let (cuts, left, right) = if r.periodic {
        let mid = r.lo + r.extent() / 2;
        (
            vec![r.lo, mid],
            Range { lo: r.lo + 1, hi: mid - 1, periodic: false },
            Range { lo: mid + 1, hi: r.hi, periodic: false },
        )
    } else {
        let mid = (r.lo + r.hi) / 2;
        (
            vec![mid],
            Range { lo: r.lo, hi: mid - 1, periodic: false },
            Range { lo: mid + 1, hi: r.hi, periodic: false },
        )
    };
    let mut sep = Vec::new();
    let mut lnodes = Vec::new();
    let mut rnodes = Vec::new();
    for v in nodes {
        let c = coords[v][axis];
        if cuts.contains(&c) {
            sep.push(v);
        } else if c >= left.lo && c <= left.hi {
            lnodes.push(v);
        } else {
            rnodes.push(v);
        }
    }
    let mut lr = ranges;
    lr[axis] = left;
    let mut rr = ranges;
    rr[axis] = right;
    dissect(lnodes, coords, lr, order);
    dissect(rnodes, coords, rr, order);
    order.extend(sep);
}

/// Expands a node order into a dof order with `ncomp` interleaved components.
pub fn expand_blocks(node_order: &[usize], ncomp: usize) -> Vec<usize> {
    node_order
        .iter()
        .flat_map(|&v| (0..ncomp).map(move |c| v * ncomp + c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_a_permutation() {
        let n = 9;
        let coords: Vec<[usize; 3]> = (0..n * n * n).map(|v| [v % n, (v / n) % n, v / (n * n)]).collect();
        for periodic in [[true; 3], [false; 3]] {
            let mut order = nested_dissection(&coords, [n; 3], periodic);
            order.sort_unstable();
            assert_eq!(order, (0..n * n * n).collect::<Vec<_>>());
        }
        assert_eq!(expand_blocks(&[2, 0], 2), vec![4, 5, 0, 1]);
    }
}
