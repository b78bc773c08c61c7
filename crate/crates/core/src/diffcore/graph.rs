//! Compressed edge lists used by the message/integral primitives.

use std::ops::Range;

use super::DiffError;

/// Directed edges `(x, y)` grouped by source node `x` (CSR layout).
///
/// Edge `e` in `range(x)` points from `x` to `targets()[e]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    num_nodes: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl EdgeList {
    /// All `M²` ordered pairs, including self-edges.
    pub fn complete(num_nodes: usize) -> Self {
        let offsets = (0..=num_nodes).map(|x| x * num_nodes).collect();
        let targets = (0..num_nodes)
            .flat_map(|_| 0..num_nodes)
            .collect();
        Self {
            num_nodes,
            offsets,
            targets,
        }
    }

    pub fn from_neighbors(neighbors: &[Vec<usize>]) -> Result<Self, DiffError> {
        let num_nodes = neighbors.len();
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for row in neighbors {
            if let Some(&bad) = row.iter().find(|&&y| y >= num_nodes) {
                return Err(DiffError::Index {
                    op: "EdgeList::from_neighbors",
                    index: bad,
                    len: num_nodes,
                });
            }
            targets.extend_from_slice(row);
            offsets.push(targets.len());
        }
        Ok(Self {
            num_nodes,
            offsets,
            targets,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn range(&self, x: usize) -> Range<usize> {
        self.offsets[x]..self.offsets[x + 1]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.targets[self.range(x)]
    }

    /// `(edge index, source, target)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |x| self.range(x).map(move |e| (e, x, self.targets[e])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_layout() {
        let g = EdgeList::complete(3);
        assert_eq!(g.num_edges(), 9);
        assert_eq!(g.neighbors(1), &[0, 1, 2]);
        assert_eq!(g.range(2), 6..9);
        let pairs: Vec<_> = g.iter().map(|(_, x, y)| (x, y)).collect();
        assert_eq!(pairs[4], (1, 1));
    }

    #[test]
    fn rejects_out_of_range_target() {
        assert!(EdgeList::from_neighbors(&[vec![0, 2], vec![1]]).is_err());
        let g = EdgeList::from_neighbors(&[vec![1], vec![]]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert!(g.neighbors(1).is_empty());
    }
}
