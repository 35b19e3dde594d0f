//! Nearest-neighbour clusters of a vacant mask on a rectangle.

use loopsoup::lattice::Rect;
use petgraph::unionfind::UnionFind;

pub struct GridClusters {
    rect: Rect,
    vacant: Vec<bool>,
    uf: UnionFind<u32>,
}

impl GridClusters {
    /// `vacant[i]` refers to the site `rect.point_at(i)`.
    pub fn new(rect: Rect, vacant: Vec<bool>) -> Self {
        assert_eq!(rect.len(), vacant.len());
        assert!(rect.len() <= u32::MAX as usize);
        let uf = UnionFind::new(rect.len());
        GridClusters { rect, vacant, uf }
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn is_vacant(&self, idx: usize) -> bool {
        self.vacant[idx]
    }

    /// Joins vacant neighbours lying both in `sub`, a sub-rectangle of the
    /// grid. Calls accumulate, so staged calls on growing rectangles give the
    /// clusters of each stage in turn.
    pub fn join_in(&mut self, sub: &Rect) {
        let d = self.rect.dim();
        let mut c = vec![0i64; d];
        for s in 0..sub.len() {
            sub.coords_at(s, &mut c);
            let Some(idx) = self.rect.index_of_coords(&c) else { continue };
            if !self.vacant[idx] {
                continue;
            }
            for k in 0..d {
                if c[k] >= sub.hi[k] || c[k] >= self.rect.hi[k] {
                    continue;
                }
                let j = idx + self.rect.stride(k);
                if self.vacant[j] {
                    self.uf.union(idx as u32, j as u32);
                }
            }
        }
    }

    pub fn root(&mut self, idx: usize) -> u32 {
        self.uf.find_mut(idx as u32)
    }

    /// Sizes of the clusters met by `sub`, counting only sites of `sub`.
    pub fn cluster_sizes_in(&mut self, sub: &Rect) -> std::collections::HashMap<u32, usize> {
        let mut sizes = std::collections::HashMap::new();
        let mut c = vec![0i64; self.rect.dim()];
        for s in 0..sub.len() {
            sub.coords_at(s, &mut c);
            let Some(idx) = self.rect.index_of_coords(&c) else { continue };
            if self.vacant[idx] {
                *sizes.entry(self.root(idx)).or_insert(0) += 1;
            }
        }
        sizes
    }
}
