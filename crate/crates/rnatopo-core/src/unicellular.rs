//! Unicellular maps, trisections, slicing and gluing, and blueprints.
//!
//! Half-edges are ordered by the boundary tour `<_γ`, starting at the root
//! half-edge `0`. Vertices are the cycles of σ read counterclockwise.

use crate::diagram::Diagram;
use crate::fatgraph::{Fatgraph, FatgraphError};
use crate::perm::Permutation;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnicellularError {
    #[error("map has {0} boundary components, expected 1")]
    NotUnicellular(usize),
    #[error("half-edge {0} is not a trisection")]
    NotTrisection(usize),
    #[error("gluing needs an odd number (at least 3) of vertices, got {0}")]
    BadVertexCount(usize),
    #[error("half-edge {0} is out of range")]
    OutOfRange(usize),
    #[error("half-edge {0} is not the minimum of its vertex")]
    NotVertexMinimum(usize),
    #[error("vertices are not distinct and increasing at half-edge {0}")]
    WrongOrder(usize),
    #[error("blueprint does not start at this map")]
    ForeignBlueprint,
    #[error(transparent)]
    Fatgraph(#[from] FatgraphError),
}

/// A fatgraph with a single boundary component, rooted at half-edge `0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnicellularMap {
    sigma: Permutation,
    alpha: Permutation,
    tour: Vec<usize>,
    rank: Vec<usize>,
}

impl UnicellularMap {
    pub fn new(sigma: Permutation, alpha: Permutation) -> Result<Self, UnicellularError> {
        let f = Fatgraph::new(sigma, alpha)?;
        let r = f.gamma().cycle_count();
        if r != 1 && f.half_edges() > 0 {
            return Err(UnicellularError::NotUnicellular(r));
        }
        let (sigma, alpha) = (f.sigma().clone(), f.alpha().clone());
        Ok(Self::build(sigma, alpha))
    }

    fn build(sigma: Permutation, alpha: Permutation) -> Self {
        let n = sigma.len();
        let mut tour = Vec::with_capacity(n);
        let mut rank = vec![0; n];
        if n > 0 {
            let mut h = 0;
            loop {
                rank[h] = tour.len();
                tour.push(h);
                h = alpha.apply(sigma.apply(h));
                if h == 0 {
                    break;
                }
            }
        }
        debug_assert_eq!(tour.len(), n);
        UnicellularMap {
            sigma,
            alpha,
            tour,
            rank,
        }
    }

    pub fn from_fatgraph(f: &Fatgraph) -> Result<Self, UnicellularError> {
        Self::new(f.sigma().clone(), f.alpha().clone())
    }

    /// The dual of a matching with its rainbow: half-edge `h` is backbone
    /// position `h`, the tour visits `0, 1, .., 2n+1` in order and the
    /// rainbow end `2n+1` is a leaf.
    pub fn dual_of_matching(m: &Diagram) -> Result<Self, UnicellularError> {
        Self::from_fatgraph(&Fatgraph::with_rainbow(m)?.poincare_dual())
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn alpha(&self) -> &Permutation {
        &self.alpha
    }

    pub fn gamma(&self) -> Permutation {
        self.alpha.compose(&self.sigma)
    }

    pub fn half_edges(&self) -> usize {
        self.sigma.len()
    }

    pub fn edges(&self) -> usize {
        self.sigma.len() / 2
    }

    pub fn vertex_count(&self) -> usize {
        self.sigma.cycle_count()
    }

    pub fn genus(&self) -> usize {
        if self.half_edges() == 0 {
            return 0;
        }
        (self.edges() + 1 - self.vertex_count()) / 2
    }

    /// Position of `h` in the boundary tour.
    #[inline]
    pub fn rank(&self, h: usize) -> usize {
        self.rank[h]
    }

    /// Half-edges in tour order.
    pub fn tour(&self) -> &[usize] {
        &self.tour
    }

    /// The vertex of `h` read counterclockwise, starting at its γ-minimum.
    pub fn vertex(&self, h: usize) -> Vec<usize> {
        let mut c = vec![h];
        let mut x = self.sigma.apply(h);
        while x != h {
            c.push(x);
            x = self.sigma.apply(x);
        }
        let k = (0..c.len()).min_by_key(|&k| self.rank[c[k]]).unwrap();
        c.rotate_left(k);
        c
    }

    /// γ-minimum half-edge of the vertex containing `h`.
    pub fn vertex_min(&self, h: usize) -> usize {
        let mut best = h;
        let mut x = self.sigma.apply(h);
        while x != h {
            if self.rank[x] < self.rank[best] {
                best = x;
            }
            x = self.sigma.apply(x);
        }
        best
    }

    /// Minimum half-edges of all vertices, in tour order.
    pub fn vertex_mins(&self) -> Vec<usize> {
        let mut mins: Vec<usize> = self
            .sigma
            .cycles()
            .iter()
            .map(|c| *c.iter().min_by_key(|&&h| self.rank[h]).unwrap())
            .collect();
        mins.sort_by_key(|&h| self.rank[h]);
        mins
    }

    fn min_flags(&self) -> Vec<bool> {
        let mut is_min = vec![false; self.half_edges()];
        for c in self.sigma.cycles() {
            let m = *c.iter().min_by_key(|&&h| self.rank[h]).unwrap();
            is_min[m] = true;
        }
        is_min
    }

    pub fn is_trisection(&self, h: usize) -> bool {
        h < self.half_edges()
            && self.rank[h] < self.rank[self.sigma.inverse_apply(h)]
            && self.vertex_min(h) != h
    }

    /// All trisections in tour order.
    pub fn trisections(&self) -> Vec<usize> {
        let inv = self.sigma.inverse();
        let is_min = self.min_flags();
        self.tour
            .iter()
            .copied()
            .filter(|&h| !is_min[h] && self.rank[h] < self.rank[inv.apply(h)])
            .collect()
    }

    /// Splits the vertex of `tau` repeatedly until `tau` is the minimum of
    /// its vertex. Returns the sliced map, the new vertices (by γ-minimum, in
    /// tour order) and the genus drop `k`; there are `2k+1` vertices.
    pub fn slice(&self, tau: usize) -> Result<Slicing, UnicellularError> {
        if !self.is_trisection(tau) {
            return Err(UnicellularError::NotTrisection(tau));
        }
        let mut map = self.clone();
        let mut handles = Vec::new();
        let mut k = 0;
        loop {
            let cyc = map.vertex(tau);
            let q = cyc.iter().position(|&h| h == tau).unwrap();
            let a1 = cyc[0];
            let a2 = cyc[1..q]
                .iter()
                .copied()
                .filter(|&h| map.rank[h] > map.rank[tau])
                .min_by_key(|&h| map.rank[h])
                .ok_or(UnicellularError::NotTrisection(tau))?;
            let mut img = map.sigma.images().to_vec();
            let (s1, s2, s3) = (img[a1], img[a2], img[tau]);
            img[a1] = s3;
            img[tau] = s2;
            img[a2] = s1;
            map = Self::build(
                Permutation::from_images(img).expect("product of permutations"),
                map.alpha.clone(),
            );
            handles.push(a1);
            handles.push(a2);
            k += 1;
            if map.vertex_min(tau) == tau {
                break;
            }
        }
        handles.push(tau);
        let mut vertices: Vec<usize> = handles.iter().map(|&h| map.vertex_min(h)).collect();
        vertices.sort_by_key(|&h| map.rank[h]);
        vertices.dedup();
        debug_assert_eq!(vertices.len(), 2 * k + 1);
        Ok(Slicing { map, vertices, k })
    }

    /// Inverse of [`UnicellularMap::slice`]: merges `2k+1` vertices, given by
    /// their γ-minima in tour order, and returns the map of genus `g + k`
    /// together with its distinguished trisection.
    pub fn glue(&self, vertices: &[usize]) -> Result<(UnicellularMap, usize), UnicellularError> {
        let len = vertices.len();
        if len < 3 || len % 2 == 0 {
            return Err(UnicellularError::BadVertexCount(len));
        }
        for (i, &h) in vertices.iter().enumerate() {
            if h >= self.half_edges() {
                return Err(UnicellularError::OutOfRange(h));
            }
            if self.vertex_min(h) != h {
                return Err(UnicellularError::NotVertexMinimum(h));
            }
            if i > 0 && self.rank[vertices[i - 1]] >= self.rank[h] {
                return Err(UnicellularError::WrongOrder(h));
            }
        }
        let tau = vertices[len - 1];
        let mut img = self.sigma.images().to_vec();
        for j in (0..(len - 1) / 2).rev() {
            let (c1, c2) = (vertices[2 * j], vertices[2 * j + 1]);
            // σ ← σ∘(c1 c2 τ)
            let (s1, s2, s3) = (img[c1], img[c2], img[tau]);
            img[c1] = s2;
            img[c2] = s3;
            img[tau] = s1;
        }
        let map = Self::build(
            Permutation::from_images(img).expect("product of permutations"),
            self.alpha.clone(),
        );
        Ok((map, tau))
    }

    /// Every blueprint of this map, depth first, trisections in tour order.
    pub fn blueprints(&self) -> Vec<Blueprint> {
        let mut out = Vec::new();
        let mut steps = Vec::new();
        let mut maps = vec![self.clone()];
        self.blueprints_rec(&mut maps, &mut steps, &mut out);
        out
    }

    fn blueprints_rec(
        &self,
        maps: &mut Vec<UnicellularMap>,
        steps: &mut Vec<SliceStep>,
        out: &mut Vec<Blueprint>,
    ) {
        let cur = maps.last().unwrap().clone();
        let g = cur.genus();
        if g == 0 {
            out.push(Blueprint {
                maps: maps.clone(),
                steps: steps.clone(),
            });
            return;
        }
        for tau in cur.trisections() {
            let s = cur.slice(tau).expect("trisection slices");
            steps.push(SliceStep {
                genus: g,
                tau,
                vertices: s.vertices,
                k: s.k,
            });
            maps.push(s.map);
            self.blueprints_rec(maps, steps, out);
            maps.pop();
            steps.pop();
        }
    }

    /// Number of blueprints, without materializing them.
    pub fn blueprint_count(&self) -> usize {
        if self.genus() == 0 {
            return 1;
        }
        self.trisections()
            .into_iter()
            .map(|t| self.slice(t).expect("trisection slices").map.blueprint_count())
            .sum()
    }
}

trait InverseApply {
    fn inverse_apply(&self, h: usize) -> usize;
}

impl InverseApply for Permutation {
    fn inverse_apply(&self, h: usize) -> usize {
        let mut x = h;
        loop {
            let y = self.apply(x);
            if y == h {
                return x;
            }
            x = y;
        }
    }
}

/// Result of slicing at one trisection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slicing {
    pub map: UnicellularMap,
    pub vertices: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SliceStep {
    /// Genus of the map before this slicing.
    pub genus: usize,
    pub tau: usize,
    /// γ-minima of the `2k+1` vertices created, in the tour of the next map.
    pub vertices: Vec<usize>,
    pub k: usize,
}

/// A sequence of slicings from a unicellular map down to a planar tree.
/// `maps[0]` is the start, `maps[i+1]` is `maps[i]` sliced by `steps[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Blueprint {
    pub maps: Vec<UnicellularMap>,
    pub steps: Vec<SliceStep>,
}

impl Blueprint {
    pub fn trivial(u: &UnicellularMap) -> Self {
        Blueprint {
            maps: vec![u.clone()],
            steps: Vec::new(),
        }
    }

    /// Replays a sequence of trisections from `u`.
    pub fn from_trisections(u: &UnicellularMap, taus: &[usize]) -> Result<Self, UnicellularError> {
        let mut maps = vec![u.clone()];
        let mut steps = Vec::new();
        for &tau in taus {
            let cur = maps.last().unwrap();
            let genus = cur.genus();
            let s = cur.slice(tau)?;
            steps.push(SliceStep {
                genus,
                tau,
                vertices: s.vertices,
                k: s.k,
            });
            maps.push(s.map);
        }
        Ok(Blueprint { maps, steps })
    }

    pub fn start(&self) -> &UnicellularMap {
        &self.maps[0]
    }

    /// The planar tree reached at the end.
    pub fn tree(&self) -> &UnicellularMap {
        self.maps.last().unwrap()
    }

    /// Number of slicings.
    pub fn r(&self) -> usize {
        self.steps.len()
    }

    pub fn trisection_sequence(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.tau).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.tree().genus() == 0
    }

    /// One `g=<genus> tau=<h> V=[..]` line per slicing and a final `g=0` line.
    pub fn debug_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.steps {
            let mut line = String::new();
            let _ = write!(line, "g={} tau={} V=[", s.genus, s.tau);
            for (i, v) in s.vertices.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{v}");
            }
            line.push(']');
            out.push(line);
        }
        let mut last = String::new();
        let _ = write!(last, "g={} tau=- V=[]", self.tree().genus());
        out.push(last);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(s: &str) -> UnicellularMap {
        UnicellularMap::dual_of_matching(&Diagram::parse(s).unwrap()).unwrap()
    }

    #[test]
    fn dual_tour_is_backbone_order() {
        let u = dual("([)]");
        assert_eq!(u.tour(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(u.genus(), 1);
        assert_eq!(u.vertex(0), vec![0, 3, 2, 1, 4]);
        assert_eq!(u.vertex(5), vec![5]);
    }

    #[test]
    fn genus_one_trisections_and_slices() {
        let u = dual("([)]");
        assert_eq!(u.trisections(), vec![1, 2]);
        let s = u.slice(2).unwrap();
        assert_eq!(s.k, 1);
        assert_eq!(s.map.genus(), 0);
        assert_eq!(s.map.tour(), &[0, 3, 1, 2, 4, 5]);
        assert_eq!(s.vertices, vec![0, 3, 2]);
        let s = u.slice(1).unwrap();
        assert_eq!(s.map.tour(), &[0, 2, 1, 3, 4, 5]);
        assert_eq!(u.blueprints().len(), 2);
    }

    #[test]
    fn planar_tree_has_no_trisections() {
        let u = dual("(()())");
        assert!(u.trisections().is_empty());
        let bps = u.blueprints();
        assert_eq!(bps.len(), 1);
        assert_eq!(bps[0].r(), 0);
        assert_eq!(u.slice(1), Err(UnicellularError::NotTrisection(1)));
    }

    #[test]
    fn glue_validates_input() {
        let u = dual("(())()");
        let mins = u.vertex_mins();
        assert_eq!(
            u.glue(&mins[..2]),
            Err(UnicellularError::BadVertexCount(2))
        );
        assert!(matches!(
            u.glue(&[mins[2], mins[1], mins[3]]),
            Err(UnicellularError::WrongOrder(_))
        ));
        let (m, tau) = u.glue(&mins[..3]).unwrap();
        assert_eq!(m.genus(), 1);
        assert!(m.is_trisection(tau));
    }

    #[test]
    fn genus_two_slices() {
        let u = dual("([{<)]}>");
        assert_eq!(u.genus(), 2);
        assert_eq!(u.trisections().len(), 4);
        let ks: Vec<usize> = u
            .trisections()
            .into_iter()
            .map(|t| u.slice(t).unwrap().k)
            .collect();
        assert!(ks.contains(&2) || ks.contains(&1));
        for t in u.trisections() {
            let s = u.slice(t).unwrap();
            assert_eq!(s.vertices.len(), 2 * s.k + 1);
            assert_eq!(u.genus() - s.k, s.map.genus());
            assert_eq!(s.map.glue(&s.vertices).unwrap(), (u.clone(), t));
        }
    }

    #[test]
    fn debug_lines_format() {
        let u = dual("([)]");
        let b = &u.blueprints()[1];
        assert_eq!(b.debug_lines(), vec!["g=1 tau=2 V=[0,3,2]", "g=0 tau=- V=[]"]);
    }
}
