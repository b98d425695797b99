//! Fatgraphs as permutation triples `(σ, α, γ = α∘σ)`.

use crate::diagram::Diagram;
use crate::perm::Permutation;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FatgraphError {
    #[error("sigma and alpha act on ground sets of different size")]
    SizeMismatch,
    #[error("alpha is not a fixed-point-free involution")]
    BadAlpha,
    #[error("fatgraph is disconnected")]
    Disconnected,
    #[error("diagram is not a matching (vertex {0} unpaired)")]
    NotMatching(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenusReport {
    pub v: usize,
    pub e: usize,
    pub r: usize,
    pub chi: i64,
    pub g: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fatgraph {
    sigma: Permutation,
    alpha: Permutation,
    gamma: Permutation,
}

impl Fatgraph {
    pub fn new(sigma: Permutation, alpha: Permutation) -> Result<Self, FatgraphError> {
        if sigma.len() != alpha.len() {
            return Err(FatgraphError::SizeMismatch);
        }
        if !alpha.is_fixed_point_free_involution() {
            return Err(FatgraphError::BadAlpha);
        }
        let gamma = alpha.compose(&sigma);
        Ok(Fatgraph {
            sigma,
            alpha,
            gamma,
        })
    }

    /// Collapses the backbone of a matching into one vertex. Half-edge `h`
    /// is backbone position `h + 1`, so `σ = (0 1 .. 2n-1)`.
    pub fn from_matching(m: &Diagram) -> Result<Self, FatgraphError> {
        let n = m.len();
        let mut alpha = vec![0; n];
        for (v, a) in alpha.iter_mut().enumerate() {
            *a = m.partner(v + 1).ok_or(FatgraphError::NotMatching(v + 1))? - 1;
        }
        Fatgraph::new(
            Permutation::full_cycle(n),
            Permutation::from_images(alpha).expect("partner table is a bijection"),
        )
    }

    /// As [`Fatgraph::from_matching`] but with the rainbow included: half-edge
    /// `h` is backbone position `h` for `0..=2n+1`, and `(0, 2n+1)` is an edge.
    pub fn with_rainbow(m: &Diagram) -> Result<Self, FatgraphError> {
        let n = m.len();
        let mut alpha = vec![0; n + 2];
        alpha[0] = n + 1;
        alpha[n + 1] = 0;
        for (v, a) in alpha.iter_mut().enumerate().take(n + 1).skip(1) {
            *a = m.partner(v).ok_or(FatgraphError::NotMatching(v))?;
        }
        Fatgraph::new(
            Permutation::full_cycle(n + 2),
            Permutation::from_images(alpha).expect("partner table is a bijection"),
        )
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn alpha(&self) -> &Permutation {
        &self.alpha
    }

    pub fn gamma(&self) -> &Permutation {
        &self.gamma
    }

    pub fn half_edges(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.half_edges();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(h) = stack.pop() {
            for x in [self.sigma.apply(h), self.alpha.apply(h)] {
                if !seen[x] {
                    seen[x] = true;
                    count += 1;
                    stack.push(x);
                }
            }
        }
        count == n
    }

    pub fn genus(&self) -> Result<GenusReport, FatgraphError> {
        if !self.is_connected() {
            return Err(FatgraphError::Disconnected);
        }
        let n = self.half_edges();
        if n == 0 {
            // the empty matching: one disc, no ribbons, one boundary
            return Ok(GenusReport {
                v: 1,
                e: 0,
                r: 1,
                chi: 2,
                g: 0,
            });
        }
        let v = self.sigma.cycle_count();
        let e = n / 2;
        let r = self.gamma.cycle_count();
        let chi = v as i64 - e as i64 + r as i64;
        debug_assert!(chi <= 2 && chi % 2 == 0);
        let g = ((2 - chi) / 2) as usize;
        Ok(GenusReport { v, e, r, chi, g })
    }

    /// `(H, α∘σ, α)`: vertices and boundary components trade places.
    pub fn poincare_dual(&self) -> Fatgraph {
        Fatgraph {
            sigma: self.gamma.clone(),
            alpha: self.alpha.clone(),
            gamma: self.sigma.clone(),
        }
    }

    pub fn boundary_components(&self) -> Vec<Vec<usize>> {
        self.gamma.cycles()
    }
}
