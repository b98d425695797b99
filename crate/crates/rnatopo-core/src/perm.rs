//! Permutations of a finite ground set `{0, .., n-1}`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PermError {
    #[error("image {0} is outside the ground set of size {1}")]
    OutOfRange(usize, usize),
    #[error("element {0} has two preimages")]
    NotBijective(usize),
}

/// A permutation stored as its image array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    img: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            img: (0..n).collect(),
        }
    }

    pub fn from_images(img: Vec<usize>) -> Result<Self, PermError> {
        let n = img.len();
        let mut seen = vec![false; n];
        for &x in &img {
            if x >= n {
                return Err(PermError::OutOfRange(x, n));
            }
            if seen[x] {
                return Err(PermError::NotBijective(x));
            }
            seen[x] = true;
        }
        Ok(Permutation { img })
    }

    /// Builds a permutation of `{0, .., n-1}` from disjoint cycles; elements
    /// not mentioned are fixed.
    pub fn from_cycles(n: usize, cycles: &[&[usize]]) -> Result<Self, PermError> {
        let mut img: Vec<usize> = (0..n).collect();
        let mut seen = vec![false; n];
        for c in cycles {
            for (k, &x) in c.iter().enumerate() {
                if x >= n {
                    return Err(PermError::OutOfRange(x, n));
                }
                if seen[x] {
                    return Err(PermError::NotBijective(x));
                }
                seen[x] = true;
                img[x] = c[(k + 1) % c.len()];
            }
        }
        Ok(Permutation { img })
    }

    /// The full cycle `(0 1 .. n-1)`.
    pub fn full_cycle(n: usize) -> Self {
        Permutation {
            img: (0..n).map(|i| (i + 1) % n.max(1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.img.len()
    }

    pub fn is_empty(&self) -> bool {
        self.img.is_empty()
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.img[x]
    }

    pub fn images(&self) -> &[usize] {
        &self.img
    }

    /// `self ∘ other`, i.e. `x ↦ self(other(x))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len(), "ground sets differ");
        Permutation {
            img: other.img.iter().map(|&x| self.img[x]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (x, &y) in self.img.iter().enumerate() {
            inv[y] = x;
        }
        Permutation { img: inv }
    }

    /// Cycles with their minimum element first, sorted by minimum.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut c = Vec::new();
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                c.push(x);
                x = self.img[x];
            }
            out.push(c);
        }
        out
    }

    pub fn cycle_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.img[x];
            }
        }
        count
    }

    pub fn is_fixed_point_free_involution(&self) -> bool {
        self.img
            .iter()
            .enumerate()
            .all(|(x, &y)| y != x && self.img[y] == x)
    }

    /// Cycle notation with every element shifted by `offset`, e.g.
    /// `(1,5,9)(2,8,6,4)(3,7)(10)` for `offset = 1`.
    pub fn cycle_notation(&self, offset: usize) -> String {
        let mut s = String::new();
        for c in self.cycles() {
            s.push('(');
            for (k, x) in c.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", x + offset);
            }
            s.push(')');
        }
        s
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cycle_notation(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_applies_right_factor_first() {
        let a = Permutation::from_cycles(3, &[&[0, 1]]).unwrap();
        let b = Permutation::from_cycles(3, &[&[1, 2]]).unwrap();
        // a(b(1)) = a(2) = 2
        assert_eq!(a.compose(&b).apply(1), 2);
        assert_eq!(a.compose(&b).apply(2), 0);
        assert_eq!(a.compose(&b).apply(0), 1);
    }

    #[test]
    fn inverse_and_cycles() {
        let p = Permutation::from_cycles(5, &[&[3, 0, 4], &[2, 1]]).unwrap();
        assert_eq!(p.compose(&p.inverse()), Permutation::identity(5));
        assert_eq!(p.cycles(), vec![vec![0, 4, 3], vec![1, 2]]);
        assert_eq!(p.cycle_notation(1), "(1,5,4)(2,3)");
        assert_eq!(p.cycle_count(), 2);
    }

    #[test]
    fn rejects_non_bijection() {
        assert!(Permutation::from_images(vec![0, 0]).is_err());
        assert!(Permutation::from_images(vec![2, 0]).is_err());
        assert!(Permutation::from_cycles(3, &[&[0, 1], &[1, 2]]).is_err());
    }
}
