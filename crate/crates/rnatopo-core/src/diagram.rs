//! Diagrams over a linear backbone, bracket notation, and the classic
//! secondary-structure count.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_bigint::BigUint;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagramError {
    #[error("arc ({0},{1}) is not of the form 1 <= i < j <= n")]
    BadArc(usize, usize),
    #[error("vertex {0} is claimed by two arcs")]
    VertexReused(usize),
    #[error("illegal character {0:?} at position {1}")]
    IllegalChar(char, usize),
    #[error("unbalanced bracket {0:?} at position {1}")]
    Unbalanced(char, usize),
    #[error("structure needs {0} bracket families, only {max} are available", max = FAMILIES)]
    TooManyFamilies(usize),
    #[error("index map has {got} gaps, expected {expected}")]
    IndexMapShape { got: usize, expected: usize },
    #[error("expected a matching but vertex {0} is unpaired")]
    NotMatching(usize),
    #[error("illegal nucleotide {0:?} at position {1}")]
    IllegalBase(char, usize),
}

/// Number of bracket families available to the extended dot-bracket format.
pub const FAMILIES: usize = 30;

fn family_chars(k: usize) -> (char, char) {
    match k {
        0 => ('(', ')'),
        1 => ('[', ']'),
        2 => ('{', '}'),
        3 => ('<', '>'),
        _ => {
            let c = b'A' + (k - 4) as u8;
            (c as char, (c + 32) as char)
        }
    }
}

/// `(family, is_open)` for a bracket character.
fn classify(c: char) -> Option<(usize, bool)> {
    match c {
        '(' => Some((0, true)),
        ')' => Some((0, false)),
        '[' => Some((1, true)),
        ']' => Some((1, false)),
        '{' => Some((2, true)),
        '}' => Some((2, false)),
        '<' => Some((3, true)),
        '>' => Some((3, false)),
        'A'..='Z' => Some((4 + (c as usize - 'A' as usize), true)),
        'a'..='z' => Some((4 + (c as usize - 'a' as usize), false)),
        _ => None,
    }
}

/// Backbone vertices `1..=n` with arcs; each vertex lies on at most one arc.
/// The rainbow `(0, n+1)` is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagram {
    partner: Vec<Option<usize>>,
}

impl Diagram {
    pub fn empty(n: usize) -> Self {
        Diagram {
            partner: vec![None; n],
        }
    }

    pub fn new(n: usize, arcs: &[(usize, usize)]) -> Result<Self, DiagramError> {
        let mut partner = vec![None; n];
        for &(i, j) in arcs {
            if i == 0 || i >= j || j > n {
                return Err(DiagramError::BadArc(i, j));
            }
            for v in [i, j] {
                if partner[v - 1].is_some() {
                    return Err(DiagramError::VertexReused(v));
                }
            }
            partner[i - 1] = Some(j);
            partner[j - 1] = Some(i);
        }
        Ok(Diagram { partner })
    }

    /// Builds a diagram from a 1-based partner table (index `p-1` holds the
    /// partner of `p`).
    pub fn from_partners(partner: Vec<Option<usize>>) -> Result<Self, DiagramError> {
        let n = partner.len();
        for (k, p) in partner.iter().enumerate() {
            if let Some(q) = *p {
                if q == 0 || q > n || q == k + 1 || partner[q - 1] != Some(k + 1) {
                    return Err(DiagramError::BadArc(k + 1, q));
                }
            }
        }
        Ok(Diagram { partner })
    }

    pub fn len(&self) -> usize {
        self.partner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partner.is_empty()
    }

    /// Partner of the 1-based vertex `v`.
    #[inline]
    pub fn partner(&self, v: usize) -> Option<usize> {
        self.partner[v - 1]
    }

    pub fn partners(&self) -> &[Option<usize>] {
        &self.partner
    }

    /// Arcs `(i, j)`, `i < j`, ordered by left endpoint.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(k, p)| match *p {
                Some(j) if j > k + 1 => Some((k + 1, j)),
                _ => None,
            })
            .collect()
    }

    pub fn arc_count(&self) -> usize {
        self.partner.iter().filter(|p| p.is_some()).count() / 2
    }

    pub fn is_matching(&self) -> bool {
        self.partner.iter().all(Option::is_some)
    }

    /// Pairs `((i,j),(r,s))` with `i < r < j < s`.
    pub fn crossing_pairs(&self) -> Vec<((usize, usize), (usize, usize))> {
        let arcs = self.arcs();
        let mut out = Vec::new();
        for (a, &(i, j)) in arcs.iter().enumerate() {
            for &(r, s) in &arcs[a + 1..] {
                if r > j {
                    break;
                }
                if r < j && j < s {
                    out.push(((i, j), (r, s)));
                }
            }
        }
        out
    }

    pub fn is_noncrossing(&self) -> bool {
        let mut stack = Vec::new();
        for (k, p) in self.partner.iter().enumerate() {
            match *p {
                Some(j) if j > k + 1 => stack.push(j),
                Some(_) => {
                    if stack.pop() != Some(k + 1) {
                        return false;
                    }
                }
                None => {}
            }
        }
        true
    }

    /// Parses extended dot-bracket text.
    pub fn parse(text: &str) -> Result<Self, DiagramError> {
        let chars: Vec<char> = text.chars().collect();
        let mut partner = vec![None; chars.len()];
        let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); FAMILIES];
        for (k, &c) in chars.iter().enumerate() {
            let pos = k + 1;
            if c == '.' {
                continue;
            }
            let (fam, open) = classify(c).ok_or(DiagramError::IllegalChar(c, pos))?;
            if open {
                stacks[fam].push(pos);
            } else {
                let i = stacks[fam].pop().ok_or(DiagramError::Unbalanced(c, pos))?;
                partner[i - 1] = Some(pos);
                partner[pos - 1] = Some(i);
            }
        }
        for (fam, st) in stacks.iter().enumerate() {
            if let Some(&pos) = st.last() {
                return Err(DiagramError::Unbalanced(family_chars(fam).0, pos));
            }
        }
        Ok(Diagram { partner })
    }

    /// Extended dot-bracket text; each arc gets the first family in which it
    /// crosses no arc already placed.
    pub fn to_dot_bracket(&self) -> Result<String, DiagramError> {
        let arcs = self.arcs();
        let mut fams: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut out: Vec<char> = vec!['.'; self.len()];
        let mut needed = 0;
        for &(i, j) in &arcs {
            let slot = fams
                .iter()
                .position(|f| f.iter().all(|&(r, s)| !(r < i && i < s && s < j)));
            let k = match slot {
                Some(k) => k,
                None => {
                    fams.push(Vec::new());
                    fams.len() - 1
                }
            };
            fams[k].push((i, j));
            needed = needed.max(k + 1);
            if k < FAMILIES {
                let (o, c) = family_chars(k);
                out[i - 1] = o;
                out[j - 1] = c;
            }
        }
        if needed > FAMILIES {
            return Err(DiagramError::TooManyFamilies(needed));
        }
        Ok(out.into_iter().collect())
    }

    /// Removes unpaired vertices, returning the matching and the counts of
    /// unpaired vertices following each matching position (position 0 being
    /// the rainbow's left end).
    pub fn to_matching(&self) -> (Diagram, IndexMap) {
        let mut newpos = vec![0; self.len()];
        let mut counts = vec![0usize];
        let mut m = 0;
        for (k, p) in self.partner.iter().enumerate() {
            if p.is_some() {
                m += 1;
                newpos[k] = m;
                counts.push(0);
            } else {
                *counts.last_mut().unwrap() += 1;
            }
        }
        let mut partner = vec![None; m];
        for (k, p) in self.partner.iter().enumerate() {
            if let Some(q) = *p {
                partner[newpos[k] - 1] = Some(newpos[q - 1]);
            }
        }
        (Diagram { partner }, IndexMap { counts })
    }

    /// Vertices paired in `self` as a sorted list (1-based).
    pub fn paired_vertices(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&v| self.partner(v).is_some()).collect()
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_dot_bracket() {
            Ok(s) => f.write_str(&s),
            Err(e) => write!(f, "<{e}>"),
        }
    }
}

/// Number of unpaired vertices following each position `0..=2m` of a matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexMap {
    counts: Vec<usize>,
}

impl IndexMap {
    pub fn new(counts: Vec<usize>) -> Self {
        assert!(!counts.is_empty(), "index map needs the rainbow gap");
        IndexMap { counts }
    }

    pub fn zero(matching_len: usize) -> Self {
        IndexMap {
            counts: vec![0; matching_len + 1],
        }
    }

    #[inline]
    pub fn get(&self, j: usize) -> usize {
        self.counts[j]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Inserts `I(j)` unpaired vertices after matching position `j`.
    pub fn insert_unpaired(&self, m: &Diagram) -> Result<Diagram, DiagramError> {
        if self.counts.len() != m.len() + 1 {
            return Err(DiagramError::IndexMapShape {
                got: self.counts.len(),
                expected: m.len() + 1,
            });
        }
        let mut newpos = vec![0; m.len() + 1];
        let mut pos = self.counts[0];
        for j in 1..=m.len() {
            pos += 1;
            newpos[j] = pos;
            pos += self.counts[j];
        }
        let mut partner = vec![None; pos];
        for j in 1..=m.len() {
            let q = m.partner(j).ok_or(DiagramError::NotMatching(j))?;
            partner[newpos[j] - 1] = Some(newpos[q]);
        }
        Ok(Diagram { partner })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    A,
    C,
    G,
    U,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::C, Base::G, Base::U];

    pub fn from_char(c: char) -> Option<Base> {
        match c {
            'A' => Some(Base::A),
            'C' => Some(Base::C),
            'G' => Some(Base::G),
            'U' => Some(Base::U),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Base::A => 'A',
            Base::C => 'C',
            Base::G => 'G',
            Base::U => 'U',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A nucleotide sequence over `{A, C, G, U}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequence(pub Vec<Base>);

impl Sequence {
    pub fn parse(text: &str) -> Result<Self, DiagramError> {
        text.chars()
            .enumerate()
            .map(|(k, c)| Base::from_char(c).ok_or(DiagramError::IllegalBase(c, k + 1)))
            .collect::<Result<Vec<_>, _>>()
            .map(Sequence)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bases(&self) -> &[Base] {
        &self.0
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.to_char())?;
        }
        Ok(())
    }
}

/// Number of noncrossing diagrams on `n` vertices whose arcs `(i,j)` all
/// enclose at least `min_hairpin` vertices (`j - i - 1 >= min_hairpin`).
pub fn count_secondary(n: usize, min_hairpin: usize) -> BigUint {
    let mut s: Vec<BigUint> = Vec::with_capacity(n + 1);
    for len in 0..=n {
        if len < min_hairpin + 2 {
            s.push(BigUint::from(1u32));
            continue;
        }
        // last vertex unpaired, or paired with vertex j+1
        let mut v = s[len - 1].clone();
        for j in 0..=len - 2 - min_hairpin {
            v += &s[len - 2 - j] * &s[j];
        }
        s.push(v);
    }
    s.pop().unwrap()
}
