//! Labeled planar trees and noncrossing diagrams encoding blueprints.
//!
//! Coordinate `s` (1-based) of a [`Label`] records the `s`-th slicing. The
//! pipeline uses the rainbow convention of [`UnicellularMap::dual_of_matching`]:
//! the leaf `2n+1` is the root and never carries a label, while the vertex
//! containing half-edge `0` transfers its label to the rainbow arc.

use crate::diagram::{Base, Diagram, DiagramError, IndexMap, Sequence};
use crate::unicellular::{Blueprint, UnicellularError, UnicellularMap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Maximum number of slicings a label can record.
pub const MAX_LEVELS: usize = 16;

/// A vector in `F_2^r`; bit `s-1` holds coordinate `s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(pub u32);

impl Label {
    pub const ZERO: Label = Label(0);

    pub fn unit(s: usize) -> Label {
        Label(1 << (s - 1))
    }

    #[inline]
    pub fn has(self, s: usize) -> bool {
        self.0 >> (s - 1) & 1 == 1
    }

    pub fn with(self, s: usize) -> Label {
        Label(self.0 | 1 << (s - 1))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn weight(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Smallest set coordinate.
    pub fn min_coord(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize + 1)
    }

    /// Keeps coordinates `1..s`.
    pub fn below(self, s: usize) -> Label {
        Label(self.0 & ((1u32 << (s - 1)) - 1))
    }

    pub fn fits(self, r: usize) -> bool {
        r >= 32 || self.0 >> r == 0
    }

    /// `b_1 b_2 .. b_r` as a string of `0`/`1`.
    pub fn bits(self, r: usize) -> String {
        (1..=r).map(|s| if self.has(s) { '1' } else { '0' }).collect()
    }

    pub fn parse_bits(text: &str) -> Option<Label> {
        let mut v = 0u32;
        for (k, c) in text.chars().enumerate() {
            if k >= MAX_LEVELS {
                return None;
            }
            match c {
                '0' => {}
                '1' => v |= 1 << k,
                _ => return None,
            }
        }
        Some(Label(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LambdaError {
    #[error(transparent)]
    Unicellular(#[from] UnicellularError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("blueprint does not start at the given map")]
    ForeignBlueprint,
    #[error("tree has genus {0}, expected 0")]
    NotPlanar(usize),
    #[error("root half-edge does not lead to a leaf")]
    NotRainbowRooted,
    #[error("root carries a nonzero label")]
    RootLabeled,
    #[error("coordinate {level} is set on {count} elements, need an odd number at least 3")]
    BadCoordinateCount { level: usize, count: usize },
    #[error("element at {at} has coordinate {level} set but is not transitional for it")]
    NotTransitional { at: usize, level: usize },
    #[error("label uses coordinates beyond r = {0}")]
    LabelWidth(usize),
    #[error("at most {MAX_LEVELS} slicings are supported")]
    TooManyLevels,
    #[error("diagram has crossing arcs")]
    Crossing,
    #[error("sequence length {got} does not match backbone length {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// A planar tree with one label per vertex, stored on every half-edge of
/// that vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaTree {
    map: UnicellularMap,
    labels: Vec<Label>,
    r: usize,
}

impl LambdaTree {
    /// Assembles a tree from per-vertex labels given by γ-minimum half-edge.
    pub fn new(
        map: UnicellularMap,
        vertex_labels: &[(usize, Label)],
        r: usize,
    ) -> Result<Self, LambdaError> {
        if r > MAX_LEVELS {
            return Err(LambdaError::TooManyLevels);
        }
        let mut labels = vec![Label::ZERO; map.half_edges()];
        for &(v, l) in vertex_labels {
            for h in map.vertex(v) {
                labels[h] = l;
            }
        }
        let t = LambdaTree { map, labels, r };
        t.validate()?;
        Ok(t)
    }

    pub fn map(&self) -> &UnicellularMap {
        &self.map
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn label(&self, h: usize) -> Label {
        self.labels[h]
    }

    /// `(γ-minimum, label)` for every vertex, in tour order.
    pub fn vertex_labels(&self) -> Vec<(usize, Label)> {
        self.map
            .vertex_mins()
            .into_iter()
            .map(|v| (v, self.labels[v]))
            .collect()
    }

    /// Total number of set coordinates, `2g + r`.
    pub fn mass(&self) -> usize {
        self.vertex_labels().iter().map(|(_, l)| l.weight()).sum()
    }

    pub fn genus(&self) -> usize {
        (self.mass() - self.r) / 2
    }

    fn root_leaf(&self) -> Option<usize> {
        if self.map.half_edges() == 0 {
            return None;
        }
        let h = self.map.alpha().apply(0);
        (self.map.sigma().apply(h) == h).then_some(h)
    }

    /// Checks planarity, the root, and the label conditions.
    pub fn validate(&self) -> Result<(), LambdaError> {
        let g = self.map.genus();
        if g != 0 {
            return Err(LambdaError::NotPlanar(g));
        }
        let root = self.root_leaf().ok_or(LambdaError::NotRainbowRooted)?;
        if !self.labels[root].is_zero() {
            return Err(LambdaError::RootLabeled);
        }
        let items: Vec<(usize, Label)> = self
            .vertex_labels()
            .into_iter()
            .map(|(v, l)| (self.map.rank(v), l))
            .collect();
        check_labels(&items, self.r)
    }
}

/// Label conditions over elements given as `(tour position, label)` in
/// increasing position order.
fn check_labels(items: &[(usize, Label)], r: usize) -> Result<(), LambdaError> {
    if items.iter().any(|&(_, l)| !l.fits(r)) {
        return Err(LambdaError::LabelWidth(r));
    }
    for level in 1..=r {
        let mut first = None;
        let mut count = 0;
        for &(at, l) in items {
            if l.has(level) {
                count += 1;
                first.get_or_insert(at);
            }
        }
        if count % 2 == 0 || count < 3 {
            return Err(LambdaError::BadCoordinateCount { level, count });
        }
        for &(at, l) in items {
            if l.has(level) && l.min_coord() != Some(level) && Some(at) != first {
                return Err(LambdaError::NotTransitional { at, level });
            }
        }
    }
    Ok(())
}

/// Builds the λ-tree of a blueprint: every vertex created by the `s`-th
/// slicing inherits its parent's label plus coordinate `s`, then labels of
/// non-transitional vertices are reduced level by level.
pub fn tree_from_blueprint(u: &UnicellularMap, p: &Blueprint) -> Result<LambdaTree, LambdaError> {
    if p.start() != u {
        return Err(LambdaError::ForeignBlueprint);
    }
    if !p.is_complete() {
        return Err(LambdaError::NotPlanar(p.tree().genus()));
    }
    let r = p.r();
    if r > MAX_LEVELS {
        return Err(LambdaError::TooManyLevels);
    }
    let mut labels = vec![Label::ZERO; u.half_edges()];
    for (i, step) in p.steps.iter().enumerate() {
        let s = i + 1;
        let inherited = labels[step.tau];
        let next = &p.maps[i + 1];
        for &v in &step.vertices {
            for h in next.vertex(v) {
                labels[h] = inherited.with(s);
            }
        }
    }
    let tree = p.tree().clone();
    let mins = tree.vertex_mins();
    for level in (2..=r).rev() {
        let mut seen_first = false;
        for &v in &mins {
            if !labels[v].has(level) {
                continue;
            }
            if !seen_first {
                seen_first = true;
                continue;
            }
            let keep = Label(labels[v].0 & !((1u32 << (level - 1)) - 1));
            for h in tree.vertex(v) {
                labels[h] = keep;
            }
        }
    }
    let t = LambdaTree {
        map: tree,
        labels,
        r,
    };
    debug_assert_eq!(t.validate(), Ok(()));
    Ok(t)
}

/// Inverse of [`tree_from_blueprint`]: glues the vertices carrying the top
/// coordinate, level by level, recovering the start map and its blueprint.
pub fn tree_to_blueprint(t: &LambdaTree) -> Result<(UnicellularMap, Blueprint), LambdaError> {
    t.validate()?;
    let mut map = t.map.clone();
    let mut labels = t.labels.clone();
    let mut taus = Vec::with_capacity(t.r);
    for level in (1..=t.r).rev() {
        let vs: Vec<usize> = map
            .vertex_mins()
            .into_iter()
            .filter(|&v| labels[v].has(level))
            .collect();
        let mut sum = Label::ZERO;
        for &v in &vs {
            sum = Label(sum.0 ^ labels[v].below(level).0);
        }
        let (glued, tau) = map.glue(&vs)?;
        for h in glued.vertex(tau) {
            labels[h] = sum;
        }
        taus.push(tau);
        map = glued;
    }
    taus.reverse();
    let bp = Blueprint::from_trisections(&map, &taus)?;
    debug_assert!(bp.tree() == &t.map);
    Ok((map, bp))
}

/// A noncrossing diagram whose arcs (and the rainbow) carry labels in
/// `F_2^r`. A λ-matching is the case without unpaired vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LambdaStructure {
    diagram: Diagram,
    rainbow: Label,
    labels: Vec<Label>,
    r: usize,
}

/// A [`LambdaStructure`] without unpaired vertices.
pub type LambdaMatching = LambdaStructure;

impl LambdaStructure {
    /// `arcs` lists `(i, j, label)` for every arc of `diagram`.
    pub fn new(
        diagram: Diagram,
        rainbow: Label,
        arcs: &[(usize, usize, Label)],
        r: usize,
    ) -> Result<Self, LambdaError> {
        if r > MAX_LEVELS {
            return Err(LambdaError::TooManyLevels);
        }
        if !diagram.is_noncrossing() {
            return Err(LambdaError::Crossing);
        }
        let mut labels = vec![Label::ZERO; diagram.len()];
        for &(i, j, l) in arcs {
            if diagram.partner(i) != Some(j) {
                return Err(LambdaError::Diagram(DiagramError::BadArc(i, j)));
            }
            labels[i - 1] = l;
            labels[j - 1] = l;
        }
        let s = LambdaStructure {
            diagram,
            rainbow,
            labels,
            r,
        };
        s.validate()?;
        Ok(s)
    }

    /// An unlabeled secondary structure (`r = 0`).
    pub fn unlabeled(diagram: Diagram) -> Result<Self, LambdaError> {
        LambdaStructure::new(diagram, Label::ZERO, &[], 0)
    }

    pub fn diagram(&self) -> &Diagram {
        &self.diagram
    }

    pub fn len(&self) -> usize {
        self.diagram.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagram.is_empty()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn rainbow(&self) -> Label {
        self.rainbow
    }

    /// Label of the arc through vertex `v` (zero for unpaired vertices).
    #[inline]
    pub fn label_at(&self, v: usize) -> Label {
        self.labels[v - 1]
    }

    pub fn labeled_arcs(&self) -> Vec<(usize, usize, Label)> {
        self.diagram
            .arcs()
            .into_iter()
            .map(|(i, j)| (i, j, self.labels[i - 1]))
            .collect()
    }

    pub fn mass(&self) -> usize {
        self.rainbow.weight()
            + self
                .labeled_arcs()
                .iter()
                .map(|&(_, _, l)| l.weight())
                .sum::<usize>()
    }

    pub fn genus(&self) -> usize {
        (self.mass() - self.r) / 2
    }

    /// Label conditions read on arcs ordered by left endpoint, the rainbow
    /// first.
    pub fn validate(&self) -> Result<(), LambdaError> {
        let mut items = vec![(0, self.rainbow)];
        items.extend(self.labeled_arcs().into_iter().map(|(i, _, l)| (i, l)));
        check_labels(&items, self.r)
    }

    /// Removes unpaired vertices.
    pub fn to_matching(&self) -> (LambdaMatching, IndexMap) {
        let (m, idx) = self.diagram.to_matching();
        let labels = (1..=self.len())
            .filter(|&v| self.diagram.partner(v).is_some())
            .map(|v| self.labels[v - 1])
            .collect();
        (
            LambdaStructure {
                diagram: m,
                rainbow: self.rainbow,
                labels,
                r: self.r,
            },
            idx,
        )
    }
}

/// Inserts unpaired vertices into a λ-matching.
pub fn lambda_structure(m: &LambdaMatching, idx: &IndexMap) -> Result<LambdaStructure, LambdaError> {
    let diagram = idx.insert_unpaired(&m.diagram)?;
    let mut labels = vec![Label::ZERO; diagram.len()];
    let mut pos = idx.get(0);
    for j in 1..=m.len() {
        pos += 1;
        labels[pos - 1] = m.labels[j - 1];
        pos += idx.get(j);
    }
    Ok(LambdaStructure {
        diagram,
        rainbow: m.rainbow,
        labels,
        r: m.r,
    })
}

/// Dual of a rainbow-rooted λ-tree: tour positions become backbone
/// positions, and each vertex's label moves to the arc through which the
/// tour first enters it.
pub fn tree_to_matching(t: &LambdaTree) -> Result<LambdaMatching, LambdaError> {
    t.validate()?;
    let map = &t.map;
    let total = map.half_edges();
    let n = total - 2;
    let mut partner = vec![None; n];
    let mut labels = vec![Label::ZERO; n];
    for h in 0..total {
        let (p, q) = (map.rank(h), map.rank(map.alpha().apply(h)));
        if p == 0 || q == 0 {
            continue;
        }
        partner[p - 1] = Some(q);
    }
    for (v, l) in t.vertex_labels() {
        let p = map.rank(v);
        if p >= 1 && p <= n {
            labels[p - 1] = l;
            let q = partner[p - 1].expect("tree vertex entered through an arc");
            labels[q - 1] = l;
        }
    }
    Ok(LambdaStructure {
        diagram: Diagram::from_partners(partner)?,
        rainbow: t.labels[0],
        labels,
        r: t.r,
    })
}

/// The λ-tree dual to a λ-matching.
pub fn matching_to_tree(m: &LambdaMatching) -> Result<LambdaTree, LambdaError> {
    if !m.diagram.is_matching() {
        return Err(LambdaError::Diagram(DiagramError::NotMatching(
            m.diagram.partners().iter().position(Option::is_none).unwrap() + 1,
        )));
    }
    let map = UnicellularMap::dual_of_matching(&m.diagram)?;
    let n = m.len();
    let mut vl = vec![(0, m.rainbow)];
    for v in map.vertex_mins() {
        if v >= 1 && v <= n {
            vl.push((v, m.labels[v - 1]));
        }
    }
    LambdaTree::new(map, &vl, m.r)
}

/// Backbone permutation of a blueprint: position `h` of the matching
/// (`0..=2n+1`, rainbow ends included) moves to `rho[h]` in the λ-matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BackbonePermutation {
    rho: Vec<usize>,
}

impl BackbonePermutation {
    pub fn identity(matching_len: usize) -> Self {
        BackbonePermutation {
            rho: (0..matching_len + 2).collect(),
        }
    }

    pub fn from_images(rho: Vec<usize>) -> Self {
        BackbonePermutation { rho }
    }

    #[inline]
    pub fn apply(&self, h: usize) -> usize {
        self.rho[h]
    }

    pub fn images(&self) -> &[usize] {
        &self.rho
    }

    pub fn inverse(&self) -> BackbonePermutation {
        let mut inv = vec![0; self.rho.len()];
        for (h, &p) in self.rho.iter().enumerate() {
            inv[p] = h;
        }
        BackbonePermutation { rho: inv }
    }

    /// Moves gap counts along with their positions: `I'(ρ(h)) = I(h)`.
    pub fn transform_index_map(&self, idx: &IndexMap) -> IndexMap {
        let mut out = vec![0; idx.counts().len()];
        for (h, &c) in idx.counts().iter().enumerate() {
            out[self.rho[h]] = c;
        }
        IndexMap::new(out)
    }

    /// Full-backbone position map: vertex `k` (1-based) of the diagram with
    /// gaps `idx` moves to `map[k-1]` in the permuted diagram. A paired
    /// vertex carries the unpaired vertices that follow it.
    pub fn position_map(&self, idx: &IndexMap) -> Vec<usize> {
        let m = idx.counts().len() - 1;
        let inv = self.inverse();
        // start of each block in the permuted backbone
        let mut start = vec![0; m + 1];
        let mut pos = 0;
        for q in 0..=m {
            let h = inv.rho[q];
            start[h] = pos;
            pos += idx.get(h) + usize::from(h > 0);
        }
        let mut out = Vec::with_capacity(pos);
        for h in 0..=m {
            let base = start[h] + usize::from(h > 0);
            if h > 0 {
                out.push(start[h] + 1);
            }
            for k in 0..idx.get(h) {
                out.push(base + k + 1);
            }
        }
        out
    }

    /// `θ ↦ θ_p` for a sequence on the diagram with gaps `idx`.
    pub fn permute_sequence(&self, idx: &IndexMap, seq: &Sequence) -> Sequence {
        let map = self.position_map(idx);
        let mut out = vec![Base::A; seq.len()];
        for (k, &b) in seq.bases().iter().enumerate() {
            out[map[k] - 1] = b;
        }
        Sequence(out)
    }
}

/// Where each matching position ends up after all slicings of `p`.
pub fn backbone_permutation(p: &Blueprint) -> BackbonePermutation {
    let (start, tree) = (p.start(), p.tree());
    let mut rho = vec![0; start.half_edges()];
    for h in 0..start.half_edges() {
        rho[start.rank(h)] = tree.rank(h);
    }
    BackbonePermutation { rho }
}

/// Forward pipeline: pk-structure and blueprint to λ-structure.
pub fn lambda_from_pk(d: &Diagram, p: &Blueprint) -> Result<LambdaStructure, LambdaError> {
    let (m, idx) = d.to_matching();
    let u = UnicellularMap::dual_of_matching(&m)?;
    let tree = tree_from_blueprint(&u, p)?;
    let lm = tree_to_matching(&tree)?;
    let rho = backbone_permutation(p);
    lambda_structure(&lm, &rho.transform_index_map(&idx))
}

/// Forward pipeline including the sequence, which is permuted along with
/// the backbone.
pub fn lambda_from_pk_with_sequence(
    d: &Diagram,
    p: &Blueprint,
    seq: &Sequence,
) -> Result<(LambdaStructure, Sequence), LambdaError> {
    if seq.len() != d.len() {
        return Err(LambdaError::LengthMismatch {
            got: seq.len(),
            expected: d.len(),
        });
    }
    let s = lambda_from_pk(d, p)?;
    let (_, idx) = d.to_matching();
    Ok((s, backbone_permutation(p).permute_sequence(&idx, seq)))
}

/// Inverse pipeline: λ-structure to pk-structure and blueprint.
pub fn pk_from_lambda(s: &LambdaStructure) -> Result<(Diagram, Blueprint), LambdaError> {
    let (lm, lidx) = s.to_matching();
    let tree = matching_to_tree(&lm)?;
    let (mg, bp) = tree_to_blueprint(&tree)?;
    let total = mg.half_edges();
    let n = total - 2;
    // λ-half-edge h sits at position rank(h) of the pk matching
    let pos = |h: usize| mg.rank(h);
    let mut partner = vec![None; n];
    for h in 1..=n {
        partner[pos(h) - 1] = Some(pos(mg.alpha().apply(h)));
    }
    let pk_matching = Diagram::from_partners(partner)?;
    let mut counts = vec![0; n + 1];
    for h in 0..=n {
        counts[pos(h)] = lidx.get(h);
    }
    let pk = IndexMap::new(counts).insert_unpaired(&pk_matching)?;
    let canonical = UnicellularMap::dual_of_matching(&pk_matching)?;
    let taus: Vec<usize> = bp.trisection_sequence().into_iter().map(pos).collect();
    let canonical_bp = Blueprint::from_trisections(&canonical, &taus)?;
    Ok((pk, canonical_bp))
}

/// Inverse pipeline including the sequence.
pub fn pk_from_lambda_with_sequence(
    s: &LambdaStructure,
    seq: &Sequence,
) -> Result<(Diagram, Blueprint, Sequence), LambdaError> {
    if seq.len() != s.len() {
        return Err(LambdaError::LengthMismatch {
            got: seq.len(),
            expected: s.len(),
        });
    }
    let (d, bp) = pk_from_lambda(s)?;
    let (_, idx) = d.to_matching();
    let map = backbone_permutation(&bp).position_map(&idx);
    let out = (0..d.len()).map(|k| seq.bases()[map[k] - 1]).collect();
    Ok((d, bp, Sequence(out)))
}
