//! Labeled context-free grammars over λ-structures.
//!
//! Nonterminals carry a signature `(ℓ, t)`: `ℓ_i` is the number of arcs in
//! the derived segment whose label has coordinate `i`, and `t_i = 1` says the
//! transitional arc of level `i` (the leftmost arc with coordinate `i`) lies
//! in the segment. Two grammars share this bookkeeping:
//!
//! * the simple grammar `S → ε | s S | L S`, `L → d S d'`;
//! * the loop grammar, which splits structures into exterior, stacked,
//!   hairpin, interior, bulge and multi loops and emits nucleotides.
//!
//! Both are unambiguous; [`count_parses`] checks this by brute force.

use crate::diagram::{Base, Diagram, Sequence};
use crate::lambda::{Label, LambdaError, LambdaStructure, MAX_LEVELS};
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error("sequence length {got} does not match structure length {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("arc at {at} carries a label the grammar cannot place ({reason})")]
    Label { at: usize, reason: &'static str },
    #[error("structure has genus {genus}, above the cap {cap}")]
    GenusCap { genus: usize, cap: usize },
    #[error("hairpin at {at} encloses {len} vertices, below the minimum {min}")]
    Hairpin { at: usize, len: usize, min: usize },
    #[error("need 1 <= r <= g for g > 0 and r = 0 for g = 0, got g={g}, r={r}")]
    Infeasible { g: usize, r: usize },
    #[error("malformed parse tree")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Simple,
    Loops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Start,
    S,
    L,
    Exterior,
    Weak,
    Stack,
    Hairpin,
    Interior,
    BulgeLeft,
    BulgeRight,
    Multi,
    MLComponent,
    MLComponents,
    SingleStrand,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Start => "Start",
            Kind::S => "S",
            Kind::L => "L",
            Kind::Exterior => "ExteriorLoop",
            Kind::Weak => "Weak",
            Kind::Stack => "Stack",
            Kind::Hairpin => "HairpinLoop",
            Kind::Interior => "InteriorLoop",
            Kind::BulgeLeft => "BulgeLeft",
            Kind::BulgeRight => "BulgeRight",
            Kind::Multi => "MultiLoop",
            Kind::MLComponent => "MLComponent",
            Kind::MLComponents => "MLComponents",
            Kind::SingleStrand => "SingleStrand",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        const ALL: [Kind; 14] = [
            Kind::Start,
            Kind::S,
            Kind::L,
            Kind::Exterior,
            Kind::Weak,
            Kind::Stack,
            Kind::Hairpin,
            Kind::Interior,
            Kind::BulgeLeft,
            Kind::BulgeRight,
            Kind::Multi,
            Kind::MLComponent,
            Kind::MLComponents,
            Kind::SingleStrand,
        ];
        ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A nonterminal with its label signature. For [`Kind::Hairpin`] `ell`
/// holds the closing arc's label as a 0/1 vector and `t` is zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub kind: Kind,
    pub ell: Vec<u8>,
    pub t: u32,
}

impl State {
    pub fn new(kind: Kind, ell: Vec<u8>, t: u32) -> Self {
        State { kind, ell, t }
    }

    pub fn plain(kind: Kind) -> Self {
        State {
            kind,
            ell: Vec::new(),
            t: 0,
        }
    }

    pub fn r(&self) -> usize {
        self.ell.len()
    }

    pub fn is_exhausted(&self) -> bool {
        self.ell.iter().all(|&x| x == 0)
    }

    #[inline]
    pub fn t_has(&self, i: usize) -> bool {
        self.t >> (i - 1) & 1 == 1
    }
}

impl State {
    /// Reads the `Kind[ℓ_1,..,ℓ_r|t_1..t_r]` form written by `Display`.
    pub fn parse(text: &str) -> Option<State> {
        let Some((name, rest)) = text.split_once('[') else {
            return Kind::from_name(text).map(State::plain);
        };
        let kind = Kind::from_name(name)?;
        let (ell, t) = rest.strip_suffix(']')?.split_once('|')?;
        let ell = parse_list(ell)?;
        if t.len() != ell.len() || ell.is_empty() {
            return None;
        }
        let t = Label::parse_bits(t)?.0;
        Some(State { kind, ell, t })
    }
}

fn parse_list(text: &str) -> Option<Vec<u8>> {
    if text.is_empty() {
        return Some(Vec::new());
    }
    text.split(',').map(|x| x.parse().ok()).collect()
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.ell.is_empty() {
            return Ok(());
        }
        f.write_char('[')?;
        for (k, x) in self.ell.iter().enumerate() {
            if k > 0 {
                f.write_char(',')?;
            }
            write!(f, "{x}")?;
        }
        f.write_char('|')?;
        for i in 1..=self.r() {
            f.write_char(if self.t_has(i) { '1' } else { '0' })?;
        }
        f.write_char(']')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Ini,
    Exl1,
    Exl2,
    Exl3,
    St1,
    St2,
    Hl,
    Il,
    Bl,
    Br,
    Ml,
    Hp0,
    Hp1,
    IlIn,
    BlIn,
    BrIn,
    Cs1,
    Cs2,
    Cs3,
    Cs4,
    Co1,
    Co2,
    Ss1,
    Ss2,
    SIni,
    SEps,
    SBase,
    SSplit,
    SArc,
}

const FAMILIES: [Family; 29] = [
    Family::Ini,
    Family::Exl1,
    Family::Exl2,
    Family::Exl3,
    Family::St1,
    Family::St2,
    Family::Hl,
    Family::Il,
    Family::Bl,
    Family::Br,
    Family::Ml,
    Family::Hp0,
    Family::Hp1,
    Family::IlIn,
    Family::BlIn,
    Family::BrIn,
    Family::Cs1,
    Family::Cs2,
    Family::Cs3,
    Family::Cs4,
    Family::Co1,
    Family::Co2,
    Family::Ss1,
    Family::Ss2,
    Family::SIni,
    Family::SEps,
    Family::SBase,
    Family::SSplit,
    Family::SArc,
];

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::Ini => "ini",
            Family::Exl1 => "exl_1",
            Family::Exl2 => "exl_2",
            Family::Exl3 => "exl_3",
            Family::St1 => "st_1",
            Family::St2 => "st_2",
            Family::Hl => "hl",
            Family::Il => "il",
            Family::Bl => "bl",
            Family::Br => "br",
            Family::Ml => "ml",
            Family::Hp0 => "hp_0",
            Family::Hp1 => "hp_1",
            Family::IlIn => "il_in",
            Family::BlIn => "bl_in",
            Family::BrIn => "br_in",
            Family::Cs1 => "cs_1",
            Family::Cs2 => "cs_2",
            Family::Cs3 => "cs_3",
            Family::Cs4 => "cs_4",
            Family::Co1 => "co_1",
            Family::Co2 => "co_2",
            Family::Ss1 => "ss_1",
            Family::Ss2 => "ss_2",
            Family::SIni => "s_ini",
            Family::SEps => "s_eps",
            Family::SBase => "s_base",
            Family::SSplit => "s_split",
            Family::SArc => "s_arc",
        }
    }

    pub fn from_id(s: &str) -> Option<Family> {
        FAMILIES.into_iter().find(|f| f.id() == s)
    }

    /// Nucleotides emitted in loop mode: 0, 1 or 2 (a base pair).
    pub fn emissions(self) -> usize {
        match self {
            Family::Exl2 | Family::Co1 | Family::Ss1 | Family::Ss2 => 1,
            Family::St1
            | Family::St2
            | Family::Hl
            | Family::Il
            | Family::Bl
            | Family::Br
            | Family::Ml => 2,
            _ => 0,
        }
    }
}

/// A production choice for a given left-hand side. `label` is the arc (or
/// rainbow) label, `split` the left share `ρ` of a binary split or the
/// initial `ℓ` of a start rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub family: Family,
    pub label: Label,
    pub split: Vec<u8>,
    pub x: Option<Base>,
    pub y: Option<Base>,
}

impl Rule {
    pub fn new(family: Family) -> Self {
        Rule {
            family,
            label: Label::ZERO,
            split: Vec::new(),
            x: None,
            y: None,
        }
    }

    fn with_label(mut self, l: Label) -> Self {
        self.label = l;
        self
    }

    fn with_split(mut self, s: Vec<u8>) -> Self {
        self.split = s;
        self
    }

    /// The same rule with emissions erased.
    pub fn structural(&self) -> Rule {
        Rule {
            x: None,
            y: None,
            ..self.clone()
        }
    }

    /// `key=value` parameters, for printing.
    pub fn params(&self, r: usize) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self.family {
            Family::Ini | Family::SIni => {
                out.push(("ell", join(&self.split)));
                out.push(("sigma", self.label.bits(r)));
            }
            Family::Exl3 | Family::Cs1 | Family::Cs2 | Family::SSplit => {
                out.push(("rho", join(&self.split)))
            }
            Family::St1
            | Family::St2
            | Family::Hl
            | Family::Il
            | Family::Bl
            | Family::Br
            | Family::Ml
            | Family::SArc => out.push(("sigma", self.label.bits(r))),
            _ => {}
        }
        if let Some(x) = self.x {
            out.push(("x", String::from(x.to_char())));
        }
        if let Some(y) = self.y {
            out.push(("y", String::from(y.to_char())));
        }
        out
    }
}

fn join(v: &[u8]) -> String {
    let mut s = String::new();
    for (k, x) in v.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

impl Rule {
    /// Inverse of [`Rule::params`].
    pub fn from_params<'s>(family: Family, params: impl IntoIterator<Item = (&'s str, &'s str)>) -> Option<Rule> {
        let mut rule = Rule::new(family);
        for (k, v) in params {
            match k {
                "ell" | "rho" => rule.split = parse_list(v)?,
                "sigma" => rule.label = Label::parse_bits(v)?,
                "x" | "y" => {
                    let mut cs = v.chars();
                    let b = Base::from_char(cs.next()?)?;
                    if cs.next().is_some() {
                        return None;
                    }
                    if k == "x" {
                        rule.x = Some(b);
                    } else {
                        rule.y = Some(b);
                    }
                }
                _ => return None,
            }
        }
        Some(rule)
    }
}

/// Right-hand side shape of a production.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rhs {
    Empty,
    /// One unpaired base, optionally followed by a nonterminal.
    Base(Option<State>),
    /// A labeled arc around a nonterminal.
    Arc(State),
    /// The rainbow around a nonterminal; emits no bases.
    Rainbow(State),
    Unit(State),
    Concat(State, State),
    Triple(State, State, State),
}

impl Rhs {
    pub fn children(&self) -> Vec<&State> {
        match self {
            Rhs::Empty | Rhs::Base(None) => Vec::new(),
            Rhs::Base(Some(a)) | Rhs::Arc(a) | Rhs::Rainbow(a) | Rhs::Unit(a) => vec![a],
            Rhs::Concat(a, b) => vec![a, b],
            Rhs::Triple(a, b, c) => vec![a, b, c],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub rule: Rule,
    pub rhs: Rhs,
}

/// Valid initial signatures `ℓ` (each entry odd and at least 3) of total
/// genus at most `cap`, as `(g, ℓ)` pairs in a fixed order.
pub fn initial_signatures(cap: usize) -> Vec<(usize, Vec<u8>)> {
    let mut out = vec![(0, Vec::new())];
    fn rec(left: usize, cur: &mut Vec<u8>, out: &mut Vec<(usize, Vec<u8>)>, cap: usize) {
        for d in 1..=left {
            cur.push((2 * d + 1) as u8);
            let g = cap - left + d;
            out.push((g, cur.clone()));
            rec(left - d, cur, out, cap);
            cur.pop();
        }
    }
    rec(cap, &mut Vec::new(), &mut out, cap);
    out.sort_by(|a, b| (a.0, a.1.len(), &a.1).cmp(&(b.0, b.1.len(), &b.1)));
    out
}

/// Signature bookkeeping of a binary split: `ρ` goes left. Returns the
/// left and right `t` vectors, or `None` if the split is inconsistent.
pub fn split_flags(ell: &[u8], t: u32, rho: &[u8]) -> Option<(u32, u32)> {
    let (mut p, mut q) = (0u32, 0u32);
    for i in 0..ell.len() {
        if rho[i] > ell[i] {
            return None;
        }
        if t >> i & 1 == 1 {
            if rho[i] > 0 {
                p |= 1 << i;
            } else {
                q |= 1 << i;
            }
        }
    }
    Some((p, q))
}

/// Bookkeeping of removing an arc labeled `sigma` from a segment with
/// signature `(ell, t)`: returns the inner `(ℓ', t')` or why it is illegal.
pub fn remove_arc(ell: &[u8], t: u32, sigma: Label) -> Result<(Vec<u8>, u32), &'static str> {
    let r = ell.len();
    if !sigma.fits(r) {
        return Err("label wider than the signature");
    }
    let min = sigma.min_coord();
    let mut inner = ell.to_vec();
    let mut tp = t;
    for i in 1..=r {
        if !sigma.has(i) {
            continue;
        }
        if ell[i - 1] == 0 {
            return Err("label exceeds the remaining label sum");
        }
        let trans = t >> (i - 1) & 1 == 1;
        if !trans && Some(i) != min {
            return Err("non-transitional arc carries a second coordinate");
        }
        inner[i - 1] -= 1;
        tp &= !(1 << (i - 1));
    }
    Ok((inner, tp))
}

fn all_vectors_below(ell: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for &m in ell {
        let mut next = Vec::new();
        for v in &out {
            for x in 0..=m {
                let mut w = v.clone();
                w.push(x);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

fn sub(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub mode: Mode,
    /// Minimum hairpin length, enforced for unlabeled (`r = 0`) structures.
    pub min_hairpin: usize,
    pub genus_cap: usize,
}

impl Grammar {
    pub fn simple(min_hairpin: usize, genus_cap: usize) -> Self {
        Grammar {
            mode: Mode::Simple,
            min_hairpin,
            genus_cap,
        }
    }

    pub fn loops(min_hairpin: usize, genus_cap: usize) -> Self {
        Grammar {
            mode: Mode::Loops,
            min_hairpin,
            genus_cap,
        }
    }

    pub fn start(&self) -> State {
        State::plain(Kind::Start)
    }

    /// Smallest length a state can derive; states with unsatisfiable
    /// constraints are not detected here.
    pub fn min_len(&self, s: &State) -> usize {
        match s.kind {
            Kind::Hairpin if s.ell.is_empty() => self.min_hairpin,
            Kind::SingleStrand => 1,
            _ => 0,
        }
    }

    fn initial_rules(&self, g: Option<(usize, usize)>) -> Vec<Production> {
        let mut out = Vec::new();
        let (body, fam) = match self.mode {
            Mode::Simple => (Kind::S, Family::SIni),
            Mode::Loops => (Kind::Exterior, Family::Ini),
        };
        for (genus, ell) in initial_signatures(self.genus_cap) {
            if let Some((gg, rr)) = g {
                if genus != gg || ell.len() != rr {
                    continue;
                }
            }
            let r = ell.len();
            for bits in 0u32..1 << r {
                let sigma = Label(bits);
                let inner = sub(&ell, &sigma_vec(sigma, r));
                let t = ((1u32 << r) - 1) & !bits;
                out.push(Production {
                    rule: Rule::new(fam).with_label(sigma).with_split(ell.clone()),
                    rhs: Rhs::Rainbow(State::new(body, inner, t)),
                });
            }
        }
        out
    }

    /// Initial productions restricted to genus `g` with `r` slicings.
    pub fn initial_for(&self, g: usize, r: usize) -> Result<Vec<Production>, GrammarError> {
        if (g == 0) != (r == 0) || r > g {
            return Err(GrammarError::Infeasible { g, r });
        }
        Ok(self.initial_rules(Some((g, r))))
    }

    /// Productions of `s` with emissions erased.
    pub fn structural_productions(&self, s: &State) -> Vec<Production> {
        let mut out = Vec::new();
        let st = |k: Kind, ell: Vec<u8>, t: u32| State::new(k, ell, t);
        match s.kind {
            Kind::Start => return self.initial_rules(None),
            Kind::S => {
                if s.is_exhausted() {
                    out.push(Production {
                        rule: Rule::new(Family::SEps),
                        rhs: Rhs::Empty,
                    });
                }
                out.push(Production {
                    rule: Rule::new(Family::SBase),
                    rhs: Rhs::Base(Some(s.clone())),
                });
                for rho in all_vectors_below(&s.ell) {
                    if let Some((p, q)) = split_flags(&s.ell, s.t, &rho) {
                        let xi = sub(&s.ell, &rho);
                        out.push(Production {
                            rule: Rule::new(Family::SSplit).with_split(rho.clone()),
                            rhs: Rhs::Concat(st(Kind::L, rho, p), st(Kind::S, xi, q)),
                        });
                    }
                }
            }
            Kind::L => {
                for sigma in labels_within(&s.ell) {
                    if let Ok((inner, tp)) = remove_arc(&s.ell, s.t, sigma) {
                        out.push(Production {
                            rule: Rule::new(Family::SArc).with_label(sigma),
                            rhs: Rhs::Arc(st(Kind::S, inner, tp)),
                        });
                    }
                }
            }
            Kind::Exterior => {
                if s.is_exhausted() {
                    out.push(Production {
                        rule: Rule::new(Family::Exl1),
                        rhs: Rhs::Empty,
                    });
                }
                out.push(Production {
                    rule: Rule::new(Family::Exl2),
                    rhs: Rhs::Base(Some(s.clone())),
                });
                for rho in all_vectors_below(&s.ell) {
                    if let Some((p, q)) = split_flags(&s.ell, s.t, &rho) {
                        let xi = sub(&s.ell, &rho);
                        out.push(Production {
                            rule: Rule::new(Family::Exl3).with_split(rho.clone()),
                            rhs: Rhs::Concat(st(Kind::Weak, rho, p), st(Kind::Exterior, xi, q)),
                        });
                    }
                }
            }
            Kind::Weak | Kind::Stack => {
                for sigma in labels_within(&s.ell) {
                    let Ok((inner, tp)) = remove_arc(&s.ell, s.t, sigma) else {
                        continue;
                    };
                    let stack_family = if s.kind == Kind::Stack {
                        Family::St1
                    } else {
                        Family::St2
                    };
                    let arc = |f: Family, k: Kind| Production {
                        rule: Rule::new(f).with_label(sigma),
                        rhs: Rhs::Arc(st(k, inner.clone(), tp)),
                    };
                    out.push(arc(stack_family, Kind::Stack));
                    if inner.iter().all(|&x| x == 0) {
                        out.push(Production {
                            rule: Rule::new(Family::Hl).with_label(sigma),
                            rhs: Rhs::Arc(st(Kind::Hairpin, sigma_vec(sigma, s.r()), 0)),
                        });
                    }
                    out.push(arc(Family::Il, Kind::Interior));
                    out.push(arc(Family::Bl, Kind::BulgeLeft));
                    out.push(arc(Family::Br, Kind::BulgeRight));
                    out.push(arc(Family::Ml, Kind::Multi));
                }
            }
            Kind::Hairpin => {
                if self.min_len(s) == 0 {
                    out.push(Production {
                        rule: Rule::new(Family::Hp0),
                        rhs: Rhs::Empty,
                    });
                }
                out.push(Production {
                    rule: Rule::new(Family::Hp1),
                    rhs: Rhs::Unit(State::plain(Kind::SingleStrand)),
                });
            }
            Kind::Interior => out.push(Production {
                rule: Rule::new(Family::IlIn),
                rhs: Rhs::Triple(
                    State::plain(Kind::SingleStrand),
                    st(Kind::Weak, s.ell.clone(), s.t),
                    State::plain(Kind::SingleStrand),
                ),
            }),
            Kind::BulgeLeft => out.push(Production {
                rule: Rule::new(Family::BlIn),
                rhs: Rhs::Concat(
                    State::plain(Kind::SingleStrand),
                    st(Kind::Weak, s.ell.clone(), s.t),
                ),
            }),
            Kind::BulgeRight => out.push(Production {
                rule: Rule::new(Family::BrIn),
                rhs: Rhs::Concat(
                    st(Kind::Weak, s.ell.clone(), s.t),
                    State::plain(Kind::SingleStrand),
                ),
            }),
            Kind::Multi | Kind::MLComponents => {
                let fam = if s.kind == Kind::Multi {
                    Family::Cs1
                } else {
                    Family::Cs2
                };
                for rho in all_vectors_below(&s.ell) {
                    if let Some((p, q)) = split_flags(&s.ell, s.t, &rho) {
                        let xi = sub(&s.ell, &rho);
                        out.push(Production {
                            rule: Rule::new(fam).with_split(rho.clone()),
                            rhs: Rhs::Concat(
                                st(Kind::MLComponent, rho, p),
                                st(Kind::MLComponents, xi, q),
                            ),
                        });
                    }
                }
                if s.kind == Kind::MLComponents {
                    out.push(Production {
                        rule: Rule::new(Family::Cs3),
                        rhs: Rhs::Unit(st(Kind::MLComponent, s.ell.clone(), s.t)),
                    });
                    out.push(Production {
                        rule: Rule::new(Family::Cs4),
                        rhs: Rhs::Concat(
                            st(Kind::MLComponent, s.ell.clone(), s.t),
                            State::plain(Kind::SingleStrand),
                        ),
                    });
                }
            }
            Kind::MLComponent => {
                out.push(Production {
                    rule: Rule::new(Family::Co1),
                    rhs: Rhs::Base(Some(s.clone())),
                });
                out.push(Production {
                    rule: Rule::new(Family::Co2),
                    rhs: Rhs::Unit(st(Kind::Weak, s.ell.clone(), s.t)),
                });
            }
            Kind::SingleStrand => {
                out.push(Production {
                    rule: Rule::new(Family::Ss1),
                    rhs: Rhs::Base(None),
                });
                out.push(Production {
                    rule: Rule::new(Family::Ss2),
                    rhs: Rhs::Base(Some(s.clone())),
                });
            }
        }
        out
    }

    /// Emission variants of a structural rule.
    pub fn emission_variants(&self, rule: &Rule) -> Vec<Rule> {
        if self.mode == Mode::Simple {
            return vec![rule.clone()];
        }
        match rule.family.emissions() {
            0 => vec![rule.clone()],
            1 => Base::ALL
                .iter()
                .map(|&x| Rule {
                    x: Some(x),
                    ..rule.clone()
                })
                .collect(),
            _ => {
                let mut out = Vec::with_capacity(16);
                for &x in &Base::ALL {
                    for &y in &Base::ALL {
                        out.push(Rule {
                            x: Some(x),
                            y: Some(y),
                            ..rule.clone()
                        });
                    }
                }
                out
            }
        }
    }

    /// All productions of `s`, emission variants included.
    pub fn productions(&self, s: &State) -> Vec<Production> {
        let mut out = Vec::new();
        for p in self.structural_productions(s) {
            for rule in self.emission_variants(&p.rule) {
                out.push(Production {
                    rule,
                    rhs: p.rhs.clone(),
                });
            }
        }
        out
    }

    /// Number of sibling rules of `s`, emission variants included.
    pub fn rule_count(&self, s: &State) -> usize {
        self.structural_productions(s)
            .iter()
            .map(|p| self.emission_variants(&p.rule).len())
            .sum()
    }

    /// The right-hand side `rule` produces from `s`, if it is a rule of `s`.
    pub fn rhs_of(&self, s: &State, rule: &Rule) -> Option<Rhs> {
        let structural = rule.structural();
        if self.mode == Mode::Loops && rule.family.emissions() > 0 {
            let want = rule.family.emissions();
            let got = usize::from(rule.x.is_some()) + usize::from(rule.y.is_some());
            if got != want {
                return None;
            }
        }
        self.structural_productions(s)
            .into_iter()
            .find(|p| p.rule == structural)
            .map(|p| p.rhs)
    }

    /// Every state reachable from the start symbol.
    pub fn reachable_states(&self) -> Vec<State> {
        let mut seen = BTreeMap::new();
        let mut stack = vec![self.start()];
        seen.insert(self.start(), ());
        while let Some(s) = stack.pop() {
            for p in self.structural_productions(&s) {
                for c in p.rhs.children() {
                    if !seen.contains_key(c) {
                        seen.insert(c.clone(), ());
                        stack.push(c.clone());
                    }
                }
            }
        }
        seen.into_keys().collect()
    }
}

fn sigma_vec(sigma: Label, r: usize) -> Vec<u8> {
    (1..=r).map(|i| u8::from(sigma.has(i))).collect()
}

/// Nonzero-or-zero labels `σ` with `σ_i <= ℓ_i`.
fn labels_within(ell: &[u8]) -> Vec<Label> {
    let r = ell.len();
    (0u32..1 << r)
        .filter(|&b| (0..r).all(|i| b >> i & 1 == 0 || ell[i] > 0))
        .map(Label)
        .collect()
}

/// One node of a parse tree, stored in preorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNode {
    pub state: State,
    pub rule: Rule,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub nodes: Vec<ParseNode>,
}

impl ParseTree {
    pub fn root(&self) -> &ParseNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Re-derives the terminal string, checking every node against the
    /// grammar.
    pub fn yield_tokens(&self, g: &Grammar) -> Result<Vec<Token>, GrammarError> {
        let mut out = Vec::new();
        self.yield_rec(g, 0, &mut out)?;
        Ok(out)
    }

    fn yield_rec(&self, g: &Grammar, k: usize, out: &mut Vec<Token>) -> Result<(), GrammarError> {
        let node = self.nodes.get(k).ok_or(GrammarError::Malformed)?;
        let rhs = g.rhs_of(&node.state, &node.rule).ok_or(GrammarError::Malformed)?;
        let kids = rhs.children();
        if kids.len() != node.children.len() {
            return Err(GrammarError::Malformed);
        }
        for (c, s) in node.children.iter().zip(&kids) {
            if self.nodes.get(*c).map(|n| &n.state) != Some(*s) {
                return Err(GrammarError::Malformed);
            }
        }
        let label = node.rule.label;
        match rhs {
            Rhs::Base(_) => out.push(Token::Unpaired(node.rule.x)),
            Rhs::Arc(_) => out.push(Token::Open(label, node.rule.x)),
            Rhs::Rainbow(_) => out.push(Token::RainbowOpen(label)),
            _ => {}
        }
        for &c in &node.children {
            self.yield_rec(g, c, out)?;
        }
        match rhs {
            Rhs::Arc(_) => out.push(Token::Close(label, node.rule.y)),
            Rhs::Rainbow(_) => out.push(Token::RainbowClose(label)),
            _ => {}
        }
        Ok(())
    }

    /// Nested S-expression: `(rule-id State[ell|t] key=value .. children)`.
    pub fn to_sexpr(&self) -> String {
        let mut s = String::new();
        self.sexpr_rec(0, &mut s);
        s
    }

    fn sexpr_rec(&self, k: usize, s: &mut String) {
        let node = &self.nodes[k];
        let _ = write!(s, "({} {}", node.rule.family.id(), node.state);
        let r = match node.rule.family {
            Family::Ini | Family::SIni => node.rule.split.len(),
            _ => node.state.r(),
        };
        for (key, v) in node.rule.params(r) {
            if v.is_empty() {
                continue;
            }
            let _ = write!(s, " {key}={v}");
        }
        for &c in &node.children {
            s.push(' ');
            self.sexpr_rec(c, s);
        }
        s.push(')');
    }
}

/// Terminal symbols. Bases are `None` in simple mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    RainbowOpen(Label),
    RainbowClose(Label),
    Open(Label, Option<Base>),
    Close(Label, Option<Base>),
    Unpaired(Option<Base>),
}

/// Terminal string of a λ-structure, with bases when a sequence is given.
pub fn tokens(s: &LambdaStructure, seq: Option<&Sequence>) -> Vec<Token> {
    let base = |v: usize| seq.map(|q| q.bases()[v - 1]);
    let mut out = vec![Token::RainbowOpen(s.rainbow())];
    for v in 1..=s.len() {
        let l = s.label_at(v);
        out.push(match s.diagram().partner(v) {
            None => Token::Unpaired(base(v)),
            Some(w) if w > v => Token::Open(l, base(v)),
            Some(_) => Token::Close(l, base(v)),
        });
    }
    out.push(Token::RainbowClose(s.rainbow()));
    out
}

/// Rebuilds a λ-structure from a terminal string of the grammar.
pub fn structure_from_tokens(tokens: &[Token], r: usize) -> Result<LambdaStructure, GrammarError> {
    let inner = &tokens[1..tokens.len() - 1];
    let rainbow = match tokens.first() {
        Some(Token::RainbowOpen(l)) => *l,
        _ => return Err(GrammarError::Malformed),
    };
    let mut partner = vec![None; inner.len()];
    let mut arcs = Vec::new();
    let mut stack = Vec::new();
    for (k, t) in inner.iter().enumerate() {
        match t {
            Token::Open(l, _) => stack.push((k + 1, *l)),
            Token::Close(l, _) => {
                let (i, li) = stack.pop().ok_or(GrammarError::Malformed)?;
                if li != *l {
                    return Err(GrammarError::Malformed);
                }
                partner[i - 1] = Some(k + 1);
                partner[k] = Some(i);
                arcs.push((i, k + 1, *l));
            }
            Token::Unpaired(_) => {}
            _ => return Err(GrammarError::Malformed),
        }
    }
    let d = Diagram::from_partners(partner).map_err(LambdaError::from)?;
    Ok(LambdaStructure::new(d, rainbow, &arcs, r)?)
}

/// Counts derivations of `tokens` from the start symbol by exhaustive
/// search over all productions and split points.
pub fn count_parses(g: &Grammar, tokens: &[Token]) -> u64 {
    ParseCounter::new(g).count(tokens)
}

/// [`count_parses`] with the compiled productions kept between inputs.
pub struct ParseCounter<'a> {
    g: &'a Grammar,
    ids: BTreeMap<State, usize>,
    table: Vec<Entry>,
    w: Vec<Token>,
}

impl<'a> ParseCounter<'a> {
    pub fn new(g: &'a Grammar) -> Self {
        ParseCounter {
            g,
            ids: BTreeMap::new(),
            table: Vec::new(),
            w: Vec::new(),
        }
    }

    pub fn count(&mut self, tokens: &[Token]) -> u64 {
        self.w = tokens.to_vec();
        let n = tokens.len() + 1;
        for e in &mut self.table {
            e.memo.clear();
            e.memo.resize(n * n, None);
        }
        let start = self.id(&self.g.start());
        self.state(start, 0, tokens.len())
    }
}

/// A production with its nonterminals replaced by interned ids.
struct Compiled {
    rule: Rule,
    shape: u8,
    kids: [usize; 3],
}

struct Entry {
    min_len: usize,
    prods: Option<alloc::rc::Rc<Vec<Compiled>>>,
    state: State,
    memo: Vec<Option<u64>>,
}

impl ParseCounter<'_> {
    fn id(&mut self, s: &State) -> usize {
        if let Some(&k) = self.ids.get(s) {
            return k;
        }
        let n = self.w.len() + 1;
        self.table.push(Entry {
            min_len: self.g.min_len(s),
            prods: None,
            state: s.clone(),
            memo: vec![None; n * n],
        });
        self.ids.insert(s.clone(), self.table.len() - 1);
        self.table.len() - 1
    }

    fn prods(&mut self, k: usize) -> alloc::rc::Rc<Vec<Compiled>> {
        if let Some(p) = &self.table[k].prods {
            return p.clone();
        }
        let st = self.table[k].state.clone();
        let mut out = Vec::new();
        for p in self.g.productions(&st) {
            let (shape, kids): (u8, Vec<&State>) = match &p.rhs {
                Rhs::Empty => (0, vec![]),
                Rhs::Base(None) => (1, vec![]),
                Rhs::Base(Some(a)) => (2, vec![a]),
                Rhs::Arc(a) => (3, vec![a]),
                Rhs::Rainbow(a) => (4, vec![a]),
                Rhs::Unit(a) => (5, vec![a]),
                Rhs::Concat(a, b) => (6, vec![a, b]),
                Rhs::Triple(a, b, c) => (7, vec![a, b, c]),
            };
            let mut ids = [0; 3];
            for (slot, s) in ids.iter_mut().zip(kids) {
                *slot = self.id(s);
            }
            out.push(Compiled {
                rule: p.rule,
                shape,
                kids: ids,
            });
        }
        let rc = alloc::rc::Rc::new(out);
        self.table[k].prods = Some(rc.clone());
        rc
    }

    fn state(&mut self, k: usize, i: usize, j: usize) -> u64 {
        if j - i < self.table[k].min_len {
            return 0;
        }
        let n = self.w.len() + 1;
        if let Some(c) = self.table[k].memo[i * n + j] {
            return c;
        }
        let prods = self.prods(k);
        let mut total = 0;
        for p in prods.iter() {
            total += self.rhs(p, i, j);
        }
        self.table[k].memo[i * n + j] = Some(total);
        total
    }

    fn rhs(&mut self, p: &Compiled, i: usize, j: usize) -> u64 {
        let (l, x, y) = (p.rule.label, p.rule.x, p.rule.y);
        let [a, b, c] = p.kids;
        match p.shape {
            0 => u64::from(i == j),
            1 | 2 => {
                if i >= j || self.w[i] != Token::Unpaired(x) {
                    return 0;
                }
                if p.shape == 1 {
                    u64::from(j == i + 1)
                } else {
                    self.state(a, i + 1, j)
                }
            }
            3 | 4 => {
                let (open, close) = if p.shape == 3 {
                    (Token::Open(l, x), Token::Close(l, y))
                } else {
                    (Token::RainbowOpen(l), Token::RainbowClose(l))
                };
                if j < i + 2 || self.w[i] != open || self.w[j - 1] != close {
                    return 0;
                }
                self.state(a, i + 1, j - 1)
            }
            5 => self.state(a, i, j),
            6 => {
                let mut t = 0;
                for m in i..=j {
                    let left = self.state(a, i, m);
                    if left > 0 {
                        t += left * self.state(b, m, j);
                    }
                }
                t
            }
            _ => {
                let mut t = 0;
                for k1 in i..=j {
                    let left = self.state(a, i, k1);
                    if left == 0 {
                        continue;
                    }
                    for k2 in k1..=j {
                        let mid = self.state(b, k1, k2);
                        if mid > 0 {
                            t += left * mid * self.state(c, k2, j);
                        }
                    }
                }
                t
            }
        }
    }
}

/// Every terminal string derivable from the initial productions with genus
/// `g` and `r` slicings, `n_arcs` arcs and `n_unpaired` unpaired bases,
/// as λ-structures. In loop mode each base is fixed to `A`.
pub fn generate(
    gr: &Grammar,
    n_arcs: usize,
    n_unpaired: usize,
    g: usize,
    r: usize,
) -> Result<Vec<LambdaStructure>, GrammarError> {
    let starts = gr.initial_for(g, r)?;
    let mut memo = BTreeMap::new();
    let mut out = Vec::new();
    for p in starts {
        let Rhs::Rainbow(body) = &p.rhs else {
            unreachable!("initial productions wrap the rainbow")
        };
        for w in gen_state(gr, body, n_arcs, n_unpaired, &mut memo) {
            let mut t = vec![Token::RainbowOpen(p.rule.label)];
            t.extend(w);
            t.push(Token::RainbowClose(p.rule.label));
            let s = structure_from_tokens(&t, r)?;
            if r == 0 && !hairpins_ok(s.diagram(), gr.min_hairpin) {
                continue;
            }
            out.push(s);
        }
    }
    Ok(out)
}

fn hairpins_ok(d: &Diagram, min: usize) -> bool {
    d.arcs()
        .iter()
        .all(|&(i, j)| (i + 1..j).any(|v| d.partner(v).is_some()) || j - i > min)
}

type GenMemo = BTreeMap<(State, usize, usize), Vec<Vec<Token>>>;

fn gen_state(g: &Grammar, s: &State, a: usize, u: usize, memo: &mut GenMemo) -> Vec<Vec<Token>> {
    if 2 * a + u < g.min_len(s) {
        return Vec::new();
    }
    let key = (s.clone(), a, u);
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    let mut out = Vec::new();
    for p in g.structural_productions(s) {
        let rule = g.emission_variants(&p.rule).swap_remove(0);
        let (x, y) = (rule.x.map(|_| Base::A), rule.y.map(|_| Base::A));
        let l = p.rule.label;
        match &p.rhs {
            Rhs::Empty => {
                if a == 0 && u == 0 {
                    out.push(Vec::new());
                }
            }
            Rhs::Base(next) => {
                if u == 0 {
                    continue;
                }
                match next {
                    None => {
                        if a == 0 && u == 1 {
                            out.push(vec![Token::Unpaired(x)]);
                        }
                    }
                    Some(n) => {
                        for w in gen_state(g, n, a, u - 1, memo) {
                            let mut v = vec![Token::Unpaired(x)];
                            v.extend(w);
                            out.push(v);
                        }
                    }
                }
            }
            Rhs::Arc(inner) => {
                if a == 0 {
                    continue;
                }
                for w in gen_state(g, inner, a - 1, u, memo) {
                    let mut v = vec![Token::Open(l, x)];
                    v.extend(w);
                    v.push(Token::Close(l, y));
                    out.push(v);
                }
            }
            Rhs::Rainbow(_) => unreachable!("rainbow only at the start"),
            Rhs::Unit(c) => out.extend(gen_state(g, c, a, u, memo)),
            Rhs::Concat(b, c) => {
                for a1 in 0..=a {
                    for u1 in 0..=u {
                        let left = gen_state(g, b, a1, u1, memo);
                        if left.is_empty() {
                            continue;
                        }
                        let right = gen_state(g, c, a - a1, u - u1, memo);
                        for lw in &left {
                            for rw in &right {
                                let mut v = lw.clone();
                                v.extend_from_slice(rw);
                                out.push(v);
                            }
                        }
                    }
                }
            }
            Rhs::Triple(b, c, d) => {
                for a1 in 0..=a {
                    for u1 in 0..=u {
                        let left = gen_state(g, b, a1, u1, memo);
                        if left.is_empty() {
                            continue;
                        }
                        for a2 in 0..=a - a1 {
                            for u2 in 0..=u - u1 {
                                let mid = gen_state(g, c, a2, u2, memo);
                                if mid.is_empty() {
                                    continue;
                                }
                                let right = gen_state(g, d, a - a1 - a2, u - u1 - u2, memo);
                                for lw in &left {
                                    for mw in &mid {
                                        for rw in &right {
                                            let mut v = lw.clone();
                                            v.extend_from_slice(mw);
                                            v.extend_from_slice(rw);
                                            out.push(v);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    memo.insert(key, out.clone());
    out
}

/// Per-level label sums over left endpoints, for segment queries.
struct Sums {
    r: usize,
    prefix: Vec<Vec<u16>>,
}

impl Sums {
    fn new(s: &LambdaStructure) -> Self {
        let r = s.r();
        let mut prefix = vec![vec![0u16; r]];
        for v in 1..=s.len() {
            let mut row = prefix[v - 1].clone();
            if matches!(s.diagram().partner(v), Some(w) if w > v) {
                let l = s.label_at(v);
                for (i, x) in row.iter_mut().enumerate() {
                    *x += u16::from(l.has(i + 1));
                }
            }
            prefix.push(row);
        }
        Sums { r, prefix }
    }

    /// Sums over arcs with left endpoint in `a..=b`.
    fn segment(&self, a: usize, b: usize) -> Vec<u8> {
        (0..self.r)
            .map(|i| (self.prefix[b][i] - self.prefix[a - 1][i]) as u8)
            .collect()
    }
}

struct Parser<'a> {
    g: &'a Grammar,
    s: &'a LambdaStructure,
    seq: Option<&'a Sequence>,
    sums: Sums,
    nodes: Vec<ParseNode>,
}

impl<'a> Parser<'a> {
    fn base(&self, v: usize) -> Option<Base> {
        self.seq.map(|q| q.bases()[v - 1])
    }

    fn partner(&self, v: usize) -> Option<usize> {
        self.s.diagram().partner(v)
    }

    fn push(&mut self, state: State, rule: Rule) -> usize {
        self.nodes.push(ParseNode {
            state,
            rule,
            children: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn link(&mut self, parent: usize, child: usize) {
        self.nodes[parent].children.push(child);
    }

    fn initial_rule(&self) -> Result<(Rule, State), GrammarError> {
        let r = self.s.r();
        let rainbow = self.s.rainbow();
        let mut ell = sigma_vec(rainbow, r);
        if !self.s.is_empty() {
            for (x, y) in ell.iter_mut().zip(self.sums.segment(1, self.s.len())) {
                *x += y;
            }
        }
        let genus = self.s.genus();
        if genus > self.g.genus_cap {
            return Err(GrammarError::GenusCap {
                genus,
                cap: self.g.genus_cap,
            });
        }
        let fam = match self.g.mode {
            Mode::Simple => Family::SIni,
            Mode::Loops => Family::Ini,
        };
        let inner = sub(&ell, &sigma_vec(rainbow, r));
        let t = ((1u32 << r) - 1) & !rainbow.0;
        let body = match self.g.mode {
            Mode::Simple => Kind::S,
            Mode::Loops => Kind::Exterior,
        };
        Ok((
            Rule::new(fam).with_label(rainbow).with_split(ell),
            State::new(body, inner, t),
        ))
    }

    fn split(&self, st: &State, a: usize, j: usize, at: usize) -> Result<(Vec<u8>, u32, Vec<u8>, u32), GrammarError> {
        let rho = self.sums.segment(a, j);
        let (p, q) = split_flags(&st.ell, st.t, &rho).ok_or(GrammarError::Label {
            at,
            reason: "segment label sums exceed the signature",
        })?;
        let xi = sub(&st.ell, &rho);
        for i in 0..st.r() {
            if q >> i & 1 == 1 && xi[i] == 0 {
                return Err(GrammarError::Label {
                    at,
                    reason: "transitional arc missing from the segment",
                });
            }
        }
        Ok((rho, p, xi, q))
    }

    fn arc_rule(&self, f: Family, v: usize, w: usize) -> Rule {
        Rule {
            family: f,
            label: self.s.label_at(v),
            split: Vec::new(),
            x: self.base(v),
            y: self.base(w),
        }
    }

    fn single(&self, f: Family, v: usize) -> Rule {
        Rule {
            x: self.base(v),
            ..Rule::new(f)
        }
    }

    // ---- simple grammar ----

    fn simple_s(&mut self, st: State, a: usize, b: usize) -> Result<usize, GrammarError> {
        if a > b {
            if !st.is_exhausted() {
                return Err(GrammarError::Label {
                    at: a,
                    reason: "label sums left over",
                });
            }
            return Ok(self.push(st, Rule::new(Family::SEps)));
        }
        match self.partner(a) {
            None => {
                let k = self.push(st.clone(), Rule::new(Family::SBase));
                let c = self.simple_s(st, a + 1, b)?;
                self.link(k, c);
                Ok(k)
            }
            Some(j) => {
                let (rho, p, xi, q) = self.split(&st, a, j, a)?;
                let k = self.push(st.clone(), Rule::new(Family::SSplit).with_split(rho.clone()));
                let l = self.simple_l(State::new(Kind::L, rho, p), a, j)?;
                self.link(k, l);
                let c = self.simple_s(State::new(Kind::S, xi, q), j + 1, b)?;
                self.link(k, c);
                Ok(k)
            }
        }
    }

    fn simple_l(&mut self, st: State, a: usize, b: usize) -> Result<usize, GrammarError> {
        let sigma = self.s.label_at(a);
        let (inner, tp) = remove_arc(&st.ell, st.t, sigma).map_err(|reason| GrammarError::Label { at: a, reason })?;
        let k = self.push(st, Rule::new(Family::SArc).with_label(sigma));
        let c = self.simple_s(State::new(Kind::S, inner, tp), a + 1, b - 1)?;
        self.link(k, c);
        Ok(k)
    }

    // ---- loop grammar ----

    fn exterior(&mut self, st: State, a: usize, b: usize) -> Result<usize, GrammarError> {
        if a > b {
            if !st.is_exhausted() {
                return Err(GrammarError::Label {
                    at: a,
                    reason: "label sums left over",
                });
            }
            return Ok(self.push(st, Rule::new(Family::Exl1)));
        }
        match self.partner(a) {
            None => {
                let rule = self.single(Family::Exl2, a);
                let k = self.push(st.clone(), rule);
                let c = self.exterior(st, a + 1, b)?;
                self.link(k, c);
                Ok(k)
            }
            Some(j) => {
                let (rho, p, xi, q) = self.split(&st, a, j, a)?;
                let k = self.push(st, Rule::new(Family::Exl3).with_split(rho.clone()));
                let w = self.closed(State::new(Kind::Weak, rho, p), a, j)?;
                self.link(k, w);
                let c = self.exterior(State::new(Kind::Exterior, xi, q), j + 1, b)?;
                self.link(k, c);
                Ok(k)
            }
        }
    }

    /// Top-level arcs of `a..=b`.
    fn top_arcs(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut v = a;
        while v <= b {
            match self.partner(v) {
                Some(w) => {
                    out.push((v, w));
                    v = w + 1;
                }
                None => v += 1,
            }
        }
        out
    }

    /// `Weak` or `Stack` deriving the arc `(a, b)`.
    fn closed(&mut self, st: State, a: usize, b: usize) -> Result<usize, GrammarError> {
        let sigma = self.s.label_at(a);
        let (inner, tp) = remove_arc(&st.ell, st.t, sigma).map_err(|reason| GrammarError::Label { at: a, reason })?;
        let (lo, hi) = (a + 1, b - 1);
        let tops = self.top_arcs(lo, hi);
        let inner_state = |k: Kind| State::new(k, inner.clone(), tp);
        match tops.len() {
            0 => {
                let len = b - a - 1;
                if len < self.g.min_len(&State::new(Kind::Hairpin, sigma_vec(sigma, st.r()), 0)) {
                    return Err(GrammarError::Hairpin {
                        at: a,
                        len,
                        min: self.g.min_hairpin,
                    });
                }
                if !inner.iter().all(|&x| x == 0) {
                    return Err(GrammarError::Label {
                        at: a,
                        reason: "label sums left over in a hairpin",
                    });
                }
                let r = st.r();
                let k = self.push(st, self.arc_rule(Family::Hl, a, b));
                let hp = State::new(Kind::Hairpin, sigma_vec(sigma, r), 0);
                let c = if len == 0 {
                    self.push(hp, Rule::new(Family::Hp0))
                } else {
                    let c = self.push(hp, Rule::new(Family::Hp1));
                    let ss = self.single_strand(lo, hi);
                    self.link(c, ss);
                    c
                };
                self.link(k, c);
                Ok(k)
            }
            1 => {
                let (i, j) = tops[0];
                let (fam, kind) = match (i == lo, j == hi) {
                    (true, true) if st.kind == Kind::Stack => (Family::St1, Kind::Stack),
                    (true, true) => (Family::St2, Kind::Stack),
                    (true, false) => (Family::Br, Kind::BulgeRight),
                    (false, true) => (Family::Bl, Kind::BulgeLeft),
                    (false, false) => (Family::Il, Kind::Interior),
                };
                let k = self.push(st, self.arc_rule(fam, a, b));
                let child_state = inner_state(kind);
                let weak = inner_state(Kind::Weak);
                let c = match kind {
                    Kind::Stack => self.closed(child_state, i, j)?,
                    Kind::BulgeRight => {
                        let c = self.push(child_state, Rule::new(Family::BrIn));
                        let w = self.closed(weak, i, j)?;
                        self.link(c, w);
                        let ss = self.single_strand(j + 1, hi);
                        self.link(c, ss);
                        c
                    }
                    Kind::BulgeLeft => {
                        let c = self.push(child_state, Rule::new(Family::BlIn));
                        let ss = self.single_strand(lo, i - 1);
                        self.link(c, ss);
                        let w = self.closed(weak, i, j)?;
                        self.link(c, w);
                        c
                    }
                    _ => {
                        let c = self.push(child_state, Rule::new(Family::IlIn));
                        let ss = self.single_strand(lo, i - 1);
                        self.link(c, ss);
                        let w = self.closed(weak, i, j)?;
                        self.link(c, w);
                        let ss = self.single_strand(j + 1, hi);
                        self.link(c, ss);
                        c
                    }
                };
                self.link(k, c);
                Ok(k)
            }
            _ => {
                let k = self.push(st, self.arc_rule(Family::Ml, a, b));
                let c = self.components(inner_state(Kind::Multi), lo, hi, &tops)?;
                self.link(k, c);
                Ok(k)
            }
        }
    }

    /// `MultiLoop` or `MLComponents` over `a..=b` with top-level arcs `tops`.
    fn components(&mut self, st: State, a: usize, b: usize, tops: &[(usize, usize)]) -> Result<usize, GrammarError> {
        let (_, j) = tops[0];
        if tops.len() >= 2 {
            let fam = if st.kind == Kind::Multi {
                Family::Cs1
            } else {
                Family::Cs2
            };
            let (rho, p, xi, q) = self.split(&st, a, j, tops[0].0)?;
            let k = self.push(st, Rule::new(fam).with_split(rho.clone()));
            let c = self.component(State::new(Kind::MLComponent, rho, p), a, j)?;
            self.link(k, c);
            let rest = self.components(State::new(Kind::MLComponents, xi, q), j + 1, b, &tops[1..])?;
            self.link(k, rest);
            return Ok(k);
        }
        let comp = State::new(Kind::MLComponent, st.ell.clone(), st.t);
        if j == b {
            let k = self.push(st, Rule::new(Family::Cs3));
            let c = self.component(comp, a, b)?;
            self.link(k, c);
            Ok(k)
        } else {
            let k = self.push(st, Rule::new(Family::Cs4));
            let c = self.component(comp, a, j)?;
            self.link(k, c);
            let ss = self.single_strand(j + 1, b);
            self.link(k, ss);
            Ok(k)
        }
    }

    fn component(&mut self, st: State, a: usize, b: usize) -> Result<usize, GrammarError> {
        if self.partner(a).is_none() {
            let rule = self.single(Family::Co1, a);
            let k = self.push(st.clone(), rule);
            let c = self.component(st, a + 1, b)?;
            self.link(k, c);
            Ok(k)
        } else {
            let k = self.push(st.clone(), Rule::new(Family::Co2));
            let w = self.closed(State::new(Kind::Weak, st.ell, st.t), a, b)?;
            self.link(k, w);
            Ok(k)
        }
    }

    fn single_strand(&mut self, a: usize, b: usize) -> usize {
        let st = State::plain(Kind::SingleStrand);
        if a == b {
            let rule = self.single(Family::Ss1, a);
            return self.push(st, rule);
        }
        let rule = self.single(Family::Ss2, a);
        let k = self.push(st, rule);
        let c = self.single_strand(a + 1, b);
        self.link(k, c);
        k
    }
}

fn run_parser(g: &Grammar, s: &LambdaStructure, seq: Option<&Sequence>) -> Result<ParseTree, GrammarError> {
    s.validate()?;
    if let Some(q) = seq {
        if q.len() != s.len() {
            return Err(GrammarError::LengthMismatch {
                got: q.len(),
                expected: s.len(),
            });
        }
    }
    if s.r() > MAX_LEVELS {
        return Err(LambdaError::TooManyLevels.into());
    }
    let mut p = Parser {
        g,
        s,
        seq,
        sums: Sums::new(s),
        nodes: Vec::new(),
    };
    let (rule, body) = p.initial_rule()?;
    let root = p.push(g.start(), rule);
    let n = s.len();
    let c = match g.mode {
        Mode::Simple => p.simple_s(body, 1, n)?,
        Mode::Loops => p.exterior(body, 1, n)?,
    };
    p.link(root, c);
    Ok(ParseTree { nodes: p.nodes })
}

/// Unique derivation of a λ-structure in the simple grammar.
pub fn parse_simple(g: &Grammar, s: &LambdaStructure) -> Result<ParseTree, GrammarError> {
    debug_assert_eq!(g.mode, Mode::Simple);
    run_parser(g, s, None)
}

/// Unique derivation of a λ-structure with its sequence in the loop grammar.
pub fn parse_loops(g: &Grammar, s: &LambdaStructure, seq: &Sequence) -> Result<ParseTree, GrammarError> {
    debug_assert_eq!(g.mode, Mode::Loops);
    run_parser(g, s, Some(seq))
}

/// Loop-grammar derivation without a sequence: emissions are left empty,
/// giving the structural rule at every node.
pub fn parse_loops_structural(g: &Grammar, s: &LambdaStructure) -> Result<ParseTree, GrammarError> {
    debug_assert_eq!(g.mode, Mode::Loops);
    run_parser(g, s, None)
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.id())?;
        for (k, v) in self.params(self.label_width()) {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl Rule {
    fn label_width(&self) -> usize {
        32 - self.label.0.leading_zeros() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::lambda_from_pk;
    use crate::unicellular::UnicellularMap;
    use alloc::format;
    use alloc::string::ToString;

    fn simple() -> Grammar {
        Grammar::simple(0, 3)
    }

    #[test]
    fn initial_signature_list() {
        let sigs = initial_signatures(2);
        let want: Vec<(usize, Vec<u8>)> = vec![
            (0, vec![]),
            (1, vec![3]),
            (2, vec![5]),
            (2, vec![3, 3]),
        ];
        assert_eq!(sigs, want);
        assert_eq!(initial_signatures(3).len(), 8);
    }

    #[test]
    fn unlabeled_hairpin_parses_classically() {
        let s = LambdaStructure::unlabeled(Diagram::parse("(())").unwrap()).unwrap();
        let t = parse_simple(&simple(), &s).unwrap();
        let fams: Vec<&str> = t.nodes.iter().map(|n| n.rule.family.id()).collect();
        assert_eq!(
            fams,
            vec!["s_ini", "s_split", "s_arc", "s_split", "s_arc", "s_eps", "s_eps", "s_eps"]
        );
        assert_eq!(t.yield_tokens(&simple()).unwrap(), tokens(&s, None));
    }

    #[test]
    fn genus_one_lambda_parses() {
        let d = Diagram::parse("([)]").unwrap();
        let u = UnicellularMap::dual_of_matching(&d).unwrap();
        for bp in u.blueprints() {
            let s = lambda_from_pk(&d, &bp).unwrap();
            let t = parse_simple(&simple(), &s).unwrap();
            assert_eq!(count_parses(&simple(), &tokens(&s, None)), 1);
            assert_eq!(t.yield_tokens(&simple()).unwrap(), tokens(&s, None));
            assert_eq!(t.root().rule.split, vec![3]);
        }
    }

    #[test]
    fn hairpin_loop_chain() {
        let g = Grammar::loops(1, 3);
        let s = LambdaStructure::unlabeled(Diagram::parse("((...))").unwrap()).unwrap();
        let seq = Sequence::parse("GGAAACC").unwrap();
        let t = parse_loops(&g, &s, &seq).unwrap();
        let chain: Vec<String> = t
            .nodes
            .iter()
            .map(|n| format!("{}:{}", n.state.kind.name(), n.rule.family.id()))
            .collect();
        assert_eq!(
            chain,
            vec![
                "Start:ini",
                "ExteriorLoop:exl_3",
                "Weak:st_2",
                "Stack:hl",
                "HairpinLoop:hp_1",
                "SingleStrand:ss_2",
                "SingleStrand:ss_2",
                "SingleStrand:ss_1",
                "ExteriorLoop:exl_1",
            ]
        );
        assert_eq!(t.nodes[2].rule.x, Some(Base::G));
        assert_eq!(t.nodes[2].rule.y, Some(Base::C));
        assert_eq!(count_parses(&g, &tokens(&s, Some(&seq))), 1);
    }

    #[test]
    fn empty_structure_is_single_strand_free_exterior() {
        let g = Grammar::loops(1, 3);
        let s = LambdaStructure::unlabeled(Diagram::empty(3)).unwrap();
        let seq = Sequence::parse("ACG").unwrap();
        let t = parse_loops(&g, &s, &seq).unwrap();
        let fams: Vec<&str> = t.nodes.iter().map(|n| n.rule.family.id()).collect();
        assert_eq!(fams, vec!["ini", "exl_2", "exl_2", "exl_2", "exl_1"]);
    }

    #[test]
    fn rejects_short_hairpin_and_bad_sequence() {
        let g = Grammar::loops(3, 3);
        let s = LambdaStructure::unlabeled(Diagram::parse("(..)").unwrap()).unwrap();
        let seq = Sequence::parse("GAAC").unwrap();
        assert!(matches!(parse_loops(&g, &s, &seq), Err(GrammarError::Hairpin { .. })));
        let short = Sequence::parse("GA").unwrap();
        assert!(matches!(
            parse_loops(&g, &s, &short),
            Err(GrammarError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn state_and_rule_text_round_trip() {
        let st = State::new(Kind::Weak, vec![2, 0, 1], 0b101);
        assert_eq!(st.to_string(), "Weak[2,0,1|101]");
        assert_eq!(State::parse(&st.to_string()), Some(st));
        assert_eq!(State::parse("SingleStrand"), Some(State::plain(Kind::SingleStrand)));
        assert_eq!(State::parse("Weak[1|10]"), None);
        let rule = Rule {
            family: Family::Hl,
            label: Label(0b10),
            split: vec![],
            x: Some(Base::G),
            y: Some(Base::U),
        };
        let params = rule.params(2);
        let back = Rule::from_params(Family::Hl, params.iter().map(|(k, v)| (*k, v.as_str())));
        assert_eq!(back, Some(rule));
    }

    #[test]
    fn sexpr_shape() {
        let g = Grammar::loops(0, 3);
        let s = LambdaStructure::unlabeled(Diagram::parse("()").unwrap()).unwrap();
        let seq = Sequence::parse("GC").unwrap();
        let t = parse_loops(&g, &s, &seq).unwrap();
        assert_eq!(
            t.to_sexpr(),
            "(ini Start (exl_3 ExteriorLoop (hl Weak x=G y=C (hp_0 HairpinLoop)) (exl_1 ExteriorLoop)))"
        );
    }
}
