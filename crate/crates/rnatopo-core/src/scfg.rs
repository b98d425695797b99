//! The stochastic loop grammar: training from annotated structures,
//! scoring, inside tables, Boltzmann sampling and structure statistics.
//!
//! Every nonterminal state keeps its own rule distribution. States that
//! training never reached are uniform over their rules.

use crate::diagram::{Diagram, DiagramError, Sequence};
use crate::fatgraph::Fatgraph;
use crate::grammar::{
    parse_loops, parse_loops_structural, structure_from_tokens, Grammar, GrammarError, Kind, Mode, ParseTree, Rhs,
    Rule, State, Token,
};
use crate::lambda::{lambda_from_pk_with_sequence, pk_from_lambda, Label, LambdaError, LambdaStructure};
use crate::unicellular::{Blueprint, UnicellularMap};
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand_core::RngCore;

pub const MODEL_VERSION: &str = "rnatopo-loops/1";
pub const DEFAULT_PSEUDOCOUNT: f64 = 1e-3;
/// Allowed deviation of a state's rule probabilities from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScfgError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("structure has genus {genus}, above the cap {cap}")]
    GenusCap { genus: usize, cap: usize },
    #[error("sequence length {got} does not match structure length {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("the model needs the loop grammar")]
    WrongMode,
    #[error("rules of {state} sum to {sum}")]
    NotNormalized { state: String, sum: f64 },
    #[error("{rule} is not a rule of {state}")]
    ForeignRule { state: String, rule: String },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("length {n} exceeds the table size {max}")]
    TooLong { n: usize, max: usize },
    #[error("no structure of length {0} within the genus cap")]
    EmptyPartition(usize),
}

/// Rule probabilities of one state; rules not listed get `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRules {
    pub probs: BTreeMap<Rule, f64>,
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub version: String,
    pub grammar: Grammar,
    pub pseudocount: f64,
    pub states: BTreeMap<State, StateRules>,
}

impl Model {
    /// Every state uniform over its rules.
    pub fn uniform(grammar: Grammar) -> Self {
        Model {
            version: MODEL_VERSION.to_string(),
            grammar,
            pseudocount: 0.0,
            states: BTreeMap::new(),
        }
    }

    /// Builds and checks a model from explicit tables.
    pub fn from_parts(
        grammar: Grammar,
        pseudocount: f64,
        states: BTreeMap<State, StateRules>,
    ) -> Result<Self, ScfgError> {
        let m = Model {
            version: MODEL_VERSION.to_string(),
            grammar,
            pseudocount,
            states,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn r_max(&self) -> usize {
        self.grammar.genus_cap
    }

    pub fn prob(&self, s: &State, rule: &Rule) -> f64 {
        match self.states.get(s) {
            Some(sr) => sr.probs.get(rule).copied().unwrap_or(sr.default),
            None => 1.0 / self.grammar.rule_count(s) as f64,
        }
    }

    /// Probability of a structural rule with its emissions summed out.
    pub fn structural_prob(&self, s: &State, rule: &Rule) -> f64 {
        match self.states.get(s) {
            None => {
                self.grammar.emission_variants(rule).len() as f64 / self.grammar.rule_count(s) as f64
            }
            Some(_) => self
                .grammar
                .emission_variants(rule)
                .iter()
                .map(|v| self.prob(s, v))
                .sum(),
        }
    }

    /// Checks that listed rules belong to their state and that every
    /// state's probabilities sum to 1.
    pub fn validate(&self) -> Result<(), ScfgError> {
        if self.grammar.mode != Mode::Loops {
            return Err(ScfgError::WrongMode);
        }
        for (s, sr) in &self.states {
            let n = self.grammar.rule_count(s);
            let mut sum = 0.0;
            for (rule, &p) in &sr.probs {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ScfgError::BadProbability(p));
                }
                if self.grammar.rhs_of(s, rule).is_none() {
                    return Err(ScfgError::ForeignRule {
                        state: s.to_string(),
                        rule: rule.to_string(),
                    });
                }
                sum += p;
            }
            if !(0.0..=1.0).contains(&sr.default) {
                return Err(ScfgError::BadProbability(sr.default));
            }
            sum += n.saturating_sub(sr.probs.len()) as f64 * sr.default;
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(ScfgError::NotNormalized {
                    state: s.to_string(),
                    sum,
                });
            }
        }
        Ok(())
    }

    /// Product of rule probabilities along a parse tree.
    pub fn tree_probability(&self, t: &ParseTree) -> f64 {
        t.nodes.iter().map(|n| self.prob(&n.state, &n.rule)).product()
    }

    /// Same, with emissions summed out (the tree must carry no bases).
    pub fn structural_tree_probability(&self, t: &ParseTree) -> f64 {
        t.nodes
            .iter()
            .map(|n| self.structural_prob(&n.state, &n.rule))
            .product()
    }
}

fn genus_of(d: &Diagram) -> Result<(UnicellularMap, usize), ScfgError> {
    let (m, _) = d.to_matching();
    let u = UnicellularMap::dual_of_matching(&m).map_err(LambdaError::from)?;
    let g = u.genus();
    Ok((u, g))
}

/// Rule counts of one record: every blueprint's parse contributes `1/m`.
pub type Counts = BTreeMap<(State, Rule), BigRational>;

/// Blueprint-averaged rule frequencies of one record.
pub fn record_counts(g: &Grammar, d: &Diagram, seq: &Sequence) -> Result<Counts, ScfgError> {
    if seq.len() != d.len() {
        return Err(ScfgError::LengthMismatch {
            got: seq.len(),
            expected: d.len(),
        });
    }
    let (u, genus) = genus_of(d)?;
    if genus > g.genus_cap {
        return Err(ScfgError::GenusCap {
            genus,
            cap: g.genus_cap,
        });
    }
    let bps = u.blueprints();
    let mut raw: BTreeMap<(State, Rule), u64> = BTreeMap::new();
    for bp in &bps {
        let (s, q) = lambda_from_pk_with_sequence(d, bp, seq)?;
        let t = parse_loops(g, &s, &q)?;
        for node in t.nodes {
            *raw.entry((node.state, node.rule)).or_default() += 1;
        }
    }
    let m = BigInt::from(bps.len());
    Ok(raw
        .into_iter()
        .map(|(k, c)| (k, BigRational::new(BigInt::from(c), m.clone())))
        .collect())
}

/// Total weight a record puts on the start symbol.
pub fn record_mass(c: &Counts) -> BigRational {
    c.iter()
        .filter(|((s, _), _)| s.kind == Kind::Start)
        .fold(BigRational::zero(), |acc, (_, v)| acc + v)
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: Model,
    pub counts: Counts,
    /// Per input record: its mass, or why it was skipped.
    pub records: Vec<Result<BigRational, ScfgError>>,
}

impl Training {
    pub fn used(&self) -> usize {
        self.records.iter().filter(|r| r.is_ok()).count()
    }
}

/// Estimates rule probabilities as `(f + c) / (Σf + N·c)` per state, with
/// `f` the blueprint-averaged frequency, `c` the pseudocount and `N` the
/// state's number of rules.
pub fn train(g: &Grammar, records: &[(Diagram, Sequence)], pseudocount: f64) -> Result<Training, ScfgError> {
    if g.mode != Mode::Loops {
        return Err(ScfgError::WrongMode);
    }
    let mut counts = Counts::new();
    let mut out = Vec::with_capacity(records.len());
    for (d, q) in records {
        match record_counts(g, d, q) {
            Ok(c) => {
                out.push(Ok(record_mass(&c)));
                for (k, v) in c {
                    *counts.entry(k).or_insert_with(BigRational::zero) += v;
                }
            }
            Err(e) => out.push(Err(e)),
        }
    }
    let model = estimate(g, &counts, pseudocount)?;
    Ok(Training {
        model,
        counts,
        records: out,
    })
}

/// Turns frequencies into a model.
pub fn estimate(g: &Grammar, counts: &Counts, pseudocount: f64) -> Result<Model, ScfgError> {
    let mut per_state: BTreeMap<State, Vec<(Rule, f64)>> = BTreeMap::new();
    for ((s, r), f) in counts {
        per_state
            .entry(s.clone())
            .or_default()
            .push((r.clone(), f.to_f64().unwrap_or(0.0)));
    }
    let mut states = BTreeMap::new();
    for (s, rules) in per_state {
        let n = g.rule_count(&s) as f64;
        let total: f64 = rules.iter().map(|(_, f)| f).sum();
        let denom = total + n * pseudocount;
        let probs = rules
            .into_iter()
            .map(|(r, f)| (r, (f + pseudocount) / denom))
            .collect();
        states.insert(
            s,
            StateRules {
                probs,
                default: pseudocount / denom,
            },
        );
    }
    Model::from_parts(g.clone(), pseudocount, states)
}

/// A probability summed over blueprints.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub total: f64,
    pub per_blueprint: Vec<f64>,
    /// Rules met with probability zero, as `State -> rule` strings.
    pub zero_rules: Vec<String>,
}

fn collect_score(model: &Model, trees: Vec<ParseTree>, structural: bool) -> Score {
    let mut per = Vec::with_capacity(trees.len());
    let mut zero = Vec::new();
    for t in &trees {
        let mut p = 1.0;
        for n in &t.nodes {
            let q = if structural {
                model.structural_prob(&n.state, &n.rule)
            } else {
                model.prob(&n.state, &n.rule)
            };
            if q == 0.0 {
                zero.push(alloc::format!("{} -> {}", n.state, n.rule));
            }
            p *= q;
        }
        per.push(p);
    }
    zero.sort();
    zero.dedup();
    Score {
        total: per.iter().sum(),
        per_blueprint: per,
        zero_rules: zero,
    }
}

fn checked_blueprints(model: &Model, d: &Diagram) -> Result<Vec<Blueprint>, ScfgError> {
    let (u, genus) = genus_of(d)?;
    if genus > model.r_max() {
        return Err(ScfgError::GenusCap {
            genus,
            cap: model.r_max(),
        });
    }
    Ok(u.blueprints())
}

/// `P(S, θ | M)`: sum over blueprints of the parse probability of the
/// image pair.
pub fn score(model: &Model, d: &Diagram, seq: &Sequence) -> Result<Score, ScfgError> {
    if seq.len() != d.len() {
        return Err(ScfgError::LengthMismatch {
            got: seq.len(),
            expected: d.len(),
        });
    }
    let mut trees = Vec::new();
    for bp in checked_blueprints(model, d)? {
        let (s, q) = lambda_from_pk_with_sequence(d, &bp, seq)?;
        trees.push(parse_loops(&model.grammar, &s, &q)?);
    }
    Ok(collect_score(model, trees, false))
}

/// `P(S | M)`, the score summed over all sequences.
pub fn marginal_score(model: &Model, d: &Diagram) -> Result<Score, ScfgError> {
    let mut trees = Vec::new();
    for bp in checked_blueprints(model, d)? {
        let s = crate::lambda::lambda_from_pk(d, &bp)?;
        trees.push(parse_loops_structural(&model.grammar, &s)?);
    }
    Ok(collect_score(model, trees, true))
}

/// Structure probability of a single λ-structure.
pub fn lambda_probability(model: &Model, s: &LambdaStructure) -> Result<f64, ScfgError> {
    let t = parse_loops_structural(&model.grammar, s)?;
    Ok(model.structural_tree_probability(&t))
}

/// Weights given to structural rules by an inside computation.
pub trait RuleWeights {
    fn grammar(&self) -> &Grammar;
    fn weight(&self, s: &State, structural: &Rule) -> f64;
}

impl RuleWeights for Model {
    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn weight(&self, s: &State, structural: &Rule) -> f64 {
        self.structural_prob(s, structural)
    }
}

/// Weight 1 on every structural rule: inside values count λ-structures.
pub struct Counting(pub Grammar);

impl RuleWeights for Counting {
    fn grammar(&self) -> &Grammar {
        &self.0
    }

    fn weight(&self, _: &State, _: &Rule) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Empty,
    Base(Option<usize>),
    Arc(Label, usize),
    Rainbow(Label, usize, usize),
    Unit(usize),
    Concat(usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    min_len: usize,
    prods: Vec<(f64, Shape)>,
}

/// Inside weights by state and length, scaled by `c^len` to stay in range.
#[derive(Debug, Clone)]
pub struct InsideTable {
    n: usize,
    g_max: usize,
    scale: f64,
    nodes: Vec<Node>,
    inside: Vec<Vec<f64>>,
    lo: Vec<usize>,
    labels: Vec<Option<State>>,
}

const ROOT: usize = 0;

impl InsideTable {
    pub fn max_len(&self) -> usize {
        self.n
    }

    pub fn g_max(&self) -> usize {
        self.g_max
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn state_count(&self) -> usize {
        self.nodes.len()
    }

    /// `Σ P(S* | M)` over λ-structures of length `n` (unscaled; may
    /// underflow for long backbones, see [`InsideTable::log_partition`]).
    pub fn partition(&self, n: usize) -> f64 {
        self.inside[ROOT][n] / libm::pow(self.scale, n as f64)
    }

    pub fn log_partition(&self, n: usize) -> f64 {
        libm::log(self.inside[ROOT][n]) - n as f64 * libm::log(self.scale)
    }

    /// Scaled inside weight of a grammar state, if the table holds it.
    pub fn weight_of(&self, s: &State, len: usize) -> Option<f64> {
        let k = self.labels.iter().position(|x| x.as_ref() == Some(s))?;
        Some(self.inside[k][len] / libm::pow(self.scale, len as f64))
    }
}

struct Compiler<'w, W: RuleWeights> {
    w: &'w W,
    g_max: usize,
    ids: BTreeMap<State, usize>,
    tails: BTreeMap<(usize, usize), usize>,
    nodes: Vec<Node>,
    labels: Vec<Option<State>>,
    todo: Vec<usize>,
}

impl<W: RuleWeights> Compiler<'_, W> {
    fn intern(&mut self, s: &State) -> usize {
        if let Some(&k) = self.ids.get(s) {
            return k;
        }
        let k = self.nodes.len();
        self.nodes.push(Node {
            min_len: self.w.grammar().min_len(s),
            prods: Vec::new(),
        });
        self.labels.push(Some(s.clone()));
        self.ids.insert(s.clone(), k);
        self.todo.push(k);
        k
    }

    fn tail(&mut self, b: usize, c: usize) -> usize {
        if let Some(&k) = self.tails.get(&(b, c)) {
            return k;
        }
        let k = self.nodes.len();
        self.nodes.push(Node {
            min_len: 0,
            prods: vec![(1.0, Shape::Concat(b, c))],
        });
        self.labels.push(None);
        self.tails.insert((b, c), k);
        k
    }

    fn run(&mut self) {
        let g = self.w.grammar().clone();
        while let Some(k) = self.todo.pop() {
            let s = self.labels[k].clone().expect("grammar state");
            let mut prods = Vec::new();
            for p in g.structural_productions(&s) {
                if s.kind == Kind::Start {
                    let genus = p.rule.split.iter().map(|&x| (x as usize - 1) / 2).sum::<usize>();
                    if genus > self.g_max {
                        continue;
                    }
                }
                let w = self.w.weight(&s, &p.rule);
                if w <= 0.0 {
                    continue;
                }
                let shape = match &p.rhs {
                    Rhs::Empty => Shape::Empty,
                    Rhs::Base(None) => Shape::Base(None),
                    Rhs::Base(Some(a)) => Shape::Base(Some(self.intern(a))),
                    Rhs::Arc(a) => Shape::Arc(p.rule.label, self.intern(a)),
                    Rhs::Rainbow(a) => Shape::Rainbow(p.rule.label, p.rule.split.len(), self.intern(a)),
                    Rhs::Unit(a) => Shape::Unit(self.intern(a)),
                    Rhs::Concat(a, b) => {
                        let (a, b) = (self.intern(a), self.intern(b));
                        Shape::Concat(a, b)
                    }
                    Rhs::Triple(a, b, c) => {
                        let (a, b, c) = (self.intern(a), self.intern(b), self.intern(c));
                        Shape::Concat(a, self.tail(b, c))
                    }
                };
                prods.push((w, shape));
            }
            self.nodes[k].prods = prods;
        }
    }
}

/// Evaluation order within one length: a node comes after every node it
/// reads at the same length.
fn same_length_order(nodes: &[Node]) -> Vec<usize> {
    let k = nodes.len();
    let mut nullable = vec![false; k];
    loop {
        let mut changed = false;
        for (x, node) in nodes.iter().enumerate() {
            if nullable[x] || node.min_len > 0 {
                continue;
            }
            let ok = node.prods.iter().any(|&(_, s)| match s {
                Shape::Empty => true,
                Shape::Unit(a) | Shape::Rainbow(_, _, a) => nullable[a],
                Shape::Concat(a, b) => nullable[a] && nullable[b],
                _ => false,
            });
            if ok {
                nullable[x] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let deps = |x: usize| -> Vec<usize> {
        let mut d = Vec::new();
        for &(_, s) in &nodes[x].prods {
            match s {
                Shape::Unit(a) | Shape::Rainbow(_, _, a) => d.push(a),
                Shape::Concat(a, b) => {
                    if nullable[b] {
                        d.push(a);
                    }
                    if nullable[a] {
                        d.push(b);
                    }
                }
                _ => {}
            }
        }
        d
    };
    // iterative postorder DFS; 0 = new, 1 = open, 2 = done
    let mut mark = vec![0u8; k];
    let mut order = Vec::with_capacity(k);
    for start in 0..k {
        if mark[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, deps(start), 0usize)];
        mark[start] = 1;
        while let Some((x, ds, i)) = stack.last_mut() {
            if *i < ds.len() {
                let y = ds[*i];
                *i += 1;
                match mark[y] {
                    0 => {
                        mark[y] = 1;
                        let dy = deps(y);
                        stack.push((y, dy, 0));
                    }
                    1 => panic!("grammar has a cycle of same-length rules"),
                    _ => {}
                }
            } else {
                mark[*x] = 2;
                order.push(*x);
                stack.pop();
            }
        }
    }
    order
}

fn fill(nodes: &[Node], order: &[usize], n: usize, c: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = nodes.len();
    let mut inside = vec![vec![0.0f64; n + 1]; k];
    let mut lo = vec![usize::MAX; k];
    let c2 = c * c;
    for len in 0..=n {
        for &x in order {
            if len < nodes[x].min_len {
                continue;
            }
            let mut v = 0.0;
            for &(w, s) in &nodes[x].prods {
                v += w * match s {
                    Shape::Empty => f64::from(u8::from(len == 0)),
                    Shape::Base(None) => {
                        if len == 1 {
                            c
                        } else {
                            0.0
                        }
                    }
                    Shape::Base(Some(a)) => {
                        if len >= 1 {
                            c * inside[a][len - 1]
                        } else {
                            0.0
                        }
                    }
                    Shape::Arc(_, a) => {
                        if len >= 2 {
                            c2 * inside[a][len - 2]
                        } else {
                            0.0
                        }
                    }
                    Shape::Rainbow(_, _, a) | Shape::Unit(a) => inside[a][len],
                    Shape::Concat(a, b) => concat_sum(&inside[a], &inside[b], lo[a], lo[b], len),
                };
            }
            inside[x][len] = v;
            if v > 0.0 && lo[x] == usize::MAX {
                lo[x] = len;
            }
        }
    }
    (inside, lo)
}

/// `Σ_k A[k]·B[len-k]` over `k ≥ la`, `len-k ≥ lb`, where `la`, `lb` are
/// the first lengths with positive weight so far.
fn concat_sum(a: &[f64], b: &[f64], la: usize, lb: usize, len: usize) -> f64 {
    if la == usize::MAX || lb == usize::MAX || la + lb > len {
        return 0.0;
    }
    let mut t = 0.0;
    for k in la..=len - lb {
        t += a[k] * b[len - k];
    }
    t
}

/// Builds the inside table for backbones of length up to `n` and genus
/// up to `g_max`, with emissions summed out.
pub fn build_inside<W: RuleWeights>(w: &W, n: usize, g_max: usize) -> Result<InsideTable, ScfgError> {
    let g = w.grammar();
    if g.mode != Mode::Loops {
        return Err(ScfgError::WrongMode);
    }
    if g_max > g.genus_cap {
        return Err(ScfgError::GenusCap {
            genus: g_max,
            cap: g.genus_cap,
        });
    }
    let mut comp = Compiler {
        w,
        g_max,
        ids: BTreeMap::new(),
        tails: BTreeMap::new(),
        nodes: Vec::new(),
        labels: Vec::new(),
        todo: Vec::new(),
    };
    let root = comp.intern(&g.start());
    debug_assert_eq!(root, ROOT);
    comp.run();
    let nodes = comp.nodes;
    let order = same_length_order(&nodes);

    // growth rate from a short unscaled pass
    let pilot = n.min(96);
    let (probe, _) = fill(&nodes, &order, pilot, 1.0);
    let mass = |len: usize| probe.iter().map(|v| v[len]).sum::<f64>();
    let (a, b) = (pilot / 2, pilot);
    let scale = if b > a && mass(a) > 0.0 && mass(b) > 0.0 {
        let mu = libm::pow(mass(b) / mass(a), 1.0 / (b - a) as f64);
        if mu.is_finite() && mu > 0.0 {
            1.0 / mu
        } else {
            1.0
        }
    } else {
        1.0
    };
    let (inside, lo) = fill(&nodes, &order, n, scale);
    Ok(InsideTable {
        n,
        g_max,
        scale,
        nodes,
        inside,
        lo,
        labels: comp.labels,
    })
}

fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Split points `lo, hi, lo+1, hi-1, ..` alternating from both ends.
struct Boustrophedon {
    lo: usize,
    hi: usize,
    left: bool,
    done: bool,
}

impl Boustrophedon {
    fn new(lo: usize, hi: usize) -> Self {
        Boustrophedon {
            lo,
            hi,
            left: true,
            done: lo > hi,
        }
    }
}

impl Iterator for Boustrophedon {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.done {
            return None;
        }
        let k = if self.left { self.lo } else { self.hi };
        if self.lo == self.hi {
            self.done = true;
        } else if self.left {
            self.lo += 1;
        } else {
            self.hi -= 1;
        }
        self.left = !self.left;
        Some(k)
    }
}

enum Work {
    Expand(usize, usize),
    Emit(Token),
}

impl InsideTable {
    /// Draws one λ-structure of length `n` with probability proportional
    /// to its weight.
    pub fn sample_lambda<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Result<LambdaStructure, ScfgError> {
        if n > self.n {
            return Err(ScfgError::TooLong { n, max: self.n });
        }
        if !(self.inside[ROOT][n] > 0.0) {
            return Err(ScfgError::EmptyPartition(n));
        }
        let mut tokens = Vec::with_capacity(n + 2);
        let mut r = 0;
        let mut stack = vec![Work::Expand(ROOT, n)];
        let mut concats: Vec<(f64, usize, usize)> = Vec::new();
        while let Some(item) = stack.pop() {
            let (x, len) = match item {
                Work::Emit(t) => {
                    tokens.push(t);
                    continue;
                }
                Work::Expand(x, len) => (x, len),
            };
            let node = &self.nodes[x];
            let mut u = uniform01(rng) * self.inside[x][len];
            let mut chosen: Option<(Shape, usize)> = None;
            let mut fallback: Option<(Shape, usize)> = None;
            concats.clear();
            for &(w, s) in &node.prods {
                let v = match s {
                    Shape::Empty => w * f64::from(u8::from(len == 0)),
                    Shape::Base(None) => w * if len == 1 { self.scale } else { 0.0 },
                    Shape::Base(Some(a)) if len >= 1 => w * self.scale * self.inside[a][len - 1],
                    Shape::Arc(_, a) if len >= 2 => w * self.scale * self.scale * self.inside[a][len - 2],
                    Shape::Rainbow(_, _, a) | Shape::Unit(a) => w * self.inside[a][len],
                    Shape::Concat(a, b) => {
                        concats.push((w, a, b));
                        continue;
                    }
                    _ => 0.0,
                };
                if v <= 0.0 {
                    continue;
                }
                fallback = Some((s, 0));
                if u < v {
                    chosen = Some((s, 0));
                    break;
                }
                u -= v;
            }
            if chosen.is_none() && !concats.is_empty() {
                let k_lo = concats.iter().map(|c| self.lo[c.1]).min().unwrap_or(usize::MAX);
                let b_lo = concats.iter().map(|c| self.lo[c.2]).min().unwrap_or(usize::MAX);
                if k_lo != usize::MAX && b_lo != usize::MAX && k_lo + b_lo <= len {
                    'outer: for k in Boustrophedon::new(k_lo, len - b_lo) {
                        for &(w, a, b) in &concats {
                            let v = w * self.inside[a][k] * self.inside[b][len - k];
                            if v <= 0.0 {
                                continue;
                            }
                            fallback = Some((Shape::Concat(a, b), k));
                            if u < v {
                                chosen = Some((Shape::Concat(a, b), k));
                                break 'outer;
                            }
                            u -= v;
                        }
                    }
                }
            }
            // rounding can leave u just above the last option
            let (shape, k) = chosen.or(fallback).ok_or(ScfgError::EmptyPartition(len))?;
            match shape {
                Shape::Empty => {}
                Shape::Base(next) => {
                    tokens.push(Token::Unpaired(None));
                    if let Some(a) = next {
                        stack.push(Work::Expand(a, len - 1));
                    }
                }
                Shape::Arc(l, a) => {
                    tokens.push(Token::Open(l, None));
                    stack.push(Work::Emit(Token::Close(l, None)));
                    stack.push(Work::Expand(a, len - 2));
                }
                Shape::Rainbow(l, levels, a) => {
                    r = levels;
                    tokens.push(Token::RainbowOpen(l));
                    stack.push(Work::Emit(Token::RainbowClose(l)));
                    stack.push(Work::Expand(a, len));
                }
                Shape::Unit(a) => stack.push(Work::Expand(a, len)),
                Shape::Concat(a, b) => {
                    stack.push(Work::Expand(b, len - k));
                    stack.push(Work::Expand(a, k));
                }
            }
        }
        Ok(structure_from_tokens(&tokens, r)?)
    }

    /// Draws a pk-structure with its blueprint and λ-structure.
    pub fn sample<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
    ) -> Result<(Diagram, Blueprint, LambdaStructure), ScfgError> {
        let s = self.sample_lambda(rng, n)?;
        let (d, bp) = pk_from_lambda(&s)?;
        Ok((d, bp, s))
    }
}

/// Draws `count` pk-structures of length `n`.
pub fn sample<R: RngCore + ?Sized>(
    model: &Model,
    n: usize,
    g_max: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(Diagram, Blueprint, LambdaStructure)>, ScfgError> {
    let table = build_inside(model, n, g_max)?;
    (0..count).map(|_| table.sample(rng, n)).collect()
}

/// Structural features of one diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureStats {
    pub bp: usize,
    pub st_n: usize,
    pub st_l: f64,
    pub hp_n: usize,
    pub hp_l: f64,
}

/// Stacks are maximal runs `(i,j), (i+1,j-1), ..`; a hairpin is an arc
/// enclosing only unpaired vertices, of length `j-i-1`.
pub fn structure_stats(d: &Diagram) -> StructureStats {
    let arcs = d.arcs();
    let mut st_n = 0;
    for &(i, j) in &arcs {
        let outer = i > 1 && d.partner(i - 1) == Some(j + 1);
        if !outer {
            st_n += 1;
        }
    }
    let mut hp_n = 0;
    let mut hp_total = 0;
    for &(i, j) in &arcs {
        if (i + 1..j).all(|v| d.partner(v).is_none()) {
            hp_n += 1;
            hp_total += j - i - 1;
        }
    }
    let bp = arcs.len();
    StructureStats {
        bp,
        st_n,
        st_l: if st_n == 0 { 0.0 } else { bp as f64 / st_n as f64 },
        hp_n,
        hp_l: if hp_n == 0 {
            0.0
        } else {
            hp_total as f64 / hp_n as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        if xs.is_empty() {
            return Moments::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Moments { mean, variance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub count: usize,
    pub bp: Moments,
    pub st_n: Moments,
    pub st_l: Moments,
    pub hp_n: Moments,
    pub hp_l: Moments,
    pub genus_counts: BTreeMap<usize, usize>,
}

impl StatsReport {
    /// `(name, moments)` in report order.
    pub fn rows(&self) -> [(&'static str, Moments); 5] {
        [
            ("bp", self.bp),
            ("st_n", self.st_n),
            ("st_l", self.st_l),
            ("hp_n", self.hp_n),
            ("hp_l", self.hp_l),
        ]
    }
}

pub fn stats(ds: &[Diagram]) -> StatsReport {
    let per: Vec<StructureStats> = ds.iter().map(structure_stats).collect();
    let col = |f: fn(&StructureStats) -> f64| Moments::of(&per.iter().map(f).collect::<Vec<_>>());
    let mut genus_counts = BTreeMap::new();
    for d in ds {
        let (m, _) = d.to_matching();
        let g = Fatgraph::from_matching(&m)
            .and_then(|f| f.genus())
            .map(|r| r.g)
            .unwrap_or(0);
        *genus_counts.entry(g).or_insert(0) += 1;
    }
    StatsReport {
        count: ds.len(),
        bp: col(|s| s.bp as f64),
        st_n: col(|s| s.st_n as f64),
        st_l: col(|s| s.st_l),
        hp_n: col(|s| s.hp_n as f64),
        hp_l: col(|s| s.hp_l),
        genus_counts,
    }
}
