use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rnatopo_core::diagram::{count_secondary, Base, Diagram, Sequence};
use rnatopo_core::grammar::{generate, Grammar};
use rnatopo_core::lambda::LambdaStructure;
use rnatopo_core::scfg::{
    build_inside, lambda_probability, marginal_score, record_counts, record_mass, score, stats, structure_stats,
    train, Counting, Model,
};
use rnatopo_core::unicellular::UnicellularMap;

/// Every diagram on `n` vertices (partial matchings, crossings allowed).
fn all_diagrams(n: usize) -> Vec<Diagram> {
    fn rec(v: usize, partner: &mut Vec<Option<usize>>, out: &mut Vec<Diagram>) {
        let n = partner.len();
        if v > n {
            out.push(Diagram::from_partners(partner.clone()).unwrap());
            return;
        }
        if partner[v - 1].is_some() {
            return rec(v + 1, partner, out);
        }
        rec(v + 1, partner, out);
        for w in v + 1..=n {
            if partner[w - 1].is_none() {
                partner[v - 1] = Some(w);
                partner[w - 1] = Some(v);
                rec(v + 1, partner, out);
                partner[v - 1] = None;
                partner[w - 1] = None;
            }
        }
    }
    let mut out = Vec::new();
    rec(1, &mut vec![None; n], &mut out);
    out
}

fn genus(d: &Diagram) -> usize {
    UnicellularMap::dual_of_matching(&d.to_matching().0).unwrap().genus()
}

fn blueprint_count(d: &Diagram) -> usize {
    UnicellularMap::dual_of_matching(&d.to_matching().0)
        .unwrap()
        .blueprints()
        .len()
}

fn short_hairpin(d: &Diagram, min: usize) -> bool {
    d.arcs()
        .iter()
        .any(|&(i, j)| (i + 1..j).all(|v| d.partner(v).is_none()) && j - i - 1 < min)
}

/// A sequence pairing every arc as G-C with unpaired A's.
fn gc_sequence(d: &Diagram) -> Sequence {
    Sequence(
        (1..=d.len())
            .map(|v| match d.partner(v) {
                None => Base::A,
                Some(w) if w > v => Base::G,
                Some(_) => Base::C,
            })
            .collect(),
    )
}

fn toy_corpus() -> Vec<(Diagram, Sequence)> {
    [
        "((((...))))",
        "((..((...))..))",
        "(((...)))..(((...)))",
        "((((..[[[..))))..]]]",
        "((..[[..))..]]",
        "((.[[..)).{{..]].}}",
        ".((..)).",
        "(([[..))]]",
        "((..[[..))..]]..{{..<<..}}..>>",
    ]
    .iter()
    .map(|s| {
        let d = Diagram::parse(s).unwrap();
        let q = gc_sequence(&d);
        (d, q)
    })
    .collect()
}

fn toy_model(pseudocount: f64) -> Model {
    train(&Grammar::loops(0, 2), &toy_corpus(), pseudocount).unwrap().model
}

/// Every λ-structure of length `n` with genus at most `g_max`.
fn all_lambdas(gr: &Grammar, n: usize, g_max: usize) -> Vec<LambdaStructure> {
    let mut out = Vec::new();
    for arcs in 0..=n / 2 {
        for g in 0..=g_max {
            for r in 0..=g {
                if (g == 0) != (r == 0) {
                    continue;
                }
                out.extend(generate(gr, arcs, n - 2 * arcs, g, r).unwrap());
            }
        }
    }
    out
}

#[test]
fn counting_inside_gives_secondary_structure_numbers() {
    let t = build_inside(&Counting(Grammar::loops(1, 0)), 24, 0).unwrap();
    for n in 0..=24 {
        let want: f64 = count_secondary(n, 1).to_string().parse().unwrap();
        let got = t.partition(n);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "n={n}: {got} vs {want}");
    }
}

#[test]
fn counting_inside_gives_pk_blueprint_pairs() {
    for g_max in 0..=2 {
        let t = build_inside(&Counting(Grammar::loops(1, 2)), 8, g_max).unwrap();
        for n in 0..=8 {
            let want: usize = all_diagrams(n)
                .iter()
                .filter(|d| {
                    let g = genus(d);
                    g <= g_max && !(g == 0 && short_hairpin(d, 1))
                })
                .map(blueprint_count)
                .sum();
            let got = t.partition(n);
            assert!((got - want as f64).abs() < 1e-6, "g_max={g_max} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn partition_equals_enumeration_sums() {
    for model in [Model::uniform(Grammar::loops(0, 2)), toy_model(1e-3)] {
        let t = build_inside(&model, 8, 1).unwrap();
        for n in 0..=8 {
            let lambdas: f64 = all_lambdas(&model.grammar, n, 1)
                .iter()
                .map(|s| lambda_probability(&model, s).unwrap())
                .sum();
            let pks: f64 = all_diagrams(n)
                .iter()
                .filter(|d| genus(d) <= 1)
                .map(|d| marginal_score(&model, d).unwrap().total)
                .sum();
            let z = t.partition(n);
            assert!((z - lambdas).abs() <= 1e-12 * z.max(1e-300) * 10.0, "n={n}: {z} vs {lambdas}");
            assert!((z - pks).abs() <= 1e-11 * z, "n={n}: {z} vs {pks}");
        }
    }
}

fn all_sequences(n: usize) -> Vec<Sequence> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v: Vec<Base>| {
                Base::ALL.iter().map(move |&b| {
                    let mut w = v.clone();
                    w.push(b);
                    w
                })
            })
            .collect();
    }
    out.into_iter().map(Sequence).collect()
}

#[test]
fn marginal_score_sums_scores_over_sequences() {
    let model = toy_model(1e-2);
    for s in ["...", "(.)", "([)]", ".([)]", "(())"] {
        let d = Diagram::parse(s).unwrap();
        let brute: f64 = all_sequences(d.len())
            .iter()
            .map(|q| score(&model, &d, q).unwrap().total)
            .sum();
        let m = marginal_score(&model, &d).unwrap();
        assert!((m.total - brute).abs() <= 1e-12 * brute, "{s}: {} vs {brute}", m.total);
        assert_eq!(m.per_blueprint.len(), blueprint_count(&d));
    }
}

#[test]
fn genus_one_score_sums_its_two_blueprints() {
    let model = Model::uniform(Grammar::loops(0, 2));
    let d = Diagram::parse("([)]").unwrap();
    let q = Sequence::parse("GACU").unwrap();
    let s = score(&model, &d, &q).unwrap();
    assert_eq!(s.per_blueprint.len(), 2);
    assert_eq!(s.total, s.per_blueprint[0] + s.per_blueprint[1]);
    assert!(s.total > 0.0 && s.zero_rules.is_empty());
}

#[test]
fn training_mass_and_normalization() {
    let g = Grammar::loops(0, 2);
    for (d, q) in toy_corpus() {
        let c = record_counts(&g, &d, &q).unwrap();
        assert_eq!(record_mass(&c), BigRational::one(), "{:?}", d.to_dot_bracket());
    }
    let tr = train(&g, &toy_corpus(), 1e-3).unwrap();
    assert_eq!(tr.used(), toy_corpus().len());
    assert!(tr.records.iter().all(|r| r.as_ref().unwrap() == &BigRational::one()));
    tr.model.validate().unwrap();
    for (d, q) in toy_corpus() {
        assert!(score(&tr.model, &d, &q).unwrap().total > 0.0);
    }
}

#[test]
fn duplicated_corpus_gives_the_same_model() {
    let g = Grammar::loops(0, 2);
    let once = train(&g, &toy_corpus(), 0.0).unwrap().model;
    let mut twice = toy_corpus();
    twice.extend(toy_corpus());
    let doubled = train(&g, &twice, 0.0).unwrap().model;
    assert_eq!(once.states.len(), doubled.states.len());
    for (s, sr) in &once.states {
        let other = &doubled.states[s];
        for (r, p) in &sr.probs {
            assert!((p - other.probs[r]).abs() < 1e-15);
        }
    }
}

#[test]
fn single_hairpin_without_smoothing() {
    let g = Grammar::loops(0, 2);
    let d = Diagram::parse("((...))").unwrap();
    let q = Sequence::parse("GGAAACC").unwrap();
    let tr = train(&g, &[(d.clone(), q.clone())], 0.0).unwrap();
    for sr in tr.model.states.values() {
        assert_eq!(sr.default, 0.0);
    }
    // SingleStrand: ss_2 twice, ss_1 once; ExteriorLoop: exl_3 and exl_1 once
    // each; every other state on the path sees a single rule
    let p = score(&tr.model, &d, &q).unwrap().total;
    assert!((p - (2.0 / 3.0) * (2.0 / 3.0) * (1.0 / 3.0) * 0.25).abs() < 1e-15);
    let other = Sequence::parse("GGAAACU").unwrap();
    let zero = score(&tr.model, &d, &other).unwrap();
    assert_eq!(zero.total, 0.0);
    assert!(!zero.zero_rules.is_empty());
}

#[test]
fn genus_cap_rejects_records() {
    let g = Grammar::loops(0, 1);
    let d = Diagram::parse("((..))").unwrap();
    let two = Diagram::parse("([)]{<}>").unwrap();
    assert_eq!(genus(&two), 2);
    let tr = train(&g, &[(two.clone(), gc_sequence(&two)), (d.clone(), gc_sequence(&d))], 1e-3).unwrap();
    assert_eq!(tr.used(), 1);
    assert!(tr.records[0].is_err());
}

fn expected_tv(p: &[f64], draws: f64) -> f64 {
    // mean absolute deviation of a binomial proportion, normal approximation
    0.5 * p
        .iter()
        .map(|&x| (2.0 * x * (1.0 - x) / (std::f64::consts::PI * draws)).sqrt())
        .sum::<f64>()
}

#[test]
fn sampler_matches_exact_distribution() {
    let model = toy_model(1e-2);
    let draws = 100_000;
    for n in [5, 6] {
        let table = build_inside(&model, n, 1).unwrap();
        let support = all_lambdas(&model.grammar, n, 1);
        let weights: Vec<f64> = support
            .iter()
            .map(|s| lambda_probability(&model, s).unwrap())
            .collect();
        let z: f64 = weights.iter().sum();
        let exact: BTreeMap<&LambdaStructure, f64> =
            support.iter().zip(&weights).map(|(s, w)| (s, w / z)).collect();
        let probs: Vec<f64> = exact.values().copied().collect();
        let expect = expected_tv(&probs, draws as f64);
        assert!(expect < 0.006, "support too wide: {} outcomes, E[TV]={expect}", probs.len());

        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mut seen: BTreeMap<LambdaStructure, usize> = BTreeMap::new();
        for _ in 0..draws {
            let s = table.sample_lambda(&mut rng, n).unwrap();
            *seen.entry(s).or_default() += 1;
        }
        let mut tv = 0.0;
        for (s, p) in &exact {
            let f = seen.get(*s).copied().unwrap_or(0) as f64 / draws as f64;
            tv += (f - p).abs();
        }
        for s in seen.keys() {
            assert!(exact.contains_key(s), "sampled outside the support");
        }
        tv /= 2.0;
        assert!(tv <= 0.01, "n={n}: TV {tv}");
    }
}

#[test]
fn samples_are_deterministic_and_respect_genus() {
    let model = toy_model(1e-3);
    let table = build_inside(&model, 40, 2).unwrap();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200)
            .map(|_| table.sample(&mut rng, 40).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a, run(12));
    for (d, bp, s) in &a {
        assert_eq!(d.len(), 40);
        assert_eq!(genus(d), s.genus());
        assert!(s.genus() <= 2);
        assert_eq!(bp.r(), s.r());
    }
}

#[test]
fn stats_against_direct_counts() {
    let ds: Vec<Diagram> = toy_corpus().into_iter().map(|(d, _)| d).collect();
    let rep = stats(&ds);
    // direct reading of each structure: (bp, stacks, mean stack, hairpins, mean hairpin)
    let by_hand = [
        (4.0, 1.0, 4.0, 1.0, 3.0),
        (4.0, 2.0, 2.0, 1.0, 3.0),
        (6.0, 2.0, 3.0, 2.0, 3.0),
        (7.0, 2.0, 3.5, 0.0, 0.0),
        (4.0, 2.0, 2.0, 0.0, 0.0),
        (6.0, 3.0, 2.0, 0.0, 0.0),
        (2.0, 1.0, 2.0, 1.0, 2.0),
        (4.0, 2.0, 2.0, 0.0, 0.0),
        (8.0, 4.0, 2.0, 0.0, 0.0),
    ];
    for (d, want) in ds.iter().zip(by_hand) {
        let s = structure_stats(d);
        assert_eq!((s.bp as f64, s.st_n as f64, s.st_l, s.hp_n as f64, s.hp_l), want);
    }
    let mean = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| by_hand.iter().map(f).sum::<f64>() / 9.0;
    let var = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| {
        let m = mean(f);
        by_hand.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / 9.0
    };
    assert!((rep.bp.mean - mean(|x| x.0)).abs() < 1e-12);
    assert!((rep.st_l.variance - var(|x| x.2)).abs() < 1e-12);
    assert!((rep.hp_l.variance - var(|x| x.4)).abs() < 1e-12);
    assert_eq!(rep.genus_counts, BTreeMap::from([(0, 4), (1, 4), (2, 1)]));
}
