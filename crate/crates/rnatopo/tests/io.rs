use rnatopo::corpus::{parse_corpus_strict, write_corpus, CorpusRecord, CorpusSummary};
use rnatopo::lambda_text::{parse_lambda, write_lambda};
use rnatopo::model_json::{model_from_json, model_to_json, ModelFile, ModelFileError};
use rnatopo::TOY_CORPUS;
use rnatopo_core::diagram::{Base, Diagram, IndexMap, Sequence};
use rnatopo_core::grammar::Grammar;
use rnatopo_core::lambda::{lambda_from_pk, lambda_from_pk_with_sequence};
use rnatopo_core::scfg::{train, Model};
use rnatopo_core::unicellular::UnicellularMap;

fn matchings(n: usize) -> Vec<Diagram> {
    fn rec(partner: &mut Vec<Option<usize>>, out: &mut Vec<Diagram>) {
        match partner.iter().position(Option::is_none) {
            None => out.push(Diagram::from_partners(partner.clone()).unwrap()),
            Some(i) => {
                for j in i + 1..partner.len() {
                    if partner[j].is_none() {
                        partner[i] = Some(j + 1);
                        partner[j] = Some(i + 1);
                        rec(partner, out);
                        partner[i] = None;
                        partner[j] = None;
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut vec![None; 2 * n], &mut out);
    out
}

fn toy_model() -> Model {
    let recs = parse_corpus_strict(TOY_CORPUS).unwrap();
    let pairs: Vec<_> = recs
        .iter()
        .map(|r| (r.diagram.clone(), r.sequence.clone().unwrap()))
        .collect();
    train(&Grammar::loops(1, 2), &pairs, 1e-3).unwrap().model
}

#[test]
fn toy_corpus_composition() {
    let recs = parse_corpus_strict(TOY_CORPUS).unwrap();
    assert!((10..=12).contains(&recs.len()));
    for r in &recs {
        assert!((10..=40).contains(&r.diagram.len()), "{}", r.id);
        assert!(r.genus() <= 2);
        let q = r.sequence.as_ref().unwrap();
        for (i, j) in r.diagram.arcs() {
            let pair = (q.0[i - 1], q.0[j - 1]);
            assert!(
                matches!(
                    pair,
                    (Base::G, Base::C) | (Base::C, Base::G) | (Base::A, Base::U) | (Base::U, Base::A) | (Base::G, Base::U) | (Base::U, Base::G)
                ),
                "{} ({i},{j})",
                r.id
            );
        }
    }
    let s = CorpusSummary::of(&recs);
    assert_eq!(s.genus_counts.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn corpus_round_trip() {
    let recs = parse_corpus_strict(TOY_CORPUS).unwrap();
    let text = write_corpus(&recs).unwrap();
    let back = parse_corpus_strict(&text).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!((&a.id, &a.sequence, &a.diagram), (&b.id, &b.sequence, &b.diagram));
    }
}

/// Builds a corpus with the composition of a 90-record tRNA set: 16, 73
/// and 1 records of genus 0, 1 and 2 whose lengths total 6769.
#[test]
fn ninety_record_summary() {
    let shapes = [
        (0, "((((((...))))))..((((....))))"),
        (1, "((((..[[[[..))))..]]]].((((....))))"),
        (2, "((..[[..))..]]..{{..<<..}}..>>"),
    ];
    let mut recs = Vec::new();
    let counts = [16, 73, 1];
    let mut total = 0;
    for (g, base) in shapes {
        let d = Diagram::parse(base).unwrap();
        assert_eq!(CorpusRecord::new("probe", None, d.clone()).genus(), g);
        for k in 0..counts[g] {
            // pad with unpaired tails so that the lengths vary
            let pad = 70 - base.len() + (k * 7 + g) % 11;
            let text = format!("{base}{}", ".".repeat(pad));
            let d = Diagram::parse(&text).unwrap();
            total += d.len();
            recs.push(CorpusRecord::new(format!("t{g}_{k}"), None, d));
        }
    }
    // trim or extend the last record to hit the target total
    let target = 6769;
    let last = recs.pop().unwrap();
    let mut text = last.diagram.to_dot_bracket().unwrap();
    total -= text.len();
    let want = target - total;
    while text.len() < want {
        text.push('.');
    }
    while text.len() > want {
        assert_eq!(text.pop(), Some('.'));
    }
    recs.push(CorpusRecord::new(last.id, None, Diagram::parse(&text).unwrap()));
    let s = CorpusSummary::of(&recs);
    assert_eq!(s.records, 90);
    assert_eq!(s.genus_histogram(), "16/73/1");
    assert_eq!(format!("{:.2}", s.mean_length), "75.21");
    assert_eq!(s.to_string(), "90 records, genus counts 16/73/1, mean length 75.21");
}

#[test]
fn lambda_text_round_trips_every_blueprint() {
    let mut top_r = 0;
    for n in 0..=5 {
        for m in matchings(n) {
            let u = UnicellularMap::dual_of_matching(&m).unwrap();
            for idx in [IndexMap::zero(m.len()), IndexMap::new(vec![1; m.len() + 1])] {
                let d = idx.insert_unpaired(&m).unwrap();
                for bp in u.blueprints() {
                    let s = lambda_from_pk(&d, &bp).unwrap();
                    let text = write_lambda("x", &s, None);
                    let back = parse_lambda(&text).unwrap();
                    assert_eq!(back.len(), 1);
                    assert_eq!(back[0].structure, s, "{text}");
                    top_r = top_r.max(s.r());
                }
            }
        }
    }
    assert_eq!(top_r, 2);
}

#[test]
fn lambda_text_keeps_sequences_and_order() {
    let recs = parse_corpus_strict(TOY_CORPUS).unwrap();
    let mut text = String::new();
    let mut want = Vec::new();
    for r in &recs {
        let u = UnicellularMap::dual_of_matching(&r.diagram.to_matching().0).unwrap();
        for (k, bp) in u.blueprints().iter().enumerate() {
            let (s, q) = lambda_from_pk_with_sequence(&r.diagram, bp, r.sequence.as_ref().unwrap()).unwrap();
            let id = format!("{}/{}", r.id, k + 1);
            text.push_str("# comment\n");
            text.push_str(&write_lambda(&id, &s, Some(&q)));
            want.push((id, s, q));
        }
    }
    let back = parse_lambda(&text).unwrap();
    assert_eq!(back.len(), want.len());
    for (b, (id, s, q)) in back.iter().zip(&want) {
        assert_eq!(&b.id, id);
        assert_eq!(&b.structure, s);
        assert_eq!(b.sequence.as_ref(), Some(q));
    }
}

#[test]
fn lambda_text_rejects_invalid_labels() {
    // coordinate 1 set on two elements only
    let bad = ">x\nLEVELS 1\n(())\nRAINBOW 1\nARC 1 4 LABEL 1\nARC 2 3 LABEL 0\n";
    assert!(parse_lambda(bad).is_err());
    let good = ">x\nLEVELS 1\n(())\nRAINBOW 1\nARC 1 4 LABEL 1\nARC 2 3 LABEL 1\n";
    assert_eq!(parse_lambda(good).unwrap()[0].structure.genus(), 1);
    let empty = write_lambda("e", &rnatopo_core::LambdaStructure::unlabeled(Diagram::empty(0)).unwrap(), Some(&Sequence(vec![])));
    assert_eq!(parse_lambda(&empty).unwrap()[0].structure.len(), 0);
}

#[test]
fn trained_model_round_trips_exactly() {
    let m = toy_model();
    let text = model_to_json(&m);
    let back = model_from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(model_to_json(&back), text);
    let file: ModelFile = serde_json::from_str(&text).unwrap();
    assert_eq!(file.r_max, 2);
    assert_eq!(file.min_hairpin, 1);
    assert!(file.rules.iter().all(|r| r.params.contains_key("lhs")));
    assert!(file.rules.iter().all(|r| r.prob.parse::<f64>().is_ok()));
}

#[test]
fn loader_checks_normalization_and_rules() {
    let m = toy_model();
    let mut file = ModelFile::from_model(&m);
    let k = file.rules.iter().position(|r| r.id != "*").unwrap();
    let p: f64 = file.rules[k].prob.parse().unwrap();
    file.rules[k].prob = format!("{}", p + 1e-9);
    assert!(matches!(file.to_model(), Err(ModelFileError::Model(_))));

    let mut file = ModelFile::from_model(&m);
    file.rules[k].prob = format!("{}", p + 1e-14);
    let _ = file.to_model().unwrap();

    let mut file = ModelFile::from_model(&m);
    file.version = "other/9".into();
    assert!(matches!(file.to_model(), Err(ModelFileError::Version(_))));

    let mut file = ModelFile::from_model(&m);
    file.rules[k].id = "no_such_rule".into();
    assert!(matches!(file.to_model(), Err(ModelFileError::Rule { .. })));

    let mut file = ModelFile::from_model(&m);
    file.rules[k].prob = "0,5".into();
    assert!(matches!(file.to_model(), Err(ModelFileError::Number(_))));

    assert!(matches!(model_from_json("{"), Err(ModelFileError::Json(_))));
}
