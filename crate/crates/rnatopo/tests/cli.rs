use std::path::{Path, PathBuf};

use rnatopo::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use rnatopo::corpus::parse_corpus_strict;
use rnatopo::lambda_text::parse_lambda;
use rnatopo::model_json::model_from_json;
use rnatopo::TOY_CORPUS;
use rnatopo_core::diagram::Diagram;
use rnatopo_core::lambda::lambda_from_pk;
use rnatopo_core::scfg::stats;
use rnatopo_core::unicellular::UnicellularMap;
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rnatopo(args: &[&str]) -> Out {
    let mut o = Vec::new();
    let mut e = Vec::new();
    let code = run(std::iter::once("rnatopo").chain(args.iter().copied()), &mut o, &mut e);
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn genus_rows() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.tsv", "# c\nx\t-\t([)]\ny\tGGCC\t(())\n");
    let out = rnatopo(&["genus", s(&f)]);
    assert_eq!(out.code, EXIT_OK);
    assert_eq!(out.stdout, "id\tn\tarcs\tcrossings\tr\tgenus\nx\t4\t2\t1\t1\t1\ny\t4\t2\t0\t3\t0\n");
}

#[test]
fn genus_of_empty_file_is_header_only() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "e.tsv", "");
    let out = rnatopo(&["genus", s(&f)]);
    assert_eq!(out.code, EXIT_OK);
    assert_eq!(out.stdout, "id\tn\tarcs\tcrossings\tr\tgenus\n");
}

#[test]
fn genus_reports_bad_lines_and_keeps_going() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "b.tsv", "x\t-\t((\ny\t-\t()\n");
    let out = rnatopo(&["genus", s(&f)]);
    assert_eq!(out.code, EXIT_DATA);
    assert!(out.stderr.contains("line 1"), "{}", out.stderr);
    assert!(out.stdout.contains("\ny\t2\t1\t0\t2\t0\n"));
}

#[test]
fn blueprints_and_lambda_listings() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.tsv", "x\t-\t([)]\ny\t-\t(())\n");
    let out = rnatopo(&["blueprints", s(&f)]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stdout.contains(">x n=4 genus=1 m=2\n"));
    assert!(out.stdout.contains(">y n=4 genus=0 m=1\n"));
    assert_eq!(out.stdout.matches("blueprint ").count(), 3);

    let out = rnatopo(&["lambda", s(&f)]);
    assert_eq!(out.code, EXIT_OK);
    let recs = parse_lambda(&out.stdout).unwrap();
    let ids: Vec<&str> = recs.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["x/1", "x/2", "y/1"]);
    assert!(recs[..2].iter().all(|r| r.structure.genus() == 1 && r.structure.r() == 1));
    assert_ne!(recs[0].structure, recs[1].structure);
    assert!(recs[2].structure.labeled_arcs().iter().all(|a| a.2.is_zero()));
    assert_eq!(recs[2].structure.r(), 0);
    assert_eq!(out.stdout.matches("# rho=").count(), 3);
}

#[test]
fn lambda_listing_matches_library_enumeration() {
    let fixture = Diagram::new(10, &[(1, 10), (2, 5), (3, 8), (4, 7), (6, 9)]).unwrap();
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "f.tsv", &format!("fix\t-\t{}\n", fixture.to_dot_bracket().unwrap()));
    let out = rnatopo(&["lambda", s(&f)]);
    assert_eq!(out.code, EXIT_OK);
    let listed: Vec<_> = parse_lambda(&out.stdout).unwrap().into_iter().map(|r| r.structure).collect();
    let want: Vec<_> = UnicellularMap::dual_of_matching(&fixture)
        .unwrap()
        .blueprints()
        .iter()
        .map(|bp| lambda_from_pk(&fixture, bp).unwrap())
        .collect();
    assert_eq!(listed, want);
    let bp = rnatopo(&["blueprints", s(&f)]);
    assert!(bp.stdout.starts_with(&format!(">fix n=10 genus=1 m={}\n", want.len())));
}

#[test]
fn genus_cap_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.tsv", "x\t-\t([)]\n");
    let out = rnatopo(&["blueprints", "--genus-cap", "0", s(&f)]);
    assert_eq!(out.code, EXIT_DATA);
    assert!(out.stderr.contains("exceeds the cap"));
}

#[test]
fn parse_prints_one_tree_per_blueprint() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.tsv", "x\tGCGC\t([)]\ny\t-\t((...))\n");
    let out = rnatopo(&["parse", s(&f)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert_eq!(out.stdout.matches('>').count(), 3);
    assert!(out.stdout.contains("(ini Start"));
    assert!(out.stdout.contains("x=G"));
    let simple = rnatopo(&["parse", "--grammar", "simple", s(&f)]);
    assert!(simple.stdout.contains("(s_ini Start"));
    let strict = rnatopo(&["parse", "--min-hairpin", "4", s(&f)]);
    assert_eq!(strict.code, EXIT_DATA);
}

#[test]
fn train_sample_score_stats_pipeline() {
    let dir = TempDir::new().unwrap();
    let corpus = write(&dir, "toy.tsv", TOY_CORPUS);
    let model = dir.path().join("model.json");
    let out = rnatopo(&["train", s(&corpus), "--genus-cap", "2", "-o", s(&model)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stderr.contains("trained on 11 of 11 records"));
    let m = model_from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.r_max(), 2);

    let score = rnatopo(&["score", "--model", s(&model), s(&corpus)]);
    assert_eq!(score.code, EXIT_OK);
    let rows: Vec<&str> = score.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        let p: f64 = cols[3].parse().unwrap();
        assert!(p > 0.0 && p <= 1.0, "{row}");
    }

    let args = ["sample", "--model", s(&model), "-n", "60", "--count", "300", "--seed", "7"];
    let a = rnatopo(&args);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout, rnatopo(&args).stdout);
    let mut other = args;
    other[8] = "8";
    assert_ne!(a.stdout, rnatopo(&other).stdout);
    assert!(a.stdout.contains("# variable\tmean\tvariance\n"));
    for v in ["bp", "st_n", "st_l", "hp_n", "hp_l"] {
        assert!(a.stdout.contains(&format!("\n# {v}\t")));
    }

    // the sample file reads back as a corpus with the same genera and stats
    let samples = write(&dir, "samples.tsv", &a.stdout);
    let recs = parse_corpus_strict(&a.stdout).unwrap();
    assert_eq!(recs.len(), 300);
    let g = rnatopo(&["genus", s(&samples)]);
    assert_eq!(g.code, EXIT_OK);
    let sampled: Vec<&str> = a.stdout.lines().filter(|l| !l.starts_with('#')).map(|l| l.rsplit('\t').next().unwrap()).collect();
    let recomputed: Vec<&str> = g.stdout.lines().skip(1).map(|l| l.rsplit('\t').next().unwrap()).collect();
    assert_eq!(sampled, recomputed);
    assert!(recomputed.iter().all(|g| g.parse::<usize>().unwrap() <= 2));

    let st = rnatopo(&["stats", s(&samples)]);
    assert_eq!(st.code, EXIT_OK);
    let footer: String = a
        .stdout
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .skip_while(|l| !l.starts_with("variable"))
        .map(|l| format!("{l}\n"))
        .collect();
    let table: String = st.stdout.lines().map(|l| format!("{}\n", l.trim_start_matches("# "))).collect();
    assert_eq!(footer, table);
    let rep = stats(&recs.iter().map(|r| r.diagram.clone()).collect::<Vec<_>>());
    assert_eq!(rep.count, 300);
}

#[test]
fn json_outputs_parse() {
    let dir = TempDir::new().unwrap();
    let corpus = write(&dir, "toy.tsv", TOY_CORPUS);
    for cmd in ["genus", "blueprints", "lambda", "parse", "stats"] {
        let out = rnatopo(&[cmd, "--format", "json", s(&corpus)]);
        assert_eq!(out.code, EXIT_OK, "{cmd}: {}", out.stderr);
        let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        assert!(v.is_array() || v.is_object());
    }
    let out = rnatopo(&["count", "8", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v[8]["secondary"], "82");
}

#[test]
fn count_table() {
    let out = rnatopo(&["count", "8", "--genus-cap", "0"]);
    assert_eq!(out.code, EXIT_OK);
    let secondary: Vec<&str> = out.stdout.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(secondary, ["1", "1", "1", "2", "4", "8", "17", "37", "82"]);
    assert!(out.stdout.lines().skip(1).all(|l| {
        let c: Vec<&str> = l.split('\t').collect();
        c[1] == c[2]
    }));
    let pk = rnatopo(&["count", "4", "--genus-cap", "1", "--min-hairpin", "0"]);
    // 9 noncrossing structures of length 4 plus the two blueprints of ([)]
    assert_eq!(pk.stdout.lines().last().unwrap(), "4\t9\t11");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(rnatopo(&[]).code, EXIT_USAGE);
    assert_eq!(rnatopo(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(rnatopo(&["genus"]).code, EXIT_USAGE);
    assert_eq!(rnatopo(&["count", "x"]).code, EXIT_USAGE);
    assert_eq!(rnatopo(&["count", "3", "--genus-cap", "40"]).code, EXIT_USAGE);
    let no_seed = rnatopo(&["sample", "--model", "m.json"]);
    assert_eq!(no_seed.code, EXIT_USAGE);
    assert!(no_seed.stderr.contains("--seed"));
    let help = rnatopo(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("sample"));
}

#[test]
fn data_errors_exit_one() {
    assert_eq!(rnatopo(&["genus", "/nonexistent/x.tsv"]).code, EXIT_DATA);
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "m.json", "{\"version\": 1}");
    assert_eq!(rnatopo(&["sample", "--model", s(&bad), "--seed", "1"]).code, EXIT_DATA);
    let empty = write(&dir, "e.tsv", "x\t-\t()\n");
    assert_eq!(rnatopo(&["train", s(&empty)]).code, EXIT_DATA);
}
