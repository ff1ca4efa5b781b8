mod common;

use common::{all_sequences, count, mock_driver, program, straight_line};
use spectrum_forge::ir::{extract_autophase, parse_ir};
use spectrum_forge::mock::run_passes;
use spectrum_forge::probe::{
    build_probe_set, cluster_corpus, search_probe, FailurePolicy, GeneticParams, ProbeBuildConfig, ProbeError,
    Program, SearchConfig, SearchMethod,
};

fn pool(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Mean relative instruction reduction of `seq` over `programs`, computed in-process.
fn oracle_score(programs: &[Program], seq: &[String]) -> f64 {
    let total: f64 = programs
        .iter()
        .map(|p| {
            let before = count(&p.text) as f64;
            let after = count(&run_passes(&p.text, seq).unwrap()) as f64;
            (before - after) / before
        })
        .sum();
    total / programs.len() as f64
}

fn exhaustive_best(programs: &[Program], pool: &[String], len: usize) -> (Vec<String>, f64) {
    let mut best: Option<(Vec<String>, f64)> = None;
    for s in all_sequences(pool.len(), len) {
        let seq: Vec<String> = s.iter().map(|&i| pool[i].clone()).collect();
        let v = oracle_score(programs, &seq);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((seq, v));
        }
    }
    best.unwrap()
}

fn group() -> Vec<Program> {
    vec![program("f01_two_blocks.ll"), program("f11_oz_quarter.ll"), program("f03_loop.ll")]
}

const POOL3: &[&str] = &["drop1-add", "instcombine", "early-cse"];

#[test]
fn greedy_and_genetic_reach_the_exhaustive_optimum() {
    let programs = group();
    let pool = pool(POOL3);
    let (_, best) = exhaustive_best(&programs, &pool, 2);
    let d = mock_driver();

    let greedy = search_probe(&d, &programs, &pool, &SearchConfig::new(2, SearchMethod::Greedy, 1)).unwrap();
    assert!((greedy.score - best).abs() < 1e-12, "greedy {} vs {best}", greedy.score);
    assert!((oracle_score(&programs, &greedy.passes) - greedy.score).abs() < 1e-12);

    for population in [4, 32] {
        let mut cfg = SearchConfig::new(2, SearchMethod::Genetic, 5);
        cfg.budget = Some(9);
        cfg.genetic = GeneticParams {
            population,
            tournament: 2,
            elitism: 1,
        };
        let ga = search_probe(&d, &programs, &pool, &cfg).unwrap();
        assert!((ga.score - best).abs() < 1e-12, "pop {population}: {} vs {best}", ga.score);
        assert_eq!(ga.evaluations, 9);
        assert!(!ga.budget_exhausted);
    }
}

#[test]
fn genetic_over_many_seeds() {
    let programs = group();
    let pool = pool(POOL3);
    let (_, best) = exhaustive_best(&programs, &pool, 2);
    let d = mock_driver();
    for seed in 0..8 {
        let mut cfg = SearchConfig::new(2, SearchMethod::Genetic, seed);
        cfg.budget = Some(9);
        cfg.genetic.population = 3;
        cfg.genetic.elitism = 1;
        let ga = search_probe(&d, &programs, &pool, &cfg).unwrap();
        assert!((ga.score - best).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn single_step_prefers_the_reducing_pass() {
    // drop-mul removes 2 here, noop removes nothing
    let text = "define i32 @m(i32 %a) {\nentry:\n  %x = mul i32 %a, %a\n  %y = mul i32 %x, %a\n  ret i32 %a\n}\n";
    let programs = vec![Program::new("m", text)];
    let d = mock_driver();
    for pool in [pool(&["drop-mul", "noop"]), pool(&["noop", "drop-mul"])] {
        let out = search_probe(&d, &programs, &pool, &SearchConfig::new(1, SearchMethod::Greedy, 0)).unwrap();
        assert_eq!(out.passes, vec!["drop-mul"]);
        assert!((out.score - 2.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn equal_scores_take_the_first_pool_entry() {
    let programs = vec![program("f01_two_blocks.ll")];
    let d = mock_driver();
    let out = search_probe(&d, &programs, &pool(&["noop", "dce"]), &SearchConfig::new(2, SearchMethod::Greedy, 0)).unwrap();
    assert_eq!(out.passes, vec!["noop", "noop"]);
    assert_eq!(out.score, 0.0);
}

#[test]
fn single_pass_pool_repeats_it() {
    let programs = group();
    let d = mock_driver();
    for method in [SearchMethod::Greedy, SearchMethod::Genetic] {
        let out = search_probe(&d, &programs, &pool(&["drop1-add"]), &SearchConfig::new(3, method, 0)).unwrap();
        assert_eq!(out.passes, vec!["drop1-add"; 3]);
        assert_eq!(out.evaluations, if method == SearchMethod::Greedy { 3 } else { 1 });
    }
}

#[test]
fn tiny_budget_still_returns_full_length() {
    let programs = group();
    let mut cfg = SearchConfig::new(4, SearchMethod::Greedy, 0);
    cfg.budget = Some(2);
    let out = search_probe(&mock_driver(), &programs, &pool(POOL3), &cfg).unwrap();
    assert_eq!(out.passes.len(), 4);
    assert!(out.budget_exhausted);
}

#[test]
fn crashing_pass_scores_zero_or_aborts() {
    let programs = group();
    let d = mock_driver();
    let pool = pool(&["crash", "drop1-add"]);
    let out = search_probe(&d, &programs, &pool, &SearchConfig::new(1, SearchMethod::Greedy, 0)).unwrap();
    assert_eq!(out.passes, vec!["drop1-add"]);
    let mut strict = SearchConfig::new(1, SearchMethod::Greedy, 0);
    strict.policy = FailurePolicy::Strict;
    assert!(matches!(search_probe(&d, &programs, &pool, &strict), Err(ProbeError::Driver(_))));
}

fn two_blobs() -> Vec<Program> {
    // blob 0: add-heavy; blob 1: store-heavy
    let mut out = Vec::new();
    for i in 0..4 {
        out.push(Program::new(format!("adds{i}"), straight_line("a", 20 + i, 1)));
        out.push(Program::new(format!("stores{i}"), straight_line("s", 1, 20 + i)));
    }
    out
}

#[test]
fn each_cluster_gets_its_own_best_probe() {
    let corpus = two_blobs();
    let pool = pool(&["noop", "drop-add", "drop-store"]);
    let d = mock_driver();
    let cfg = ProbeBuildConfig::new(2, 1, SearchMethod::Greedy, 3);
    let set = build_probe_set(&d, &corpus, &pool, &cfg).unwrap();
    assert_eq!(set.len(), 2);

    let features: Vec<_> = corpus.iter().map(|p| extract_autophase(&parse_ir(&p.text).unwrap())).collect();
    let seed = spectrum_forge::digest::stage_seed(3, "probe-clustering");
    let clustering = cluster_corpus(&features, 2, seed).unwrap();
    for c in 0..2 {
        let members: Vec<Program> = corpus
            .iter()
            .zip(&clustering.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p.clone())
            .collect();
        // blob membership is recovered
        let kinds: std::collections::BTreeSet<bool> = members.iter().map(|p| p.id.starts_with("adds")).collect();
        assert_eq!(kinds.len(), 1);
        assert_eq!(members.len(), 4);
        let (want, score) = exhaustive_best(&members, &pool, 1);
        assert_eq!(set.probes[c].passes, want);
        assert!((set.probes[c].provenance.score - score).abs() < 1e-12);
        assert_eq!(set.probes[c].provenance.cluster_size, 4);
    }
    let chosen: Vec<&str> = set.probes.iter().map(|p| p.passes[0].as_str()).collect();
    assert!(chosen.contains(&"drop-add") && chosen.contains(&"drop-store"), "{chosen:?}");
}

#[test]
fn seeded_builds_serialize_identically() {
    let corpus = two_blobs();
    let pool = pool(&["noop", "drop-add", "drop-store", "dce"]);
    let d = mock_driver();
    for method in [SearchMethod::Greedy, SearchMethod::Genetic] {
        let mut cfg = ProbeBuildConfig::new(2, 2, method, 17);
        cfg.budget = Some(10);
        let a = build_probe_set(&d, &corpus, &pool, &cfg).unwrap().to_json();
        let b = build_probe_set(&d, &corpus, &pool, &cfg).unwrap().to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn more_probes_than_programs_is_rejected() {
    let corpus = group();
    let cfg = ProbeBuildConfig::new(4, 1, SearchMethod::Greedy, 0);
    let err = build_probe_set(&mock_driver(), &corpus, &pool(POOL3), &cfg).unwrap_err();
    assert!(matches!(err, ProbeError::TooFewPrograms { needed: 4, available: 3 }), "{err:?}");
}

#[test]
fn probe_set_file_round_trip() {
    let corpus = two_blobs();
    let set = build_probe_set(&mock_driver(), &corpus, &pool(POOL3), &ProbeBuildConfig::new(2, 2, SearchMethod::Greedy, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probes.json");
    set.write(&path).unwrap();
    assert_eq!(spectrum_forge::probe::ProbeSet::read(&path).unwrap(), set);
}
