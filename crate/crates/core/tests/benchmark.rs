mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use editbench::benchmark::{
    edit_sentence, gen_world, parse_counterfact, plus_prompt, strip_edit_prefix, to_plus, validate_world, FactWorld,
    WorldSizes,
};
use editbench::editors::fill_template;
use editbench::protocol::{cmd_gen_plus, json};
use editbench::tinylm::split_units;

fn sample() -> Vec<editbench::benchmark::CaseRecord> {
    parse_counterfact(&std::fs::read(common::SAMPLE).unwrap()).unwrap()
}

#[test]
fn sample_parses_with_unknown_fields_kept() {
    let cases = sample();
    assert_eq!(cases.len(), 1);
    let c = &cases[0];
    assert_eq!(c.case_id, 0);
    assert_eq!(c.extra["pararel_idx"], 2796);
    assert_eq!(c.requested_rewrite.target_new.extra["id"], "Q1860");
    assert_eq!(c.neighborhood_prompts.len(), 10);
    assert_eq!(c.neighborhood_prompts[0], "The mother tongue of L\u{e9}on Blum is");
    assert_eq!(c.attribute_prompts[0], "J.\u{a0}R.\u{a0}R. Tolkien is a native speaker of");
}

#[test]
fn plus_sample_matches_expected_strings() {
    let expected: Vec<String> = serde_json::from_slice(&std::fs::read(common::PLUS_SAMPLE).unwrap()).unwrap();
    let plus = to_plus(&sample()[0]).unwrap();
    assert_eq!(plus.plus_neighborhood_prompts, expected);
    assert_eq!(
        edit_sentence(&sample()[0].request()).unwrap(),
        "The mother tongue of Danielle Darrieux is English."
    );
}

#[test]
fn gen_plus_file_roundtrip_and_double_prepend() {
    let dir = common::scratch("plus-");
    let once = dir.join("once.json");
    let s = cmd_gen_plus(std::path::Path::new(common::SAMPLE), &once).unwrap();
    assert_eq!(s.cases, 1);
    assert!(s.already_prefixed.is_empty());

    // feed the prefixed prompts back as neighborhood prompts
    let mut cases = sample();
    let plus = to_plus(&cases[0]).unwrap();
    cases[0].neighborhood_prompts = plus.plus_neighborhood_prompts.clone();
    let again = dir.join("again_in.json");
    std::fs::write(&again, json::to_pretty(&cases).unwrap()).unwrap();
    let twice = dir.join("twice.json");
    let s = cmd_gen_plus(&again, &twice).unwrap();
    assert_eq!(s.already_prefixed, vec![0]);
    let out: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(&twice).unwrap()).unwrap();
    let first = out[0]["plus_neighborhood_prompts"][0].as_str().unwrap();
    let sentence = "The mother tongue of Danielle Darrieux is English.";
    assert_eq!(first, format!("{sentence} {sentence} The mother tongue of L\u{e9}on Blum is"));
}

#[test]
fn gen_plus_empty_input() {
    let dir = common::scratch("plus-empty-");
    std::fs::write(dir.join("in.json"), "[]").unwrap();
    let s = cmd_gen_plus(&dir.join("in.json"), &dir.join("out.json")).unwrap();
    assert_eq!(s.cases, 0);
    let out: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(dir.join("out.json")).unwrap()).unwrap();
    assert!(out.is_empty());
}

#[test]
fn world_is_deterministic_per_seed() {
    let a = json::to_pretty(&gen_world(11, WorldSizes::default()).unwrap()).unwrap();
    let b = json::to_pretty(&gen_world(11, WorldSizes::default()).unwrap()).unwrap();
    let c = json::to_pretty(&gen_world(12, WorldSizes::default()).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let back = FactWorld::from_json(a.as_bytes()).unwrap();
    assert_eq!(json::to_pretty(&back).unwrap(), a);
}

#[test]
fn world_neighborhoods_share_relation_and_object() {
    let w = gen_world(5, WorldSizes::default()).unwrap();
    let r = validate_world(&w).unwrap();
    assert!(r.ok);
    assert_eq!(r.neighborhood_prompts_checked, w.cases.len() * w.sizes.neighborhood_size);
    for case in &w.cases {
        let rw = &case.requested_rewrite;
        let rel = w.relation(&rw.relation_id).unwrap();
        for p in &case.neighborhood_prompts {
            let fact = w
                .facts
                .iter()
                .find(|f| f.relation_id == rw.relation_id && rel.paraphrases.iter().any(|t| fill_template(t, &f.subject).unwrap() == *p))
                .unwrap();
            assert_ne!(fact.subject, rw.subject);
            assert_eq!(fact.object, rw.target_true.text);
        }
    }
}

#[test]
fn corpus_lines_fit_the_context() {
    let w = gen_world(6, WorldSizes::default()).unwrap();
    assert!(w.corpus.iter().all(|l| split_units(l).len() < w.sizes.max_line_tokens));
    let leads = w.corpus.iter().filter(|l| l.matches('.').count() > 2).count();
    assert!(leads > 0);
    let subjects: HashSet<&str> = w.facts.iter().map(|f| f.subject.as_str()).collect();
    assert_eq!(subjects.len(), w.facts.len());
}

#[test]
fn too_many_subjects_rejected() {
    let s = WorldSizes { relations: 6, subjects_per_relation: 21, ..WorldSizes::default() };
    assert!(gen_world(0, s).is_err());
}

proptest! {
    #[test]
    fn plus_prefix_is_invertible(prompt in "[A-Za-z ,]{1,40}", subject in "[A-Z][a-z]{1,8}", new in "[A-Z][a-z]{1,8}") {
        let mut case = sample().remove(0);
        case.requested_rewrite.subject = subject;
        case.requested_rewrite.target_new.text = new;
        let s = edit_sentence(&case.request()).unwrap();
        let p = plus_prompt(&s, &prompt);
        prop_assert_eq!(strip_edit_prefix(&p, &s), Some(prompt.as_str()));
    }

    #[test]
    fn small_worlds_validate(seed in 0u64..1000, relations in 1usize..=6, subjects in 2usize..=12, objects in 2usize..=8) {
        let sizes = WorldSizes { relations, subjects_per_relation: subjects, objects_per_relation: objects, ..WorldSizes::default() };
        let w = gen_world(seed, sizes).unwrap();
        prop_assert!(w.validation.ok);
        prop_assert_eq!(w.cases.len(), relations * subjects);
        for c in &w.cases {
            prop_assert_ne!(&c.requested_rewrite.target_new.text, &c.requested_rewrite.target_true.text);
        }
    }
}
