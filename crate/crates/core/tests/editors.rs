mod common;

use std::sync::OnceLock;

use proptest::prelude::*;

use editbench::editors::{
    apply_edit, collect_key, efficacy_check, ftl_edit, locate_subject, memit_lite_edit, rome_edit, sample_prefixes,
    solve_value, EditContext, EditorKind, EditorParams,
};
use editbench::tinylm::FinalTokenNll;

use common::Fixture;

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| common::quick(21))
}

fn params(kind: EditorKind) -> EditorParams {
    EditorParams::for_model(kind, &fixture().ckpt.config)
}

fn context(p: &EditorParams) -> EditContext {
    EditContext::prepare(&fixture().ckpt, &fixture().world.corpus, p).unwrap()
}

#[test]
fn defaults_for_two_layers() {
    let p = params(EditorKind::Rome);
    assert_eq!((p.layer, p.layer_lo, p.layer_hi), (0, 0, 1));
    assert_eq!(p.layers(), vec![0]);
    assert_eq!(params(EditorKind::MemitLite).layers(), vec![0, 1]);
}

#[test]
fn subject_site_is_last_subject_token() {
    let f = fixture();
    let r = f.world.cases[0].request();
    let site = locate_subject(&f.ckpt, &r, "").unwrap();
    let parts = r.subject.split(' ').count();
    // BOS, then the subject's parts
    assert_eq!(site.subject_position, parts);
    let prefixed = locate_subject(&f.ckpt, &r, &f.world.corpus[0]).unwrap();
    let lead = f.ckpt.tokenizer.encode(&f.world.corpus[0]).len() - 1;
    assert_eq!(prefixed.subject_position, parts + lead);
}

#[test]
fn key_is_mean_of_traced_keys() {
    let f = fixture();
    let r = f.world.cases[3].request();
    let prefixes = sample_prefixes(&f.world.corpus, 5, 8);
    assert_eq!(prefixes.len(), 5);
    assert_eq!(prefixes[0], "");
    let key = collect_key(&f.ckpt, &r, 0, &prefixes).unwrap();
    let mut oracle = vec![0.0; key.len()];
    for p in &prefixes {
        let site = locate_subject(&f.ckpt, &r, p).unwrap();
        let trace = f.ckpt.forward_traced(&site.tokens).unwrap();
        for (o, k) in oracle.iter_mut().zip(&trace.site(0, site.subject_position).key) {
            *o += k / 5.0;
        }
    }
    for (a, b) in key.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn rome_writes_value_at_key() {
    let f = fixture();
    let p = params(EditorKind::Rome);
    let ctx = context(&p);
    for case in f.world.cases.iter().take(4) {
        let r = case.request();
        let out = rome_edit(&f.ckpt, &r, &p, &ctx).unwrap();
        assert!(out.is_local());
        assert_eq!(out.touched_layers, vec![0]);
        assert!(out.pre.bit_identical(&f.ckpt));
        let step = &out.diagnostics.rank_one[0];
        let lp = &out.post.layers[0];
        let m = f.ckpt.config.d_mlp;
        for (i, v) in step.value.iter().enumerate() {
            let wk = lp.b_out[i] as f64 + (0..m).map(|j| lp.w_out[i * m + j] as f64 * step.key[j]).sum::<f64>();
            assert!((wk - v).abs() <= 1e-5 * (1.0 + v.abs()), "{wk} vs {v}");
        }
        let e = efficacy_check(&out, &r).unwrap();
        assert_eq!(e.success, e.p_post_new > e.p_post_true);
    }
}

#[test]
fn edits_are_deterministic() {
    let f = fixture();
    let r = f.world.cases[5].request();
    for kind in [EditorKind::Rome, EditorKind::MemitLite, EditorKind::FtL] {
        let p = params(kind);
        let ctx = context(&p);
        let a = apply_edit(&f.ckpt, &r, &p, &ctx).unwrap();
        let b = apply_edit(&f.ckpt, &r, &p, &ctx).unwrap();
        assert!(a.post.bit_identical(&b.post), "{kind}");
    }
}

#[test]
fn none_is_identity() {
    let f = fixture();
    let p = params(EditorKind::None);
    let out = apply_edit(&f.ckpt, &f.world.cases[0].request(), &p, &context(&p)).unwrap();
    assert!(out.post.bit_identical(&f.ckpt));
    assert!(out.touched_layers.is_empty());
}

#[test]
fn memit_spreads_over_layers() {
    let f = fixture();
    let p = params(EditorKind::MemitLite);
    let ctx = context(&p);
    let out = memit_lite_edit(&f.ckpt, &f.world.cases[1].request(), &p, &ctx).unwrap();
    assert_eq!(out.touched_layers, vec![0, 1]);
    let scales: Vec<f64> = out.diagnostics.rank_one.iter().map(|s| s.residual_scale).collect();
    assert_eq!(scales, vec![0.5, 1.0]);
    assert!(out.is_local());
}

#[test]
fn single_layer_memit_matches_rome() {
    let f = fixture();
    let rome = params(EditorKind::Rome);
    let memit = EditorParams { kind: EditorKind::MemitLite, layer_lo: 0, layer_hi: 0, ..rome };
    let ctx = context(&rome);
    for case in f.world.cases.iter().take(3) {
        let r = case.request();
        let a = rome_edit(&f.ckpt, &r, &rome, &ctx).unwrap();
        let b = memit_lite_edit(&f.ckpt, &r, &memit, &ctx).unwrap();
        assert!(a.post.bit_identical(&b.post));
    }
}

#[test]
fn ftl_stays_in_box() {
    let f = fixture();
    let p = params(EditorKind::FtL);
    let r = f.world.cases[2].request();
    let out = ftl_edit(&f.ckpt, &r, &p).unwrap();
    let trace = out.diagnostics.fine_tune.as_ref().unwrap();
    assert_eq!(trace.losses.len(), p.ftl_steps + 1);
    assert!(trace.max_abs_delta <= p.ftl_epsilon);
    assert!(trace.losses.last() <= trace.losses.first());
    assert!(out.is_local());
    let zero = EditorParams { ftl_epsilon: 0.0, ..p };
    assert!(ftl_edit(&f.ckpt, &r, &zero).unwrap().post.bit_identical(&f.ckpt));
}

#[test]
fn value_losses_never_increase() {
    let f = fixture();
    let p = params(EditorKind::Rome);
    for case in f.world.cases.iter().take(6) {
        let sol = solve_value(&f.ckpt, &case.request(), 0, &p).unwrap();
        assert!(sol.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!((sol.final_loss - sol.losses.last().unwrap()).abs() == 0.0);
        let target = f.ckpt.tokenizer.object_first_token(&case.requested_rewrite.target_new.text).unwrap();
        let site = locate_subject(&f.ckpt, &case.request(), "").unwrap();
        let iv = editbench::tinylm::Intervention { layer: 0, position: site.subject_position, value: sol.value.clone() };
        let direct = f.ckpt.final_token_loss(&site.tokens, FinalTokenNll { target }, Some(&iv)).unwrap();
        assert!((direct - sol.final_loss).abs() < 1e-12);
    }
}

#[test]
fn bad_requests_rejected() {
    let f = fixture();
    let p = params(EditorKind::Rome);
    let ctx = context(&p);
    let mut r = f.world.cases[0].request();
    r.prompt_template = "No placeholder here".into();
    assert!(rome_edit(&f.ckpt, &r, &p, &ctx).is_err());
    let mut r = f.world.cases[0].request();
    r.target_new = "Zzyzx".into();
    assert!(rome_edit(&f.ckpt, &r, &p, &ctx).is_err());
    let mut r = f.world.cases[0].request();
    r.target_new = r.target_true.clone();
    assert!(rome_edit(&f.ckpt, &r, &p, &ctx).is_err());
    let bad = EditorParams { layer: 5, ..p };
    assert!(rome_edit(&f.ckpt, &f.world.cases[0].request(), &bad, &ctx).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ftl_radius_respected(case in 0usize..32, eps in 1e-6f64..2e-3, steps in 1usize..6) {
        let f = fixture();
        let p = EditorParams { ftl_epsilon: eps, ftl_steps: steps, ftl_learning_rate: 1e-2, ..params(EditorKind::FtL) };
        let out = ftl_edit(&f.ckpt, &f.world.cases[case].request(), &p).unwrap();
        for (a, b) in out.pre.layers[0].w_out.iter().zip(&out.post.layers[0].w_out) {
            prop_assert!((*b as f64 - *a as f64).abs() <= eps);
        }
        prop_assert!(out.is_local());
    }
}
