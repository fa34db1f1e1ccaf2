//! The same edit spread across several layers, each taking a share of the
//! remaining residual.

mod support;

use editbench::editors::{efficacy_check, memit_lite_edit, EditContext, EditorKind, EditorParams};

fn main() {
    let (world, ckpt) = support::world_and_model();
    let params = EditorParams::for_model(EditorKind::MemitLite, &ckpt.config);
    let ctx = EditContext::prepare(&ckpt, &world.corpus, &params).unwrap();
    let mut wins = 0;
    for case in world.cases.iter().take(5) {
        let r = case.request();
        let out = memit_lite_edit(&ckpt, &r, &params, &ctx).unwrap();
        let e = efficacy_check(&out, &r).unwrap();
        wins += e.success as usize;
        println!("case {}: p(new) {:.4} -> {:.4}", case.case_id, e.p_pre_new, e.p_post_new);
        for s in &out.diagnostics.rank_one {
            println!("  layer {} scale {:.2} residual {:.4}", s.layer, s.residual_scale, s.residual_norm);
        }
    }
    println!("efficacy {wins}/5");
}
