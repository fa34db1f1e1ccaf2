//! Constrained fine-tuning: gradient steps on one MLP output projection,
//! projected back into an L-infinity box after every step.

mod support;

use editbench::editors::{efficacy_check, ftl_edit, EditorKind, EditorParams};

fn main() {
    let (world, ckpt) = support::world_and_model();
    let params = EditorParams::for_model(EditorKind::FtL, &ckpt.config);
    let r = world.cases[0].request();
    let out = ftl_edit(&ckpt, &r, &params).unwrap();
    let trace = out.diagnostics.fine_tune.as_ref().unwrap();
    println!("epsilon {:.1e}, {} steps at lr {}", params.ftl_epsilon, params.ftl_steps, params.ftl_learning_rate);
    println!("loss {:.4} -> {:.4}", trace.losses[0], trace.losses.last().unwrap());
    println!("max |delta| {:.3e}", trace.max_abs_delta);
    let e = efficacy_check(&out, &r).unwrap();
    println!("p(new) {:.4} -> {:.4}, success {}", e.p_pre_new, e.p_post_new, e.success);
}
