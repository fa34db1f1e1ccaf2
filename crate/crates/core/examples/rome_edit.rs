//! One ROME edit: the new object overtakes the old one on the edited
//! prompt, and only one MLP projection changes.

mod support;

use editbench::editors::{efficacy_check, rome_edit, EditContext, EditorKind, EditorParams};

fn main() {
    let (world, ckpt) = support::world_and_model();
    let params = EditorParams::for_model(EditorKind::Rome, &ckpt.config);
    let ctx = EditContext::prepare(&ckpt, &world.corpus, &params).unwrap();
    let case = &world.cases[0];
    let request = case.request();
    println!("{} -> {}", request.filled_prompt().unwrap(), request.target_new);

    let out = rome_edit(&ckpt, &request, &params, &ctx).unwrap();
    let e = efficacy_check(&out, &request).unwrap();
    println!("p(true) {:.4} -> {:.4}", e.p_pre_true, e.p_post_true);
    println!("p(new)  {:.4} -> {:.4}", e.p_pre_new, e.p_post_new);
    println!("success {}", e.success);
    for d in &out.deltas {
        println!("layer {} |dW|_F {:.4} |dW|_inf {:.4}", d.layer, d.frobenius, d.linf);
    }
    let step = &out.diagnostics.rank_one[0];
    println!(
        "value search: {} steps, loss {:.4}, p(new | v*) {:.4}, key norm {:.3}",
        step.value_iterations, step.value_loss, step.value_prob, step.key_norm
    );
}
