//! Neighborhood KL and the probability-comparison metrics on hand-built
//! distributions.

use editbench::metrics::{mean_nkl, nkl, nm, ns, PromptMeasurement, Variant};
use editbench::tinylm::NextTokenDistribution;

fn measure(pre: [f64; 3], post: [f64; 3]) -> PromptMeasurement {
    let (p, q) = (NextTokenDistribution { probs: pre.to_vec() }, NextTokenDistribution { probs: post.to_vec() });
    // token 0 is the true object, token 1 the new one
    PromptMeasurement {
        case_id: 0,
        prompt_index: 0,
        variant: Variant::Base,
        p_pre_correct: pre[0],
        p_pre_new: pre[1],
        p_post_correct: post[0],
        p_post_new: post[1],
        ns: post[0] > post[1],
        nm: post[0] - post[1],
        nkl: nkl(&p, &q).unwrap(),
    }
}

fn main() {
    let half = NextTokenDistribution { probs: vec![0.5, 0.5] };
    let skew = NextTokenDistribution { probs: vec![0.25, 0.75] };
    println!("NKL([.5,.5] || [.25,.75]) = {:.5} nats", nkl(&half, &skew).unwrap());

    let ms = [
        measure([0.7, 0.1, 0.2], [0.7, 0.1, 0.2]),
        measure([0.7, 0.1, 0.2], [0.5, 0.3, 0.2]),
        measure([0.6, 0.2, 0.2], [0.1, 0.8, 0.1]),
    ];
    for m in &ms {
        println!("ns {} nm {:+.2} nkl {:.4}", m.ns, m.nm, m.nkl);
    }
    println!("NS {:.3}  NM {:.3}  NKL {:.4}", ns(&ms).unwrap(), nm(&ms).unwrap(), mean_nkl(&ms).unwrap());
}
