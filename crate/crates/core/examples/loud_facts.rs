//! Edit twenty facts with ROME and compare neighborhood scores on the plain
//! prompts against the same prompts with the edit sentence in front.

mod support;

use editbench::editors::EditorKind;
use editbench::metrics::{Metric, Variant};
use editbench::protocol::{cmd_eval, summarize, EvalArgs, RunConfig};

fn main() {
    support::world_and_model();
    let dir = support::example_dir();
    let config = RunConfig::default();
    let out = dir.join("loud-facts");
    let args = EvalArgs {
        checkpoint: &dir.join("model.tlm"),
        dataset: &dir.join("world.json"),
        config: &config,
        editor: Some(EditorKind::Rome),
        cases: Some((0..20).collect()),
        seed: 0,
        threads: 1,
        timestamp: Some(0),
        out: &out,
    };
    let (run, table) = cmd_eval(&args).unwrap();
    let table = table.unwrap();
    for line in summarize(&table) {
        println!("{line}");
    }
    let ok = run.efficacy.iter().filter(|e| e.report.success).count();
    println!("efficacy {ok}/{}", run.efficacy.len());
    let nkl = |v| table.cell(EditorKind::Rome, Metric::Nkl, v).unwrap();
    let (base, plus) = (nkl(Variant::Base), nkl(Variant::Plus));
    println!("NKL rises {:.1}x once the edit is in context", plus.mean / base.mean);
    println!("records in {}", out.display());
}
