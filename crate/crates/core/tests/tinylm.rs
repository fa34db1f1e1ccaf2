use editbench::tinylm::gradcheck::{self, relative_error};
use editbench::tinylm::io;
use editbench::tinylm::{train, Checkpoint, FinalTokenNll, Intervention, ModelConfig, Tokenizer, TrainSpec};
use editbench::Error;

const CORPUS: [&str; 3] = [
    "Mira Tolan lives in Paris.",
    "The mother tongue of Mira Tolan is French.",
    "Oskar Venn lives in Rome.",
];

fn tokenizer() -> Tokenizer {
    Tokenizer::build(&CORPUS).unwrap()
}

fn model(n_layers: usize, seed: u64) -> Checkpoint {
    let tok = tokenizer();
    let mut cfg = ModelConfig::small(tok.vocab_size());
    cfg.n_layers = n_layers;
    cfg.d_model = 16;
    cfg.n_heads = 4;
    cfg.d_mlp = 32;
    cfg.max_seq_len = 16;
    cfg.seed = seed;
    Checkpoint::init(cfg, tok).unwrap()
}

/// Scales up the random init so gradients are not vanishingly small.
fn lively(mut c: Checkpoint) -> Checkpoint {
    for block in c.blocks_mut() {
        for v in block.iter_mut() {
            *v *= 20.0;
        }
    }
    for l in &mut c.layers {
        l.ln1_g.iter_mut().for_each(|v| *v = 1.0);
        l.ln2_g.iter_mut().for_each(|v| *v = 1.0);
    }
    c.lnf_g.iter_mut().for_each(|v| *v = 1.0);
    c
}

fn prompt(c: &Checkpoint) -> Vec<u32> {
    c.tokenizer.encode("The mother tongue of Mira Tolan is")
}

#[test]
fn forward_is_normalized_and_deterministic() {
    let c = lively(model(2, 0));
    let toks = prompt(&c);
    let a = c.forward(&toks).unwrap();
    let b = c.forward(&toks).unwrap();
    assert_eq!(a, b);
    let sum: f64 = a.probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-6);
    assert!(a.probs.iter().all(|&p| p >= 0.0));

    // bit-identical from another thread
    let c2 = c.clone();
    let t2 = toks.clone();
    let other = std::thread::spawn(move || c2.forward(&t2).unwrap()).join().unwrap();
    assert!(a.probs.iter().zip(&other.probs).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_unembedding_gives_uniform() {
    let mut c = model(1, 0);
    c.unembed.iter_mut().for_each(|v| *v = 0.0);
    let dist = c.forward(&prompt(&c)).unwrap();
    let u = 1.0 / c.config.vocab_size as f64;
    assert!(dist.probs.iter().all(|&p| (p - u).abs() < 1e-15));
}

#[test]
fn forward_rejects_bad_input() {
    let c = model(1, 0);
    assert!(matches!(c.forward(&[]), Err(Error::SequenceLength { .. })));
    let long = vec![0u32; c.config.max_seq_len + 1];
    assert!(matches!(c.forward(&long), Err(Error::SequenceLength { .. })));
    assert!(matches!(c.forward(&[0, 9999]), Err(Error::TokenId { id: 9999, .. })));
}

#[test]
fn trace_matches_forward_and_recomputes() {
    let c = lively(model(2, 1));
    let toks = prompt(&c);
    let trace = c.forward_traced(&toks).unwrap();
    assert_eq!(trace.site_count(), 2 * toks.len());
    assert_eq!(trace.distribution(), c.forward(&toks).unwrap());

    let (d, m) = (c.config.d_model, c.config.d_mlp);
    for (l, lp) in c.layers.iter().enumerate() {
        for p in 0..toks.len() {
            let site = trace.site(l, p);
            assert_eq!(site.mlp_input.len(), d);
            assert_eq!(site.key.len(), m);
            let mut max_err: f64 = 0.0;
            for j in 0..m {
                let mut h = lp.b_in[j] as f64;
                for i in 0..d {
                    h += lp.w_in[j * d + i] as f64 * site.mlp_input[i];
                }
                let g = 0.5 * h * (1.0 + (0.7978845608028654 * (h + 0.044715 * h * h * h)).tanh());
                max_err = max_err.max((g - site.key[j]).abs());
            }
            for i in 0..d {
                let mut o = lp.b_out[i] as f64;
                for j in 0..m {
                    o += lp.w_out[i * m + j] as f64 * site.key[j];
                }
                max_err = max_err.max((o - site.value[i]).abs());
            }
            assert!(max_err < 1e-12, "layer {l} pos {p}: {max_err}");
        }
    }
}

#[test]
fn intervention_with_current_value_is_a_no_op() {
    let c = lively(model(2, 2));
    let toks = prompt(&c);
    let trace = c.forward_traced(&toks).unwrap();
    let iv = Intervention { layer: 0, position: 3, value: trace.site(0, 3).value.clone() };
    assert_eq!(c.forward_intervened(&toks, &iv).unwrap(), c.forward(&toks).unwrap());
}

#[test]
fn hidden_gradient_matches_finite_differences() {
    let c = lively(model(2, 3));
    let toks = prompt(&c);
    let target = c.tokenizer.object_first_token("French").unwrap();
    for (layer, pos) in [(0, 5), (1, 2), (0, toks.len() - 1)] {
        let report =
            gradcheck::check_hidden(&c, &toks, layer, pos, FinalTokenNll { target }, 100, 7).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let c = lively(model(2, 4));
    let toks = prompt(&c);
    let target = c.tokenizer.object_first_token("French").unwrap();
    for layer in 0..2 {
        let report = gradcheck::check_mlp(&c, &toks, layer, FinalTokenNll { target }, 100, 11).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn corrupted_gradient_is_detected() {
    let c = lively(model(2, 5));
    let toks = prompt(&c);
    let loss = FinalTokenNll { target: c.tokenizer.object_first_token("French").unwrap() };
    let report = gradcheck::check_hidden_with(&c, &toks, 0, 5, loss, 100, 1, |c, t, l, p, loss| {
        let mut g = c.grad_wrt_hidden(t, l, p, loss)?.grad;
        g.iter_mut().for_each(|v| *v *= 1.01);
        Ok(g)
    })
    .unwrap();
    assert!(!report.passed(), "{report:?}");
}

#[test]
fn causally_disconnected_gradient_is_zero() {
    let mut c = lively(model(2, 6));
    let toks = prompt(&c);
    let target = c.tokenizer.object_first_token("French").unwrap();
    // zero unembedding: loss is the constant ln(V)
    c.unembed.iter_mut().for_each(|v| *v = 0.0);
    let g = c.grad_wrt_hidden(&toks, 0, 2, FinalTokenNll { target }).unwrap();
    assert!(g.grad.iter().all(|&v| v == 0.0));
    let w = c.grad_wrt_mlp_weights(&toks, 1, FinalTokenNll { target }).unwrap();
    assert!(w.w_out.iter().chain(&w.w_in).chain(&w.b_in).chain(&w.b_out).all(|&v| v == 0.0));
}

#[test]
fn gradients_are_reproducible_and_consistent_across_layers() {
    let c = lively(model(2, 7));
    let toks = prompt(&c);
    let loss = FinalTokenNll { target: c.tokenizer.object_first_token("French").unwrap() };
    let a = c.grad_wrt_hidden(&toks, 1, 4, loss).unwrap();
    let b = c.grad_wrt_hidden(&toks, 1, 4, loss).unwrap();
    assert!(a.grad.iter().zip(&b.grad).all(|(x, y)| x.to_bits() == y.to_bits()));

    let all = c.grad_wrt_mlp_weights_all(&toks, loss).unwrap();
    for (l, g) in all.iter().enumerate() {
        assert_eq!(g, &c.grad_wrt_mlp_weights(&toks, l, loss).unwrap());
    }
}

#[test]
fn gradient_indices_are_validated() {
    let c = model(2, 0);
    let toks = prompt(&c);
    let loss = FinalTokenNll { target: 2 };
    assert!(matches!(c.grad_wrt_hidden(&toks, 2, 0, loss), Err(Error::Index(_))));
    assert!(matches!(c.grad_wrt_hidden(&toks, 0, toks.len(), loss), Err(Error::Index(_))));
    assert!(matches!(c.grad_wrt_mlp_weights(&toks, 5, loss), Err(Error::Index(_))));
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(1.0, 1.0), 0.0);
    assert!((relative_error(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-15);
    assert!(relative_error(1e-9, 1.5e-9) < 1e-3);
    assert!(relative_error(0.0, 1e-5) > 1e-3);
}

#[test]
fn training_lowers_loss_and_is_deterministic() {
    let c = model(2, 8);
    let corpus: Vec<Vec<u32>> = CORPUS.iter().map(|s| c.tokenizer.encode(s)).collect();
    let spec = TrainSpec { epochs: 30, batch_size: 3, ..TrainSpec::default() };
    let (a, report) = train(&c, &corpus, &spec).unwrap();
    let (b, _) = train(&c, &corpus, &spec).unwrap();
    assert!(a.bit_identical(&b));
    let first = report.epoch_losses[0];
    let last = *report.epoch_losses.last().unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
    // running average over 5 epochs does not increase
    let avg: Vec<f64> = report.epoch_losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for w in avg.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "{avg:?}");
    }
}

#[test]
fn zero_epochs_is_identity() {
    let c = model(2, 9);
    let corpus: Vec<Vec<u32>> = CORPUS.iter().map(|s| c.tokenizer.encode(s)).collect();
    let spec = TrainSpec { epochs: 0, ..TrainSpec::default() };
    let (out, report) = train(&c, &corpus, &spec).unwrap();
    assert!(out.bit_identical(&c));
    assert!(report.epoch_losses.is_empty());
    assert!(train(&c, &[], &spec).is_err());
}

#[test]
fn save_load_roundtrip_on_disk() {
    let c = lively(model(2, 10)).with_provenance("unit-test");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tlm");
    io::save(&c, &path).unwrap();
    let back = io::load(&path).unwrap();
    assert!(back.bit_identical(&c));
    assert_eq!(back.provenance, "unit-test");

    std::fs::write(&path, b"NOPE0000").unwrap();
    assert!(matches!(io::load(&path), Err(Error::Format(_))));
}

/// Frozen little-endian file: loading it must reproduce these exact values
/// on any platform and re-saving must reproduce its bytes.
#[test]
fn golden_checkpoint_loads() {
    let bytes = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_v1.tlm")).unwrap();
    let c = io::from_bytes(&bytes).unwrap();
    assert_eq!(c.config.d_model, 4);
    assert_eq!(c.config.n_layers, 1);
    assert_eq!(c.provenance, "golden");
    assert_eq!(c.tokenizer.vocabulary(), &["<bos>", "<unk>", "a", " b"]);
    assert_eq!(c.lnf_g, vec![1.0; 4]);
    assert_eq!(c.layers[0].w_out[0].to_bits(), 0x3f80_0000);
    assert_eq!(c.layers[0].w_out[1].to_bits(), 0xbf00_0000);
    assert_eq!(c.unembed[15].to_bits(), 0x4049_0fdb);
    assert_eq!(io::to_bytes(&c).unwrap(), bytes);
}
