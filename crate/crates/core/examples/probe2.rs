// Scratch probe: inspect hypotheses. Deleted before ship.

use ftkit::harness::data::gen_data;
use ftkit::harness::eval::evaluate;
use ftkit::harness::pipeline::{decode_config, ft_dims, pretrain_ilm};
use ftkit::harness::train::train_ft;
use ftkit::harness::{RunConfig, ToyFtModel};
use ftkit::rng::stream;

fn main() {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    while let (Some(k), Some(v)) = (args.next(), args.next()) {
        cfg.set(&k, &v).unwrap();
    }
    let corpus = gen_data(&cfg).unwrap();
    let (ilm, _) = pretrain_ilm(&cfg, &corpus).unwrap();
    let mut model = ToyFtModel::random(
        ft_dims(&cfg, corpus.vocab.size()),
        &mut stream(cfg.seed, "init_ft"),
        cfg.init_scale,
    )
    .unwrap();
    train_ft(&mut model, &ilm, &corpus, &cfg).unwrap();

    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev)] {
        let dc = decode_config(&cfg, 1.0, 0.0).unwrap();
        let report = evaluate(&model, &ilm, split, &corpus.vocab, &dc).unwrap();
        println!(
            "{name}: WER {:.4} ({}/{}) RW {:.4}",
            report.wer, report.total_errors, report.total_ref_words, report.rare_wer
        );
        for r in report.records.iter().take(6) {
            println!("  ref: {}", r.reference.join(" "));
            println!("  hyp: {}", r.hypothesis.join(" "));
        }
    }
}
