// Scratch probe: per-frame am accuracy + blank stats. Deleted before ship.

use ftkit::harness::data::gen_data;
use ftkit::harness::pipeline::{ft_dims, pretrain_ilm};
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
    let report = train_ft(&mut model, &ilm, &corpus, &cfg).unwrap();
    println!(
        "ft loss end: {:.4}",
        report.loss_curve.last().unwrap()
    );

    // Frame-level am accuracy on dev: argmax of am logits vs span word.
    let mut correct = 0usize;
    let mut twin_conf = 0usize;
    let mut total = 0usize;
    for utt in &corpus.dev {
        let cache = model.encode(&utt.features);
        for (i, &w) in utt.words.iter().enumerate() {
            let start = utt.gold_alignment[i];
            let end = if i + 1 < utt.words.len() {
                utt.gold_alignment[i + 1]
            } else {
                utt.features.len() - 1
            };
            for t in start..end {
                let am = cache.am_row(t);
                let arg = am
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                total += 1;
                if arg == w {
                    correct += 1;
                } else {
                    // twin = ids differing by rare_words or adjacent pair
                    let d = arg.abs_diff(w);
                    if d == cfg.rare_words || d == 1 {
                        twin_conf += 1;
                    }
                }
            }
        }
    }
    println!(
        "dev frame am accuracy: {:.3} ({} / {}), twin confusions {:.3}",
        correct as f64 / total as f64,
        correct,
        total,
        twin_conf as f64 / total as f64
    );
}
