// Scratch probe for tuning pipeline hyperparameters. Deleted before ship.

use ftkit::harness::pipeline::run_pipeline;
use ftkit::harness::RunConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    while let (Some(k), Some(v)) = (args.next(), args.next()) {
        cfg.set(&k, &v).unwrap();
    }
    let t0 = std::time::Instant::now();
    match run_pipeline(&cfg) {
        Ok(out) => {
            println!("{}", out.report.to_json().unwrap());
            let curve = &out.train_report.loss_curve;
            println!(
                "ft loss: start {:.3} end {:.3}; ilm loss {:.3} -> {:.3}",
                curve.first().unwrap_or(&f64::NAN),
                curve.last().unwrap_or(&f64::NAN),
                out.ilm_curve.first().unwrap_or(&f64::NAN),
                out.ilm_curve.last().unwrap_or(&f64::NAN),
            );
            let dev_rare: usize = out
                .corpus
                .dev
                .iter()
                .flat_map(|u| &u.words)
                .filter(|&&w| out.corpus.vocab.is_rare(w))
                .count();
            let dev_words: usize = out.corpus.dev.iter().map(|u| u.words.len()).sum();
            println!("dev rare tokens: {dev_rare} / {dev_words}");
            println!("elapsed: {:.1?}", t0.elapsed());
        }
        Err(e) => println!("pipeline failed: {e}"),
    }
}
