// Scratch probe: MWER hyperparameter scan from one trained model.

use ftkit::harness::data::gen_data;
use ftkit::harness::mwer_ft::mwer_finetune;
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
    train_ft(&mut model, &ilm, &corpus, &cfg).unwrap();

    for lr in [0.05, 0.02, 0.01] {
        for steps in [20usize, 40, 80] {
            for batch in [8usize, 16] {
                let mcfg = RunConfig {
                    mwer_lr: lr,
                    mwer_steps: steps,
                    mwer_batch_size: batch,
                    ..cfg.clone()
                };
                let mut m = model.clone();
                let r = mwer_finetune(&mut m, &ilm, &corpus, &mcfg).unwrap();
                println!(
                    "lr {lr:<5} steps {steps:<3} batch {batch:<3}: wer {:.4} -> {:.4}  rw {:.4} -> {:.4}  ({})",
                    r.wer_before.wer,
                    r.wer_after.wer,
                    r.wer_before.rare_wer,
                    r.wer_after.rare_wer,
                    if r.wer_after.wer <= r.wer_before.wer
                        && r.wer_after.rare_wer < r.wer_before.rare_wer
                    {
                        "OK"
                    } else {
                        "--"
                    }
                );
            }
        }
    }
}
