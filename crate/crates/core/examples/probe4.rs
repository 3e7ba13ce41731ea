// Scratch probe: training loss curve shape. Deleted before ship.

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
    let c = &report.loss_curve;
    print!("curve:");
    for i in (0..c.len()).step_by((c.len() / 16).max(1)) {
        print!(" {:.2}", c[i]);
    }
    println!(" | end {:.3}", c.last().unwrap());
}
