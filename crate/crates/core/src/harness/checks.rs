//! Standalone verification suites behind `ftkit gradcheck` and
//! `ftkit oracle-check`: finite-difference gradient comparisons and
//! independent-oracle equivalence checks, each reported as a named
//! pass/fail line.

use super::model::{FtDims, ToyFtModel};
use super::HarnessError;
use crate::decode::{
    beam_search, exhaustive_search, DecodeConfig, DecodeMode, TensorLm, TensorScorer,
};
use crate::factorization::{
    build_training_lattice, score_gradients_from_lattice, FactorizedScores, FusionWeights,
};
use crate::gradcheck::{central_differences, max_relative_error, DEFAULT_EPS, DEFAULT_FLOOR};
use crate::ilm::{freeze, nll_gradients, LmDims, ToyNeuralLm, UniformLm};
use crate::lattice::{
    brute_force_loss, brute_force_restricted_loss, full_sum_loss, loss_gradients,
    restricted_full_sum_loss, LogProbLattice,
};
use crate::mwer::{band_from_alignment, mwer_gradients, mwer_loss, BandConfig, NBestItem};
use crate::rng::{self, stream};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub fn random_lattice(frames: usize, target_len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> LogProbLattice {
    let blank: Vec<f64> = (0..frames * (target_len + 1))
        .map(|_| (0.05 + 0.95 * rng::uniform(rng)).ln())
        .collect();
    let label: Vec<f64> = (0..frames * target_len)
        .map(|_| (0.05 + 0.95 * rng::uniform(rng)).ln())
        .collect();
    LogProbLattice::new(frames, target_len, blank, label).expect("entries are valid log-probs")
}

pub fn random_scores(
    frames: usize,
    histories: usize,
    vocab: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> FactorizedScores {
    let mut logits = |n: usize| -> Vec<f64> {
        (0..n).map(|_| 4.0 * rng::uniform(rng) - 2.0).collect()
    };
    let am = logits(frames * vocab);
    let ilm = logits(histories * vocab);
    let blank = logits(frames * histories);
    FactorizedScores::new(frames, histories, vocab, am, ilm, blank).expect("finite logits")
}

/// Lattice gradients vs central finite differences on random lattices.
fn check_lattice_gradients(seed: u64) -> CheckResult {
    let mut rng = stream(seed, "gradcheck-lattice");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let lat = random_lattice(4, 3, &mut rng);
        let analytic = loss_gradients(&lat).unwrap();
        let n_blank = 4 * 4;
        let packed: Vec<f64> = (0..4 * 4)
            .map(|i| lat.blank(i / 4, i % 4))
            .chain((0..4 * 3).map(|i| lat.label(i / 3, i % 3)))
            .collect();
        let loss_of = |params: &[f64]| -> f64 {
            let lat = LogProbLattice::new(
                4,
                3,
                params[..n_blank].to_vec(),
                params[n_blank..].to_vec(),
            )
            .unwrap();
            full_sum_loss(&lat).unwrap()
        };
        let numeric = central_differences(loss_of, &packed, DEFAULT_EPS);
        let analytic_packed: Vec<f64> = analytic
            .blank
            .iter()
            .chain(analytic.label.iter())
            .copied()
            .collect();
        worst = worst.max(max_relative_error(&analytic_packed, &numeric, DEFAULT_FLOOR));
    }
    CheckResult::new(
        "lattice gradients vs finite differences",
        worst <= 1e-4,
        format!("max relative error {worst:.3e} (tolerance 1e-4)"),
    )
}

/// ILM gradients vs central finite differences on a small corpus.
fn check_ilm_gradients(seed: u64) -> CheckResult {
    let dims = LmDims {
        vocab: 6,
        context: 2,
        embed: 4,
        hidden: 5,
        boundary_token: 0,
    };
    let lm = ToyNeuralLm::random(dims, &mut stream(seed, "gradcheck-ilm"), 0.3).unwrap();
    let corpus = vec![vec![1, 4, 2, 0], vec![5, 3, 0]];
    let (_, analytic) = nll_gradients(&lm, &corpus).unwrap();
    let loss_of = |params: &[f64]| -> f64 {
        let mut probe = ToyNeuralLm::zeros(dims).unwrap();
        probe.params_mut().copy_from_slice(params);
        nll_gradients(&probe, &corpus).unwrap().0
    };
    let numeric = central_differences(loss_of, lm.params(), DEFAULT_EPS);
    let err = max_relative_error(&analytic, &numeric, DEFAULT_FLOOR);
    CheckResult::new(
        "ILM gradients vs finite differences",
        err <= 1e-4,
        format!("max relative error {err:.3e} (tolerance 1e-4)"),
    )
}

/// End-to-end transducer gradients (encoder + blank predictor through the
/// lattice loss) vs finite differences on one synthetic utterance.
fn check_ft_gradients(seed: u64) -> CheckResult {
    let dims = FtDims {
        feature_dim: 3,
        window: 3,
        joint_dim: 4,
        blank_embed: 3,
        vocab: 6,
    };
    let mut rng = stream(seed, "gradcheck-ft");
    let model = ToyFtModel::random(dims, &mut rng, 0.2).unwrap();
    let ilm = freeze(
        ToyNeuralLm::random(
            LmDims {
                vocab: 6,
                context: 2,
                embed: 4,
                hidden: 5,
                boundary_token: 0,
            },
            &mut rng,
            0.3,
        )
        .unwrap(),
    );
    let features: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..3).map(|_| rng::normal(&mut rng)).collect())
        .collect();
    let target = [1usize, 4];

    let loss_of = |params: &[f64]| -> f64 {
        let mut probe = ToyFtModel::zeros(dims).unwrap();
        probe.params_mut().copy_from_slice(params);
        let cache = probe.encode(&features);
        let scores = probe.assemble_scores(&cache, &ilm, &target).unwrap();
        full_sum_loss(&build_training_lattice(&scores, &target).unwrap()).unwrap()
    };

    let cache = model.encode(&features);
    let scores = model.assemble_scores(&cache, &ilm, &target).unwrap();
    let lattice = build_training_lattice(&scores, &target).unwrap();
    let cells = loss_gradients(&lattice).unwrap();
    let score_grads = score_gradients_from_lattice(&scores, &target, 1.0, &cells).unwrap();
    let mut analytic = vec![0.0; model.params().len()];
    model.accumulate_param_grads(&cache, &target, &score_grads, &mut analytic);

    let numeric = central_differences(loss_of, model.params(), DEFAULT_EPS);
    let err = max_relative_error(&analytic, &numeric, DEFAULT_FLOOR);
    CheckResult::new(
        "end-to-end transducer gradients vs finite differences",
        err <= 1e-4,
        format!("max relative error {err:.3e} (tolerance 1e-4)"),
    )
}

/// Closed-form MWER gradients vs finite differences.
fn check_mwer_gradients(seed: u64) -> CheckResult {
    let mut rng = stream(seed, "gradcheck-mwer");
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 2 + rng::index(&mut rng, 5);
        let nbest: Vec<NBestItem> = (0..n)
            .map(|_| NBestItem {
                tokens: vec![],
                full_sum_logprob: -10.0 * rng::uniform(&mut rng),
                ilm_logprob_sum: -5.0 * rng::uniform(&mut rng),
                word_errors: rng::index(&mut rng, 5),
            })
            .collect();
        let beta = 0.6;
        let analytic = mwer_gradients(&nbest, beta).unwrap();
        let scores: Vec<f64> = nbest.iter().map(|h| h.full_sum_logprob).collect();
        let loss_of = |s: &[f64]| -> f64 {
            let probe: Vec<NBestItem> = nbest
                .iter()
                .zip(s)
                .map(|(h, &score)| NBestItem {
                    full_sum_logprob: score,
                    ..h.clone()
                })
                .collect();
            mwer_loss(&probe, beta).unwrap()
        };
        let numeric = central_differences(loss_of, &scores, DEFAULT_EPS);
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-8));
    }
    CheckResult::new(
        "MWER gradients vs finite differences",
        worst <= 1e-6,
        format!("max relative error {worst:.3e} (tolerance 1e-6)"),
    )
}

/// The finite-difference gradient suite.
pub fn gradcheck_suite(seed: u64) -> Vec<CheckResult> {
    vec![
        check_lattice_gradients(seed),
        check_ilm_gradients(seed),
        check_ft_gradients(seed),
        check_mwer_gradients(seed),
    ]
}

/// Full-sum loss vs explicit path enumeration on random small lattices.
fn check_lattice_oracle(seed: u64, trials: usize) -> CheckResult {
    let mut rng = stream(seed, "oracle-lattice");
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let frames = 1 + rng::index(&mut rng, 5);
        let target_len = rng::index(&mut rng, 5);
        let lat = random_lattice(frames, target_len, &mut rng);
        let fast = full_sum_loss(&lat).unwrap();
        let oracle = brute_force_loss(&lat).unwrap();
        worst = worst.max((fast - oracle).abs());
    }
    CheckResult::new(
        "full-sum loss vs path enumeration",
        worst <= 1e-10,
        format!("{trials} lattices, max |Δ| {worst:.3e} (tolerance 1e-10)"),
    )
}

/// Banded loss vs masked enumeration around random alignments.
fn check_band_oracle(seed: u64) -> CheckResult {
    let mut rng = stream(seed, "oracle-band");
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let frames = 8;
        let target_len = 3;
        let lat = random_lattice(frames, target_len, &mut rng);
        let mut alignment = Vec::with_capacity(target_len);
        let mut t = 0;
        for _ in 0..target_len {
            t = (t + rng::index(&mut rng, 3)).min(frames - 1);
            alignment.push(t);
        }
        let band = band_from_alignment(&alignment, BandConfig::symmetric(2), frames).unwrap();
        let fast = restricted_full_sum_loss(&lat, &band).unwrap();
        let oracle = brute_force_restricted_loss(&lat, &band).unwrap();
        worst = worst.max((fast - oracle).abs());
    }
    CheckResult::new(
        "banded loss vs masked enumeration",
        worst <= 1e-10,
        format!("max |Δ| {worst:.3e} (tolerance 1e-10)"),
    )
}

/// Beam search with a saturated beam vs exhaustive search under the same
/// scoring rule, across fusion settings.
fn check_beam_oracle(seed: u64) -> CheckResult {
    let mut rng = stream(seed, "oracle-beam");
    let mut failures = 0usize;
    let mut cases = 0usize;
    for trial in 0..6 {
        let frames = 1 + rng::index(&mut rng, 4);
        let vocab = 1 + rng::index(&mut rng, 3);
        let scores = random_scores(frames, 3, vocab, &mut rng);
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        for (alpha, beta) in [(1.0, 0.0), (0.6, 0.6), (1.0, 0.2)] {
            for length_norm in [false, true] {
                let cfg = DecodeConfig {
                    beam_size: 64,
                    weights: FusionWeights::new(alpha, beta).unwrap(),
                    length_norm,
                    max_symbols_per_frame: 2,
                    mode: DecodeMode::Factorized,
                    ..DecodeConfig::default()
                };
                let beam = beam_search(&scorer, &lm, &cfg).unwrap();
                let oracle = exhaustive_search(&scorer, &lm, None::<&UniformLm>, &cfg).unwrap();
                cases += 1;
                if beam[0].tokens != oracle[0].tokens
                    || (beam[0].score - oracle[0].score).abs() > 1e-9
                {
                    failures += 1;
                }
            }
        }
        let _ = trial;
    }
    CheckResult::new(
        "beam search vs exhaustive decode",
        failures == 0,
        format!("{cases} cases, {failures} disagreements"),
    )
}

/// The independent-oracle suite.
pub fn oracle_suite(seed: u64) -> Vec<CheckResult> {
    vec![
        check_lattice_oracle(seed, 200),
        check_band_oracle(seed),
        check_beam_oracle(seed),
    ]
}

/// Renders results as one line per check; `Ok(())` iff all passed.
pub fn report_checks(results: &[CheckResult]) -> Result<(), HarnessError> {
    let mut all_passed = true;
    for r in results {
        println!(
            "{}: {} — {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all_passed &= r.passed;
    }
    if all_passed {
        Ok(())
    } else {
        Err(HarnessError::Eval("one or more checks failed".into()))
    }
}
