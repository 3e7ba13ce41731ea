//! Log-domain transducer alignment lattice.
//!
//! A lattice over `T` frames and a `U`-token target is the (T)×(U+1) grid of
//! states `(t, u)` = "at frame `t`, `u` target tokens emitted". Two moves:
//!
//!   blank at (t,u): (t,u) → (t+1,u)   consumes frame t
//!   label at (t,u): (t,u) → (t,u+1)   emits token u+1 at frame t
//!
//! A complete path starts at (0,0) and ends with a blank emitted at
//! (T-1, U); every path therefore contains exactly T blanks and U labels,
//! the final move being a blank. The full-sum loss is the negative log of
//! the summed probability of all complete paths (forward recursion), the
//! brute-force loss enumerates them explicitly (testing oracle), and the
//! banded variant restricts both to a mask of valid states.
//!
//! All scores are natural-log probabilities; `-inf` marks a forbidden cell
//! and must never produce NaN downstream.

use thiserror::Error;

use crate::math::log_add_exp;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice input: {0}")]
    InvalidInput(String),
    #[error("path enumeration refused: {0} monotone paths exceed the {1} cap")]
    TooManyPaths(u128, u128),
    #[error("band mask admits no complete path from (0,0) to (T-1,U)")]
    NoValidPath,
    #[error("band mask shape ({mask_frames}x{mask_rows}) does not match lattice ({frames}x{rows})")]
    MaskShapeMismatch {
        mask_frames: usize,
        mask_rows: usize,
        frames: usize,
        rows: usize,
    },
}

/// Per-cell blank/label log-probabilities over the alignment grid.
///
/// `blank_lp` is T×(U+1) (a blank can be emitted at any state), `label_lp`
/// is T×U (a label only while target tokens remain). Entries are log-probs:
/// `≤ 0` or `-inf`, never NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbLattice {
    frames: usize,
    target_len: usize,
    blank_lp: Vec<f64>,
    label_lp: Vec<f64>,
}

impl LogProbLattice {
    /// Builds a lattice from row-major buffers: `blank_lp[t*(U+1)+u]`,
    /// `label_lp[t*U+u]`.
    pub fn new(
        frames: usize,
        target_len: usize,
        blank_lp: Vec<f64>,
        label_lp: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        if frames == 0 {
            return Err(LatticeError::InvalidInput(
                "frame count must be positive".into(),
            ));
        }
        if blank_lp.len() != frames * (target_len + 1) {
            return Err(LatticeError::InvalidInput(format!(
                "blank_lp has {} entries, expected {}x{}",
                blank_lp.len(),
                frames,
                target_len + 1
            )));
        }
        if label_lp.len() != frames * target_len {
            return Err(LatticeError::InvalidInput(format!(
                "label_lp has {} entries, expected {}x{}",
                label_lp.len(),
                frames,
                target_len
            )));
        }
        for &x in blank_lp.iter().chain(label_lp.iter()) {
            if x.is_nan() {
                return Err(LatticeError::InvalidInput("NaN log-probability".into()));
            }
            if x > 0.0 {
                return Err(LatticeError::InvalidInput(format!(
                    "log-probability {x} exceeds 0"
                )));
            }
        }
        Ok(Self {
            frames,
            target_len,
            blank_lp,
            label_lp,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// Log-probability of a blank at state (t,u).
    #[inline]
    pub fn blank(&self, t: usize, u: usize) -> f64 {
        self.blank_lp[t * (self.target_len + 1) + u]
    }

    /// Log-probability of emitting target token `u+1` at frame `t`.
    #[inline]
    pub fn label(&self, t: usize, u: usize) -> f64 {
        self.label_lp[t * self.target_len + u]
    }
}

/// Set of lattice states a banded computation may visit, T×(U+1).
///
/// Construction rejects masks that do not admit at least one complete path,
/// so every held `BandMask` is usable as a loss restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    frames: usize,
    target_len: usize,
    valid: Vec<bool>,
}

impl BandMask {
    pub fn new(frames: usize, target_len: usize, valid: Vec<bool>) -> Result<Self, LatticeError> {
        if frames == 0 {
            return Err(LatticeError::InvalidInput(
                "frame count must be positive".into(),
            ));
        }
        if valid.len() != frames * (target_len + 1) {
            return Err(LatticeError::InvalidInput(format!(
                "mask has {} entries, expected {}x{}",
                valid.len(),
                frames,
                target_len + 1
            )));
        }
        let mask = Self {
            frames,
            target_len,
            valid,
        };
        if !mask.admits_complete_path() {
            return Err(LatticeError::NoValidPath);
        }
        Ok(mask)
    }

    /// The all-valid mask; restriction with it is the dense computation.
    pub fn full(frames: usize, target_len: usize) -> Self {
        Self {
            frames,
            target_len,
            valid: vec![true; frames * (target_len + 1)],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    #[inline]
    pub fn is_valid(&self, t: usize, u: usize) -> bool {
        self.valid[t * (self.target_len + 1) + u]
    }

    /// Number of valid states; the banded loss touches only these.
    pub fn valid_cells(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Reachability sweep: some monotone blank/label path from (0,0) to
    /// (T-1,U) stays entirely inside the mask.
    fn admits_complete_path(&self) -> bool {
        let rows = self.target_len + 1;
        let mut reach = vec![false; self.frames * rows];
        for t in 0..self.frames {
            for u in 0..rows {
                if !self.valid[t * rows + u] {
                    continue;
                }
                let from_start = t == 0 && u == 0;
                let via_blank = t > 0 && reach[(t - 1) * rows + u];
                let via_label = u > 0 && reach[t * rows + (u - 1)];
                reach[t * rows + u] = from_start || via_blank || via_label;
            }
        }
        reach[(self.frames - 1) * rows + self.target_len]
    }
}

/// Gradients of the (restricted) full-sum loss w.r.t. every cell
/// log-probability. Shapes mirror the lattice buffers.
#[derive(Debug, Clone)]
pub struct LatticeGradients {
    pub blank: Vec<f64>,
    pub label: Vec<f64>,
    /// Set when the loss is infinite: no path mass, all gradients zero.
    pub no_path_mass: bool,
}

/// Number of complete monotone paths: C(T-1+U, U).
pub fn path_count(frames: usize, target_len: usize) -> u128 {
    let mut count: u128 = 1;
    // C(n, k) with n = T-1+U, k = U, built factor by factor; saturates
    // instead of overflowing since callers only compare against a cap.
    let n = (frames - 1 + target_len) as u128;
    let k = target_len as u128;
    for i in 1..=k {
        count = count.saturating_mul(n - k + i) / i;
    }
    count
}

const PATH_CAP: u128 = 1_000_000;

/// Negative log of the total probability of all complete alignment paths.
///
/// Forward recursion in the log domain; an all `-inf` row yields `+inf`
/// loss rather than an error.
pub fn full_sum_loss(lattice: &LogProbLattice) -> Result<f64, LatticeError> {
    forward_log_prob(lattice, None).map(|lp| -lp)
}

/// Full-sum loss over only the states a mask admits; cells outside the mask
/// contribute no probability.
pub fn restricted_full_sum_loss(
    lattice: &LogProbLattice,
    mask: &BandMask,
) -> Result<f64, LatticeError> {
    check_mask_shape(lattice, mask)?;
    forward_log_prob(lattice, Some(mask)).map(|lp| -lp)
}

fn check_mask_shape(lattice: &LogProbLattice, mask: &BandMask) -> Result<(), LatticeError> {
    if mask.frames != lattice.frames || mask.target_len != lattice.target_len {
        return Err(LatticeError::MaskShapeMismatch {
            mask_frames: mask.frames,
            mask_rows: mask.target_len + 1,
            frames: lattice.frames,
            rows: lattice.target_len + 1,
        });
    }
    Ok(())
}

/// Forward pass: returns log P(all complete paths), `-inf` if no mass.
fn forward_log_prob(lattice: &LogProbLattice, mask: Option<&BandMask>) -> Result<f64, LatticeError> {
    if lattice.frames == 0 {
        return Err(LatticeError::InvalidInput(
            "empty lattice: zero frames".into(),
        ));
    }
    let alpha = forward_grid(lattice, mask);
    let t_last = lattice.frames - 1;
    let u_last = lattice.target_len;
    Ok(alpha[t_last * (u_last + 1) + u_last] + lattice.blank(t_last, u_last))
}

/// α(t,u) = log Σ paths from (0,0) into state (t,u); T×(U+1) grid.
fn forward_grid(lattice: &LogProbLattice, mask: Option<&BandMask>) -> Vec<f64> {
    let rows = lattice.target_len + 1;
    let valid = |t: usize, u: usize| mask.map_or(true, |m| m.is_valid(t, u));
    let mut alpha = vec![f64::NEG_INFINITY; lattice.frames * rows];
    for t in 0..lattice.frames {
        for u in 0..rows {
            if !valid(t, u) {
                continue;
            }
            let mut a = if t == 0 && u == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if t > 0 {
                a = log_add_exp(a, alpha[(t - 1) * rows + u] + lattice.blank(t - 1, u));
            }
            if u > 0 {
                a = log_add_exp(a, alpha[t * rows + (u - 1)] + lattice.label(t, u - 1));
            }
            alpha[t * rows + u] = a;
        }
    }
    alpha
}

/// β(t,u) = log Σ paths from state (t,u) through termination, on a
/// (T+1)×(U+1) grid. Row T is the virtual post-terminal row: β(T,U) = 0.
fn backward_grid(lattice: &LogProbLattice, mask: Option<&BandMask>) -> Vec<f64> {
    let rows = lattice.target_len + 1;
    let valid = |t: usize, u: usize| mask.map_or(true, |m| m.is_valid(t, u));
    let mut beta = vec![f64::NEG_INFINITY; (lattice.frames + 1) * rows];
    beta[lattice.frames * rows + lattice.target_len] = 0.0;
    for t in (0..lattice.frames).rev() {
        for u in (0..rows).rev() {
            if !valid(t, u) {
                continue;
            }
            let mut b = lattice.blank(t, u) + beta[(t + 1) * rows + u];
            if u < lattice.target_len {
                b = log_add_exp(b, lattice.label(t, u) + beta[t * rows + (u + 1)]);
            }
            beta[t * rows + u] = b;
        }
    }
    beta
}

/// Gradients of `full_sum_loss` w.r.t. every blank/label log-probability,
/// via forward-backward: ∂loss/∂lp(cell) is minus the posterior probability
/// of a path using that cell's move.
pub fn loss_gradients(lattice: &LogProbLattice) -> Result<LatticeGradients, LatticeError> {
    gradients_impl(lattice, None)
}

/// Banded gradients: identical forward-backward with out-of-mask states
/// carrying no mass, so their cells receive zero gradient.
pub fn restricted_loss_gradients(
    lattice: &LogProbLattice,
    mask: &BandMask,
) -> Result<LatticeGradients, LatticeError> {
    check_mask_shape(lattice, mask)?;
    gradients_impl(lattice, Some(mask))
}

fn gradients_impl(
    lattice: &LogProbLattice,
    mask: Option<&BandMask>,
) -> Result<LatticeGradients, LatticeError> {
    let rows = lattice.target_len + 1;
    let n_blank = lattice.frames * rows;
    let n_label = lattice.frames * lattice.target_len;

    let beta = backward_grid(lattice, mask);
    let log_p = beta[0];
    if log_p == f64::NEG_INFINITY {
        return Ok(LatticeGradients {
            blank: vec![0.0; n_blank],
            label: vec![0.0; n_label],
            no_path_mass: true,
        });
    }
    let alpha = forward_grid(lattice, mask);

    let mut blank = vec![0.0; n_blank];
    let mut label = vec![0.0; n_label];
    for t in 0..lattice.frames {
        for u in 0..rows {
            let a = alpha[t * rows + u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let g = a + lattice.blank(t, u) + beta[(t + 1) * rows + u] - log_p;
            blank[t * rows + u] = -g.exp();
            if u < lattice.target_len {
                let g = a + lattice.label(t, u) + beta[t * rows + (u + 1)] - log_p;
                label[t * lattice.target_len + u] = -g.exp();
            }
        }
    }
    Ok(LatticeGradients {
        blank,
        label,
        no_path_mass: false,
    })
}

/// Testing oracle: enumerate every complete monotone path, log-sum their
/// probabilities, negate. Refuses lattices with more than 10^6 paths.
pub fn brute_force_loss(lattice: &LogProbLattice) -> Result<f64, LatticeError> {
    brute_force_impl(lattice, None)
}

/// Masked enumeration oracle for the banded loss.
pub fn brute_force_restricted_loss(
    lattice: &LogProbLattice,
    mask: &BandMask,
) -> Result<f64, LatticeError> {
    check_mask_shape(lattice, mask)?;
    brute_force_impl(lattice, Some(mask))
}

fn brute_force_impl(
    lattice: &LogProbLattice,
    mask: Option<&BandMask>,
) -> Result<f64, LatticeError> {
    let count = path_count(lattice.frames, lattice.target_len);
    if count > PATH_CAP {
        return Err(LatticeError::TooManyPaths(count, PATH_CAP));
    }
    let valid = |t: usize, u: usize| mask.map_or(true, |m| m.is_valid(t, u));
    if !valid(0, 0) {
        return Ok(f64::INFINITY);
    }

    fn recurse(
        lattice: &LogProbLattice,
        valid: &dyn Fn(usize, usize) -> bool,
        t: usize,
        u: usize,
        acc: f64,
        total: &mut f64,
    ) {
        // Terminal blank: only from (T-1, U).
        if t == lattice.frames() - 1 && u == lattice.target_len() {
            *total = log_add_exp(*total, acc + lattice.blank(t, u));
        } else if t + 1 < lattice.frames() && valid(t + 1, u) {
            recurse(lattice, valid, t + 1, u, acc + lattice.blank(t, u), total);
        }
        if u < lattice.target_len() && valid(t, u + 1) {
            recurse(lattice, valid, t, u + 1, acc + lattice.label(t, u), total);
        }
    }

    let mut total = f64::NEG_INFINITY;
    recurse(lattice, &valid, 0, 0, 0.0, &mut total);
    Ok(-total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_differences, max_relative_error, DEFAULT_EPS, DEFAULT_FLOOR};
    use proptest::prelude::*;
    use rand_core::{RngCore, SeedableRng};

    fn uniform_lattice(frames: usize, target_len: usize, blank_p: f64, label_p: f64) -> LogProbLattice {
        LogProbLattice::new(
            frames,
            target_len,
            vec![blank_p.ln(); frames * (target_len + 1)],
            vec![label_p.ln(); frames * target_len],
        )
        .unwrap()
    }

    /// Log-uniform random lattice: entries are ln of U(0.05, 1).
    fn random_lattice(frames: usize, target_len: usize, seed: u64) -> LogProbLattice {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    (0.05 + 0.95 * v).ln()
                })
                .collect()
        };
        let blank = draw(frames * (target_len + 1));
        let label = draw(frames * target_len);
        LogProbLattice::new(frames, target_len, blank, label).unwrap()
    }

    #[test]
    fn single_blank_single_path() {
        let lat = LogProbLattice::new(1, 0, vec![-1.0], vec![]).unwrap();
        assert_eq!(full_sum_loss(&lat).unwrap(), 1.0);
        assert_eq!(brute_force_loss(&lat).unwrap(), 1.0);
        let g = loss_gradients(&lat).unwrap();
        assert!(!g.no_path_mass);
        assert!((g.blank[0] + 1.0).abs() < 1e-15, "single path gradient is -1");
    }

    #[test]
    fn two_path_lattice_matches_enumeration() {
        // T=2, U=1, blank p=0.5 everywhere, label p=0.25: two complete
        // paths of probability 0.25*0.5*0.5 each, total 0.125.
        let lat = uniform_lattice(2, 1, 0.5, 0.25);
        let oracle = brute_force_loss(&lat).unwrap();
        assert!((oracle - 8f64.ln()).abs() < 1e-12, "oracle = {oracle}");
        let loss = full_sum_loss(&lat).unwrap();
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn path_count_matches_independent_enumeration() {
        // Count by walking the grid without any probability math.
        fn count_paths(frames: usize, target_len: usize, t: usize, u: usize) -> u128 {
            if t == frames - 1 && u == target_len {
                return 1;
            }
            let mut c = 0;
            if t + 1 < frames {
                c += count_paths(frames, target_len, t + 1, u);
            }
            if u < target_len {
                c += count_paths(frames, target_len, t, u + 1);
            }
            c
        }
        assert_eq!(path_count(3, 2), 6);
        assert_eq!(count_paths(3, 2, 0, 0), 6);
        assert_eq!(path_count(1, 0), 1);
        for (t, u) in [(2, 1), (4, 3), (5, 4), (6, 2)] {
            assert_eq!(path_count(t, u), count_paths(t, u, 0, 0), "T={t} U={u}");
        }
    }

    #[test]
    fn enumeration_guard_refuses_blowup() {
        let lat = uniform_lattice(40, 20, 0.5, 0.5);
        match brute_force_loss(&lat) {
            Err(LatticeError::TooManyPaths(n, cap)) => {
                assert!(n > cap);
            }
            other => panic!("expected TooManyPaths, got {other:?}"),
        }
    }

    #[test]
    fn empty_lattice_rejected() {
        assert!(matches!(
            LogProbLattice::new(0, 0, vec![], vec![]),
            Err(LatticeError::InvalidInput(_))
        ));
        // The op-level guard, reachable only through an in-module literal.
        let raw = LogProbLattice {
            frames: 0,
            target_len: 0,
            blank_lp: vec![],
            label_lp: vec![],
        };
        assert!(matches!(
            full_sum_loss(&raw),
            Err(LatticeError::InvalidInput(_))
        ));
    }

    #[test]
    fn nan_and_positive_entries_rejected() {
        assert!(LogProbLattice::new(1, 0, vec![f64::NAN], vec![]).is_err());
        assert!(LogProbLattice::new(1, 0, vec![0.1], vec![]).is_err());
        assert!(LogProbLattice::new(1, 0, vec![0.0], vec![]).is_ok());
        assert!(LogProbLattice::new(1, 0, vec![f64::NEG_INFINITY], vec![]).is_ok());
    }

    #[test]
    fn all_neg_inf_row_gives_infinite_loss_not_error() {
        let mut blank = vec![(0.5f64).ln(); 3 * 2];
        // Kill every blank at frame 1: no path can cross it.
        for u in 0..2 {
            blank[2 + u] = f64::NEG_INFINITY;
        }
        let label = vec![f64::NEG_INFINITY; 3];
        let lat = LogProbLattice::new(3, 1, blank, label).unwrap();
        assert_eq!(full_sum_loss(&lat).unwrap(), f64::INFINITY);
        let g = loss_gradients(&lat).unwrap();
        assert!(g.no_path_mass);
        assert!(g.blank.iter().chain(g.label.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let lat = random_lattice(4, 3, 7);
        let analytic = loss_gradients(&lat).unwrap();
        let n_blank = lat.blank_lp.len();

        let packed: Vec<f64> = lat
            .blank_lp
            .iter()
            .chain(lat.label_lp.iter())
            .copied()
            .collect();
        let loss_of = |params: &[f64]| -> f64 {
            let lat = LogProbLattice {
                frames: 4,
                target_len: 3,
                blank_lp: params[..n_blank].to_vec(),
                label_lp: params[n_blank..].to_vec(),
            };
            full_sum_loss(&lat).unwrap()
        };
        let numeric = central_differences(loss_of, &packed, DEFAULT_EPS);
        let analytic_packed: Vec<f64> = analytic
            .blank
            .iter()
            .chain(analytic.label.iter())
            .copied()
            .collect();
        let err = max_relative_error(&analytic_packed, &numeric, DEFAULT_FLOOR);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn restricted_with_full_band_is_exact_dense() {
        let lat = random_lattice(5, 3, 11);
        let mask = BandMask::full(5, 3);
        let dense = full_sum_loss(&lat).unwrap();
        let banded = restricted_full_sum_loss(&lat, &mask).unwrap();
        assert_eq!(dense.to_bits(), banded.to_bits(), "full band must be bit-exact");
    }

    #[test]
    fn narrower_band_never_lowers_loss() {
        let lat = random_lattice(6, 3, 13);
        let rows = 4;
        // Diagonal-ish band of half-width w around u ≈ t * U / T.
        let band = |w: usize| -> BandMask {
            let mut valid = vec![false; 6 * rows];
            for t in 0..6 {
                let center = (t * 3) / 5;
                for u in 0..rows {
                    if (u as i64 - center as i64).unsigned_abs() as usize <= w {
                        valid[t * rows + u] = true;
                    }
                }
            }
            BandMask::new(6, 3, valid).unwrap()
        };
        let dense = full_sum_loss(&lat).unwrap();
        let mut prev = dense;
        for w in (1..=3).rev() {
            let loss = restricted_full_sum_loss(&lat, &band(w)).unwrap();
            assert!(loss >= prev - 1e-12, "w={w}: {loss} < {prev}");
            prev = loss;
        }
    }

    #[test]
    fn restricted_matches_masked_enumeration() {
        let lat = random_lattice(6, 3, 17);
        let rows = 4;
        let mut valid = vec![false; 6 * rows];
        for t in 0..6 {
            let center = (t * 3) / 5;
            for u in 0..rows {
                if (u as i64 - center as i64).abs() <= 1 {
                    valid[t * rows + u] = true;
                }
            }
        }
        let mask = BandMask::new(6, 3, valid).unwrap();
        let fast = restricted_full_sum_loss(&lat, &mask).unwrap();
        let oracle = brute_force_restricted_loss(&lat, &mask).unwrap();
        assert!((fast - oracle).abs() <= 1e-10, "fast={fast} oracle={oracle}");
    }

    #[test]
    fn disconnected_mask_rejected() {
        // Valid start and end but a dead column in between.
        let mut valid = vec![true; 4 * 3];
        for u in 0..3 {
            valid[1 * 3 + u] = false;
        }
        assert_eq!(BandMask::new(4, 2, valid), Err(LatticeError::NoValidPath));
    }

    #[test]
    fn mask_shape_mismatch_is_distinct_error() {
        let lat = uniform_lattice(3, 1, 0.5, 0.25);
        let mask = BandMask::full(4, 1);
        assert!(matches!(
            restricted_full_sum_loss(&lat, &mask),
            Err(LatticeError::MaskShapeMismatch { .. })
        ));
    }

    #[test]
    fn restricted_gradients_match_finite_differences_and_respect_mask() {
        let lat = random_lattice(5, 2, 23);
        let rows = 3;
        let mut valid = vec![false; 5 * rows];
        for t in 0..5 {
            let center = (t * 2) / 4;
            for u in 0..rows {
                if (u as i64 - center as i64).abs() <= 1 {
                    valid[t * rows + u] = true;
                }
            }
        }
        let mask = BandMask::new(5, 2, valid).unwrap();
        let analytic = restricted_loss_gradients(&lat, &mask).unwrap();

        // Out-of-mask blank cells get exactly zero gradient.
        for t in 0..5 {
            for u in 0..rows {
                if !mask.is_valid(t, u) {
                    assert_eq!(analytic.blank[t * rows + u], 0.0);
                }
            }
        }

        let n_blank = lat.blank_lp.len();
        let packed: Vec<f64> = lat
            .blank_lp
            .iter()
            .chain(lat.label_lp.iter())
            .copied()
            .collect();
        let loss_of = |params: &[f64]| -> f64 {
            let lat = LogProbLattice {
                frames: 5,
                target_len: 2,
                blank_lp: params[..n_blank].to_vec(),
                label_lp: params[n_blank..].to_vec(),
            };
            restricted_full_sum_loss(&lat, &mask).unwrap()
        };
        let numeric = central_differences(loss_of, &packed, DEFAULT_EPS);
        let analytic_packed: Vec<f64> = analytic
            .blank
            .iter()
            .chain(analytic.label.iter())
            .copied()
            .collect();
        let err = max_relative_error(&analytic_packed, &numeric, DEFAULT_FLOOR);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    proptest! {
        /// Oracle equivalence on small random lattices.
        #[test]
        fn full_sum_matches_brute_force(
            frames in 1usize..=5,
            target_len in 0usize..=4,
            seed in 0u64..1000,
        ) {
            let lat = random_lattice(frames, target_len, seed);
            let fast = full_sum_loss(&lat).unwrap();
            let oracle = brute_force_loss(&lat).unwrap();
            prop_assert!((fast - oracle).abs() <= 1e-10, "fast={} oracle={}", fast, oracle);
        }

        /// -inf entries never produce NaN.
        #[test]
        fn neg_inf_entries_are_nan_safe(
            seed in 0u64..500,
            kill in proptest::collection::vec(0usize..20, 0..6),
        ) {
            let mut lat = random_lattice(4, 3, seed);
            for k in kill {
                let nb = lat.blank_lp.len();
                if k < nb {
                    lat.blank_lp[k] = f64::NEG_INFINITY;
                } else if k - nb < lat.label_lp.len() {
                    let k = k - nb;
                    lat.label_lp[k] = f64::NEG_INFINITY;
                }
            }
            let loss = full_sum_loss(&lat).unwrap();
            prop_assert!(!loss.is_nan());
            let g = loss_gradients(&lat).unwrap();
            prop_assert!(g.blank.iter().chain(g.label.iter()).all(|x| !x.is_nan()));
        }
    }
}
