//! Log-domain numeric primitives shared by the lattice, factorization and
//! decoding modules. Everything operates on natural-log probabilities and
//! must stay well-defined for `-inf` inputs (zero probability).

/// log(exp(a) + exp(b)), stable for large-magnitude negatives.
///
/// `-inf ⊕ -inf = -inf`; the formula is written max-first so the result does
/// not depend on argument order.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log Σ exp(x_i) over a slice. Empty input is log of an empty sum: `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Log-softmax of a logit vector: `x_i - logsumexp(x)`.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|&x| x - z).collect()
}

/// Softmax in linear domain, computed through the stable log form.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|&x| (x - z).exp()).collect()
}

/// Stable `(log σ(x), log σ(-x))` pair, i.e. `(log p, log(1-p))` for the
/// Bernoulli with logit `x`. Both branches avoid computing `exp` of a
/// positive argument.
#[inline]
pub fn log_sigmoid_pair(logit: f64) -> (f64, f64) {
    // log σ(x) = -ln(1 + e^{-x});  log σ(-x) = -x - ln(1 + e^{-x})
    if logit >= 0.0 {
        let l = (-logit).exp().ln_1p();
        (-l, -logit - l)
    } else {
        let l = logit.exp().ln_1p();
        (logit - l, -l)
    }
}

/// Logistic function, for gradient chaining.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
