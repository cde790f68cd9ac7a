//! Exact code lengths for binary sequences.
//!
//! For the Bernoulli model family the normalized maximum likelihood (NML)
//! code and its normalizer, the parametric complexity, can be computed
//! exactly. They serve as a reference point for plug-in prequential codes
//! such as the Krichevsky-Trofimov (add-1/2) estimator.

use crate::error::{arg_err, Result};

pub const MAX_LEN: usize = 20;
/// Longest length for which full `2^T` enumeration is used as a cross-check.
pub const MAX_ENUM_LEN: usize = 14;

fn check_len(t: usize) -> Result<()> {
    if !(1..=MAX_LEN).contains(&t) {
        return arg_err(format!("sequence length {t} not in [1, {MAX_LEN}]"));
    }
    Ok(())
}

/// `-ln p(seq | theta_mle)` with `0^0 = 1`.
pub fn mle_code_length(bits: &[bool]) -> f64 {
    let t = bits.len() as f64;
    let ones = bits.iter().filter(|&&b| b).count() as f64;
    -(xlogx(ones, t) + xlogx(t - ones, t))
}

/// `k ln(k / t)` with the `0 ln 0 = 0` convention.
fn xlogx(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * (k / t).ln()
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..k {
        acc += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    acc
}

/// `COMP(T) = ln sum_k C(T, k) (k/T)^k ((T-k)/T)^(T-k)`.
pub fn nml_complexity(t: usize) -> Result<f64> {
    check_len(t)?;
    let tf = t as f64;
    let sum: f64 = (0..=t)
        .map(|k| {
            let kf = k as f64;
            (ln_binomial(t, k) + xlogx(kf, tf) + xlogx(tf - kf, tf)).exp()
        })
        .sum();
    Ok(sum.ln())
}

/// The same quantity by summing the maximized likelihood of all `2^T`
/// sequences.
pub fn nml_complexity_enumerated(t: usize) -> Result<f64> {
    if !(1..=MAX_ENUM_LEN).contains(&t) {
        return arg_err(format!("enumeration length {t} not in [1, {MAX_ENUM_LEN}]"));
    }
    let sum: f64 = all_sequences(t).map(|s| (-mle_code_length(&s)).exp()).sum();
    Ok(sum.ln())
}

pub fn nml_code_length(bits: &[bool]) -> Result<f64> {
    Ok(mle_code_length(bits) + nml_complexity(bits.len())?)
}

/// Prequential code with `p(next = 1) = (ones + 1/2) / (t + 1)`.
pub fn kt_code_length(bits: &[bool]) -> f64 {
    let mut ones = 0.0;
    let mut total = 0.0;
    for (t, &b) in bits.iter().enumerate() {
        let p1 = (ones + 0.5) / (t as f64 + 1.0);
        total -= if b { p1.ln() } else { (1.0 - p1).ln() };
        if b {
            ones += 1.0;
        }
    }
    total
}

/// All binary sequences of length `t`, most significant bit first.
pub fn all_sequences(t: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << t).map(move |m| (0..t).map(|i| m >> (t - 1 - i) & 1 == 1).collect())
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => arg_err(format!("not a bit: {c:?}")),
        })
        .collect()
}

/// One row of the oracle table.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub len: usize,
    pub complexity: f64,
    /// `|sum_seq exp(-L_NML) - 1|`
    pub nml_normalization_error: f64,
    /// `|closed form - enumeration|` of the complexity.
    pub complexity_enum_error: f64,
    /// `max_seq (L_KT - L_MLE)`
    pub max_kt_regret: f64,
    /// `max_seq (L_KT - L_NML)`
    pub max_kt_minus_nml: f64,
    pub kt_regret_bound: f64,
    pub ok: bool,
}

/// Checks every oracle invariant for lengths `1..=t_max` by enumeration.
pub fn oracle_table(t_max: usize) -> Result<Vec<OracleRow>> {
    if !(1..=MAX_ENUM_LEN).contains(&t_max) {
        return arg_err(format!("t_max {t_max} not in [1, {MAX_ENUM_LEN}]"));
    }
    let mut rows = Vec::new();
    let mut prev_comp = 0.0;
    for t in 1..=t_max {
        let comp = nml_complexity(t)?;
        let comp_enum = nml_complexity_enumerated(t)?;
        let mut norm = 0.0;
        let mut max_regret = f64::NEG_INFINITY;
        let mut max_vs_nml = f64::NEG_INFINITY;
        let mut plug_in_ok = true;
        for s in all_sequences(t) {
            let mle = mle_code_length(&s);
            let nml = mle + comp;
            let kt = kt_code_length(&s);
            norm += (-nml).exp();
            max_regret = max_regret.max(kt - mle);
            max_vs_nml = max_vs_nml.max(kt - nml);
            plug_in_ok &= kt >= mle - 1e-12;
        }
        let bound = 0.5 * (t as f64).ln() + std::f64::consts::LN_2;
        let row = OracleRow {
            len: t,
            complexity: comp,
            nml_normalization_error: (norm - 1.0).abs(),
            complexity_enum_error: (comp - comp_enum).abs(),
            max_kt_regret: max_regret,
            max_kt_minus_nml: max_vs_nml,
            kt_regret_bound: bound,
            ok: false,
        };
        let ok = row.nml_normalization_error <= 1e-10
            && row.complexity_enum_error <= 1e-10
            && row.max_kt_regret <= bound + 1e-12
            && row.max_kt_minus_nml <= 1.0
            && comp > prev_comp
            && plug_in_ok;
        prev_comp = comp;
        rows.push(OracleRow { ok, ..row });
    }
    Ok(rows)
}
