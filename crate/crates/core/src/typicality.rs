//! Typical sets over classical sequences, typical subspaces, and
//! conditionally typical subspaces.
//!
//! Entropy-typicality (weak typicality) is used throughout: a sequence
//! `x^n` is typical when `|−(1/n)·log₂ P(x^n) − H(X)| ≤ δ`. This is the
//! notion whose cardinality bounds
//! `2^{n(H−δ)} ≤ |T| ≤ 2^{n(H+δ)}` hold verbatim: the upper bound always,
//! the lower bound in the finite-`n` form `|T| ≥ mass(T) · 2^{n(H−δ)}`
//! (each typical sequence has probability at most `2^{−n(H−δ)}`), which
//! yields `|T| ≥ (1−ε) · 2^{n(H−δ)}` once the typical mass reaches `1−ε`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator};
use crate::source::CqqSource;

/// Hard cap for exhaustive sequence enumeration.
pub const MAX_ENUMERATION: usize = 1 << 24;
/// Hard cap for materialised projectors on `d^n`-dimensional spaces.
pub const MAX_PROJECTOR_DIM: usize = 2048;

/// Slack added to the typicality criterion so grouped eigenvalues and
/// accumulated log sums classify stably at the boundary.
const CRITERION_SLACK: f64 = 1e-12;

fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum()
}

/// Entropy-typicality criterion for one sequence. Sequences containing a
/// zero-probability letter are never typical.
pub fn is_entropy_typical(p: &[f64], xn: &[u8], delta: f64) -> bool {
    let h = entropy_bits(p);
    let mut log_sum = 0.0f64;
    for &x in xn {
        let px = p[x as usize];
        if px <= 1e-15 {
            return false;
        }
        log_sum += px.log2();
    }
    let sample_entropy = -log_sum / xn.len() as f64;
    (sample_entropy - h).abs() <= delta + CRITERION_SLACK
}

/// The typical set of `P^n`, listed exhaustively.
#[derive(Debug, Clone)]
pub struct TypicalSet {
    pub sequences: Vec<Vec<u8>>,
    pub n: usize,
    pub delta: f64,
    /// The source distribution.
    pub probs: Vec<f64>,
    /// Total probability of the set under `P^n`.
    pub mass: f64,
    /// `H(X)` of the source, in bits.
    pub entropy: f64,
}

impl TypicalSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Enumerates the typical set `T^n_{X,δ}`. Errors when `|X|^n` exceeds
/// [`MAX_ENUMERATION`].
pub fn typical_set(p: &[f64], n: usize, delta: f64) -> Result<TypicalSet> {
    crate::entropy::validate_distribution(p)?;
    if n == 0 {
        return Err(Error::ParameterOutOfRange("typical set needs n ≥ 1".into()));
    }
    let alphabet = p.len();
    let total = (alphabet as f64).powi(n as i32);
    if total > MAX_ENUMERATION as f64 {
        return Err(Error::TooLarge(format!(
            "enumeration of {alphabet}^{n} sequences exceeds {MAX_ENUMERATION}"
        )));
    }
    let h = entropy_bits(p);
    let logs: Vec<f64> = p
        .iter()
        .map(|&x| if x > 1e-15 { x.log2() } else { f64::NEG_INFINITY })
        .collect();
    let mut sequences = Vec::new();
    let mut mass = 0.0f64;
    let mut xn = vec![0u8; n];
    loop {
        let mut log_sum = 0.0f64;
        for &x in &xn {
            log_sum += logs[x as usize];
        }
        if log_sum.is_finite() {
            let sample_entropy = -log_sum / n as f64;
            if (sample_entropy - h).abs() <= delta + CRITERION_SLACK {
                sequences.push(xn.clone());
                mass += (log_sum * std::f64::consts::LN_2).exp();
            }
        }
        // odometer
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(TypicalSet {
                    sequences,
                    n,
                    delta,
                    probs: p.to_vec(),
                    mass,
                    entropy: h,
                });
            }
            j -= 1;
            xn[j] += 1;
            if (xn[j] as usize) < alphabet {
                break;
            }
            xn[j] = 0;
        }
    }
}

/// Iterates over letter-count compositions of `n`, calling `f` with the
/// counts, the log₂ of the per-sequence probability and the log₂ of the
/// multinomial coefficient. Lets mass and cardinality be computed exactly
/// for block lengths far beyond what enumeration allows.
fn for_each_composition<F: FnMut(&[usize], f64, f64)>(
    alphabet: usize,
    n: usize,
    logs: &[f64],
    mut f: F,
) {
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let ln2 = std::f64::consts::LN_2;
    let mut counts = vec![0usize; alphabet];

    #[allow(clippy::too_many_arguments)]
    fn rec<F: FnMut(&[usize], f64, f64)>(
        counts: &mut Vec<usize>,
        letter: usize,
        remaining: usize,
        alphabet: usize,
        n: usize,
        logs: &[f64],
        ln_fact: &[f64],
        ln2: f64,
        f: &mut F,
    ) {
        if letter == alphabet - 1 {
            counts[letter] = remaining;
            let mut log_p = 0.0f64;
            let mut ln_coeff = ln_fact[n];
            for (x, &k) in counts.iter().enumerate() {
                if k > 0 {
                    log_p += k as f64 * logs[x];
                }
                ln_coeff -= ln_fact[k];
            }
            f(counts, log_p, ln_coeff / ln2);
            return;
        }
        for k in 0..=remaining {
            counts[letter] = k;
            rec(counts, letter + 1, remaining - k, alphabet, n, logs, ln_fact, ln2, f);
        }
    }
    rec(&mut counts, 0, n, alphabet, n, logs, &ln_fact, ln2, &mut f);
}

/// Exact typical-set mass via letter-count compositions (no enumeration).
pub fn exact_typical_mass(p: &[f64], n: usize, delta: f64) -> Result<f64> {
    crate::entropy::validate_distribution(p)?;
    let h = entropy_bits(p);
    let logs: Vec<f64> = p
        .iter()
        .map(|&x| if x > 1e-15 { x.log2() } else { f64::NEG_INFINITY })
        .collect();
    let mut mass = 0.0f64;
    for_each_composition(p.len(), n, &logs, |_, log_p, log2_coeff| {
        if !log_p.is_finite() {
            return;
        }
        let sample_entropy = -log_p / n as f64;
        if (sample_entropy - h).abs() <= delta + CRITERION_SLACK {
            mass += ((log2_coeff + log_p) * std::f64::consts::LN_2).exp();
        }
    });
    Ok(mass)
}

/// Exact typical-set cardinality via compositions; exact while the
/// multinomial coefficients fit in u128 (always at desk scale).
pub fn exact_typical_count(p: &[f64], n: usize, delta: f64) -> Result<u128> {
    crate::entropy::validate_distribution(p)?;
    let h = entropy_bits(p);
    let logs: Vec<f64> = p
        .iter()
        .map(|&x| if x > 1e-15 { x.log2() } else { f64::NEG_INFINITY })
        .collect();
    let mut count: u128 = 0;
    for_each_composition(p.len(), n, &logs, |counts, log_p, _| {
        if !log_p.is_finite() {
            return;
        }
        let sample_entropy = -log_p / n as f64;
        if (sample_entropy - h).abs() <= delta + CRITERION_SLACK {
            count += multinomial_u128(n, counts);
        }
    });
    Ok(count)
}

fn multinomial_u128(n: usize, counts: &[usize]) -> u128 {
    let mut acc: u128 = 1;
    let mut used = 0usize;
    for &k in counts {
        acc *= binomial_u128(n - used, k);
        used += k;
    }
    acc
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Smallest `n ≤ n_max` whose exact typical mass reaches `1 − ε`, if any.
pub fn mass_threshold(p: &[f64], delta: f64, epsilon: f64, n_max: usize) -> Result<Option<usize>> {
    for n in 1..=n_max {
        if exact_typical_mass(p, n, delta)? >= 1.0 - epsilon {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// What a subspace projector was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectorKind {
    /// Typical subspace of `ρ^{⊗n}`.
    Typical,
    /// Conditionally typical subspace of `φ_{x^n}` for this sequence.
    Conditional(Vec<u8>),
}

/// A projector onto a (conditionally) typical subspace of an `n`-fold
/// register.
#[derive(Debug, Clone)]
pub struct SubspaceProjector {
    pub projector: ComplexOperator,
    pub rank: usize,
    pub kind: ProjectorKind,
    /// Support overlap: `Tr(Π ρ^{⊗n})`, or `Tr(Π φ_{x^n})` for the
    /// conditional kind. Exact, computed in the shared eigenbasis.
    pub mass: f64,
    /// `½‖Π ρ^{⊗n} Π − ρ^{⊗n}‖₁ = (1 − mass)/2`; exact because the
    /// sandwich only deletes eigenvalues.
    pub sandwich_defect: f64,
    pub n: usize,
    pub delta: f64,
}

/// Groups numerically equal eigenvalues (tie tolerance 1e-10) and replaces
/// each by its group mean, so typicality classification cannot split a
/// degenerate eigenvalue across the criterion boundary.
pub(crate) fn group_eigenvalues(vals: &[f64]) -> Vec<f64> {
    let mut grouped = vals.to_vec();
    let mut i = 0;
    while i < grouped.len() {
        let mut j = i + 1;
        while j < grouped.len() && (vals[i] - vals[j]).abs() <= 1e-10 {
            j += 1;
        }
        let mean = vals[i..j].iter().sum::<f64>() / (j - i) as f64;
        for g in grouped.iter_mut().take(j).skip(i) {
            *g = mean;
        }
        i = j;
    }
    grouped
}

/// Builds `Σ ⊗_i |v_{j_i}⟩⟨v_{j_i}|` over the classified eigenvalue
/// sequences `j^n`.
fn assemble_projector(
    basis: &[ComplexOperator], // per-position eigenvector unitaries (dim d each)
    spectra: &[Vec<f64>],      // per-position eigenvalues (grouped)
    center: f64,               // criterion centre in bits
    n: usize,
    delta: f64,
    kind: ProjectorKind,
) -> Result<SubspaceProjector> {
    let d = basis[0].nrows();
    let dim = d
        .checked_pow(n as u32)
        .filter(|&x| x <= MAX_PROJECTOR_DIM)
        .ok_or_else(|| {
            Error::TooLarge(format!("projector dimension {d}^{n} exceeds {MAX_PROJECTOR_DIM}"))
        })?;

    let mut mat = nalgebra::DMatrix::<C64>::zeros(dim, dim);
    let mut rank = 0usize;
    let mut mass = 0.0f64;
    let mut digits = vec![0usize; n];
    loop {
        let mut log_sum = 0.0f64;
        let mut prob = 1.0f64;
        let mut dead = false;
        for (i, &j) in digits.iter().enumerate() {
            let lam = spectra[i][j];
            if lam <= 1e-15 {
                dead = true;
                break;
            }
            log_sum += lam.log2();
            prob *= lam;
        }
        if !dead {
            let sample_entropy = -log_sum / n as f64;
            if (sample_entropy - center).abs() <= delta + CRITERION_SLACK {
                rank += 1;
                mass += prob;
                // accumulate |v⟩⟨v| for v = ⊗_i basis_i[:, j_i]
                let mut v = vec![C64::new(1.0, 0.0)];
                for (i, &j) in digits.iter().enumerate() {
                    let col = basis[i].mat().column(j);
                    let mut next = vec![C64::new(0.0, 0.0); v.len() * d];
                    for (a, &va) in v.iter().enumerate() {
                        for b in 0..d {
                            next[a * d + b] = va * col[b];
                        }
                    }
                    v = next;
                }
                for r in 0..dim {
                    if v[r].norm_sqr() == 0.0 {
                        continue;
                    }
                    for c in 0..dim {
                        mat[(r, c)] += v[r] * v[c].conj();
                    }
                }
            }
        }
        // odometer over eigenvalue sequences
        let mut j = n;
        loop {
            if j == 0 {
                let projector = ComplexOperator::square(mat, vec![d; n])?;
                return Ok(SubspaceProjector {
                    projector,
                    rank,
                    kind,
                    mass,
                    sandwich_defect: (1.0 - mass) / 2.0,
                    n,
                    delta,
                });
            }
            j -= 1;
            digits[j] += 1;
            if digits[j] < d {
                break;
            }
            digits[j] = 0;
        }
    }
}

/// Projector onto the typical subspace of `ρ^{⊗n}`: the span of `n`-fold
/// eigenvector products whose eigenvalue sequence is entropy-typical for
/// the spectrum distribution.
pub fn typical_projector(rho: &DensityOperator, n: usize, delta: f64) -> Result<SubspaceProjector> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange("typical projector needs n ≥ 1".into()));
    }
    let (vals, vecs) = rho.eig()?;
    let grouped = group_eigenvalues(&vals);
    let center = entropy_bits(&grouped);
    let basis = vec![vecs; n];
    let spectra = vec![grouped; n];
    assemble_projector(&basis, &spectra, center, n, delta, ProjectorKind::Typical)
}

/// Projector onto the conditionally typical subspace `T_{B|X}(x^n)` (or the
/// E-side analogue), built per position from the spectrum of each
/// conditional state. The criterion is centred at the conditional entropy
/// `H(side|X) = Σ_x P(x) H(φ_x)`, matching the dimension bounds
/// `2^{n·H(side|X)^±}`.
pub fn conditional_typical_projector(
    source: &CqqSource,
    side: crate::entropy::Side,
    xn: &[u8],
    delta: f64,
) -> Result<SubspaceProjector> {
    if xn.is_empty() {
        return Err(Error::ParameterOutOfRange("conditional projector needs n ≥ 1".into()));
    }
    let n = xn.len();
    let mut letter_eigs: HashMap<u8, (Vec<f64>, ComplexOperator)> = HashMap::new();
    let mut center = 0.0f64;
    for x in 0..source.alphabet_size() {
        let cond = match side {
            crate::entropy::Side::B => source.conditional_b(x),
            crate::entropy::Side::E => source.conditional_e(x),
        };
        let (vals, vecs) = cond.eig()?;
        let grouped = group_eigenvalues(&vals);
        center += source.probs()[x] * entropy_bits(&grouped);
        letter_eigs.insert(x as u8, (grouped, vecs));
    }
    let mut basis = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n);
    for &x in xn {
        let (vals, vecs) = letter_eigs
            .get(&x)
            .ok_or_else(|| Error::ParameterOutOfRange(format!("letter {x} outside alphabet")))?;
        basis.push(vecs.clone());
        spectra.push(vals.clone());
    }
    assemble_projector(
        &basis,
        &spectra,
        center,
        n,
        delta,
        ProjectorKind::Conditional(xn.to_vec()),
    )
}

/// Result of the sandwiched-support comparison.
#[derive(Debug, Clone, Copy)]
pub struct ContainmentReport {
    /// `Tr(Π_B Π_{B|X}(x^n) Π_B · φ_{x^n})`
    pub sandwiched: f64,
    /// `Tr(Π_{B|X}(x^n) · φ_{x^n})`
    pub direct: f64,
    /// `direct − sandwiched`
    pub gap: f64,
}

/// Checks how much of the conditional support survives sandwiching by the
/// unconditional typical projector.
pub fn containment_check(
    source: &CqqSource,
    side: crate::entropy::Side,
    xn: &[u8],
    delta: f64,
) -> Result<ContainmentReport> {
    let n = xn.len();
    let avg = match side {
        crate::entropy::Side::B => source.average_b(),
        crate::entropy::Side::E => source.average_e(),
    };
    let pi_b = typical_projector(&avg, n, delta)?.projector;
    let pi_cond = conditional_typical_projector(source, side, xn, delta)?.projector;
    let phi = match side {
        crate::entropy::Side::B => source.seq_state_b(xn),
        crate::entropy::Side::E => source.seq_state_e(xn),
    };
    let sandwiched_op = pi_b.mul(&pi_cond)?.mul(&pi_b)?;
    let sandwiched = phi.expectation(&sandwiched_op)?.re;
    let direct = phi.expectation(&pi_cond)?.re;
    Ok(ContainmentReport {
        sandwiched,
        direct,
        gap: direct - sandwiched,
    })
}
