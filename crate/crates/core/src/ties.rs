//! Choosing the next active set when several indices reach a boundary at once.
//!
//! The caller fixes the indices that must stay active (nonzero weights) and
//! the optional ones (tied at the boundary with zero weight). For a trial set
//! `J` the caller's closure computes the walking direction and lists every
//! optional index whose status contradicts it, with a violation size. We want
//! a `J` with no violators.

use std::cmp::Ordering;

/// Largest number of trial sets examined by the exhaustive fallback.
const MAX_TRIALS: usize = 1 << 12;

/// Violation size, compared lexicographically (zeroth order first).
pub(crate) type Violation = (f64, f64);

pub(crate) enum TieOutcome<D> {
    Resolved(Vec<usize>, D),
    /// The direction system was singular for the full candidate set and no
    /// other set worked.
    Singular(Vec<usize>),
    /// Directions exist but every trial set has violators.
    Degenerate(Vec<usize>),
}

fn union(required: &[usize], chosen: &[usize]) -> Vec<usize> {
    let mut j: Vec<usize> = required.iter().chain(chosen).copied().collect();
    j.sort_unstable();
    j.dedup();
    j
}

fn cmp_violation(a: &Violation, b: &Violation) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Tries the full set, then greedily drops the worst admitted violator, then
/// enumerates subsets of `optional` by decreasing size.
pub(crate) fn resolve<D>(
    required: &[usize],
    optional: &[usize],
    mut eval: impl FnMut(&[usize]) -> Option<(D, Vec<(usize, Violation)>)>,
) -> TieOutcome<D> {
    let full = union(required, optional);
    let mut admitted: Vec<usize> = optional.to_vec();
    let mut any_direction = false;
    loop {
        let j = union(required, &admitted);
        let Some((dir, violators)) = eval(&j) else {
            break;
        };
        any_direction = true;
        let Some(worst) = violators.iter().max_by(|a, b| cmp_violation(&a.1, &b.1)) else {
            return TieOutcome::Resolved(j, dir);
        };
        match admitted.iter().position(|&i| i == worst.0) {
            Some(pos) => {
                admitted.remove(pos);
            }
            None => break,
        }
    }

    let k = optional.len();
    let mut trials = 0;
    for size in (0..=k).rev() {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            trials += 1;
            if trials > MAX_TRIALS {
                return fail(any_direction, full);
            }
            let chosen: Vec<usize> = combo.iter().map(|&c| optional[c]).collect();
            let j = union(required, &chosen);
            if let Some((dir, violators)) = eval(&j) {
                any_direction = true;
                if violators.is_empty() {
                    return TieOutcome::Resolved(j, dir);
                }
            }
            if !next_combination(&mut combo, k) {
                break;
            }
        }
    }
    fail(any_direction, full)
}

fn fail<D>(any_direction: bool, full: Vec<usize>) -> TieOutcome<D> {
    if any_direction {
        TieOutcome::Degenerate(full)
    } else {
        TieOutcome::Singular(full)
    }
}

/// Advances `combo` (strictly increasing indices below `k`) to the next
/// combination in lexicographic order.
fn next_combination(combo: &mut [usize], k: usize) -> bool {
    let r = combo.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if combo[i] < k - r + i {
            combo[i] += 1;
            for j in i + 1..r {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
