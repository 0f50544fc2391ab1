use std::cmp::Ordering;

use crate::num::Scalar;

/// `a` dominates `b` when it is no worse on every objective and strictly better on one (minimizing).
pub fn dominates<S: Scalar>(a: &[S], b: &[S]) -> bool {
    let mut strictly = false;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Input positions of the non-dominated points, ascending.
///
/// Points are visited in lexicographic order; a dominator always sorts
/// before what it dominates, so each point is checked only against the
/// front found so far. Identical points do not dominate each other and are
/// all kept.
pub fn non_dominated<S: Scalar>(points: &[Vec<S>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.partial_cmp(b).unwrap_or(Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}
