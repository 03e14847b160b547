/// Positive and negative examples covered by a (partial) clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub pos: usize,
    pub neg: usize,
}

impl Coverage {
    pub fn new(pos: usize, neg: usize) -> Self {
        Coverage { pos, neg }
    }

    fn info(self) -> f64 {
        (self.pos as f64 / (self.pos + self.neg) as f64).log2()
    }
}

/// FOIL information gain of refining a clause from `before` to `after`
/// coverage, where `both` positives are covered by both. Negative infinity
/// when the refinement covers no positive.
pub fn gain(before: Coverage, after: Coverage, both: usize) -> f64 {
    if after.pos == 0 || before.pos == 0 {
        return f64::NEG_INFINITY;
    }
    both as f64 * (after.info() - before.info())
}

/// Predicate frequency times inverse satisfaction frequency:
/// `(pos_in / n_pos) * ln(n_all / all_in)`, zero when nothing satisfies the
/// literal. `None` when there are no positives.
pub fn significance(pos_in: usize, n_pos: usize, all_in: usize, n_all: usize) -> Option<f64> {
    if n_pos == 0 {
        return None;
    }
    if all_in == 0 {
        return Some(0.0);
    }
    let pf = pos_in as f64 / n_pos as f64;
    let isf = (n_all as f64 / all_in as f64).ln();
    Some(pf * isf)
}
