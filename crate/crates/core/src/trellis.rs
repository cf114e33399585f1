//! Dynamic programming over class-trigram states.
//!
//! A state at position `i` is the pair (class at `i-1`, class at `i`), with the
//! boundary class standing in before the sentence start. Each position comes
//! with a sparse list of `(class, log emission)` entries; classes missing from
//! the list have zero emission probability.

use crate::classlm::ContextualParams;
use crate::logspace::{log_add, LOG_ZERO};

pub(crate) type Emissions = Vec<(usize, f64)>;

pub(crate) struct Trellis<'a> {
    ctx: &'a ContextualParams,
    /// Number of real classes; also the index of the boundary class and the end event.
    c: usize,
    /// Admissible classes per position.
    classes: Vec<Vec<usize>>,
    emissions: &'a [Emissions],
    boundary: [usize; 1],
}

impl<'a> Trellis<'a> {
    pub(crate) fn new(ctx: &'a ContextualParams, emissions: &'a [Emissions]) -> Self {
        let classes = emissions
            .iter()
            .map(|e| e.iter().map(|&(c, _)| c).collect())
            .collect();
        let c = ctx.num_classes();
        Trellis {
            ctx,
            c,
            classes,
            emissions,
            boundary: [c],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.emissions.len()
    }

    #[inline]
    pub(crate) fn state(&self, prev: usize, cur: usize) -> usize {
        prev * (self.c + 1) + cur
    }

    fn n_states(&self) -> usize {
        (self.c + 1) * (self.c + 1)
    }

    /// Classes admissible at position `i`, where negative positions are the boundary.
    pub(crate) fn classes_at(&self, i: isize) -> &[usize] {
        if i < 0 {
            &self.boundary
        } else {
            &self.classes[i as usize]
        }
    }

    #[inline]
    fn lp(&self, a: usize, b: usize, s: usize) -> f64 {
        self.ctx.log_prob_raw(a, b, s)
    }

    #[inline]
    fn end(&self) -> usize {
        self.c
    }

    /// Forward log-probabilities `alpha[i][state(b, c)]`, summing over histories.
    pub(crate) fn forward(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut alpha = vec![vec![LOG_ZERO; self.n_states()]; n];
        for i in 0..n {
            for &(c, em) in &self.emissions[i] {
                for &b in self.classes_at(i as isize - 1) {
                    let mut acc = LOG_ZERO;
                    for &a in self.classes_at(i as isize - 2) {
                        let prev = if i == 0 { 0.0 } else { alpha[i - 1][self.state(a, b)] };
                        if prev == LOG_ZERO {
                            continue;
                        }
                        acc = log_add(acc, prev + self.lp(a, b, c));
                    }
                    alpha[i][self.state(b, c)] = acc + em;
                }
            }
        }
        alpha
    }

    /// Total log-probability including the end event, given forward values.
    pub(crate) fn total(&self, alpha: &[Vec<f64>]) -> f64 {
        let n = self.len();
        if n == 0 {
            return self.lp(self.c, self.c, self.end());
        }
        let mut acc = LOG_ZERO;
        for &a in self.classes_at(n as isize - 2) {
            for &b in self.classes_at(n as isize - 1) {
                let v = alpha[n - 1][self.state(a, b)];
                if v != LOG_ZERO {
                    acc = log_add(acc, v + self.lp(a, b, self.end()));
                }
            }
        }
        acc
    }

    /// Backward log-probabilities `beta[i][state(a, b)]`: the summed score of
    /// everything after position `i` given classes `a` at `i-1` and `b` at `i`.
    pub(crate) fn backward(&self) -> Vec<Vec<f64>> {
        self.backward_with(log_add)
    }

    /// Like [`Self::backward`] with max in place of sum.
    pub(crate) fn backward_max(&self) -> Vec<Vec<f64>> {
        self.backward_with(f64::max)
    }

    fn backward_with(&self, combine: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut beta = vec![vec![LOG_ZERO; self.n_states()]; n];
        if n == 0 {
            return beta;
        }
        for &a in self.classes_at(n as isize - 2) {
            for &b in self.classes_at(n as isize - 1) {
                beta[n - 1][self.state(a, b)] = self.lp(a, b, self.end());
            }
        }
        for i in (0..n - 1).rev() {
            for &a in self.classes_at(i as isize - 1) {
                for &b in self.classes_at(i as isize) {
                    let mut acc = LOG_ZERO;
                    for &(c, em) in &self.emissions[i + 1] {
                        let next = beta[i + 1][self.state(b, c)];
                        if next == LOG_ZERO {
                            continue;
                        }
                        acc = combine(acc, self.lp(a, b, c) + em + next);
                    }
                    beta[i][self.state(a, b)] = acc;
                }
            }
        }
        beta
    }

    /// Accumulates expected trigram counts into `ctx_counts` (indexed like the
    /// contextual table) and returns per-position class posteriors together with
    /// the sentence log-probability. Returns `None` when the sentence has zero
    /// probability.
    pub(crate) fn expected_counts(&self, ctx_counts: &mut [f64]) -> Option<(f64, Vec<Emissions>)> {
        let n = self.len();
        let alpha = self.forward();
        let z = self.total(&alpha);
        if z == LOG_ZERO || !z.is_finite() {
            return None;
        }
        let beta = self.backward();
        let idx = |a: usize, b: usize, s: usize| self.ctx.index(a, b, s);

        for i in 0..n {
            for &(c, em) in &self.emissions[i] {
                for &b in self.classes_at(i as isize - 1) {
                    let after = beta[i][self.state(b, c)];
                    if after == LOG_ZERO {
                        continue;
                    }
                    for &a in self.classes_at(i as isize - 2) {
                        let before = if i == 0 { 0.0 } else { alpha[i - 1][self.state(a, b)] };
                        if before == LOG_ZERO {
                            continue;
                        }
                        let w = (before + self.lp(a, b, c) + em + after - z).exp();
                        ctx_counts[idx(a, b, c)] += w;
                    }
                }
            }
        }
        for &a in self.classes_at(n as isize - 2) {
            for &b in self.classes_at(n as isize - 1) {
                let v = alpha[n - 1][self.state(a, b)];
                if v != LOG_ZERO {
                    ctx_counts[idx(a, b, self.end())] += (v + self.lp(a, b, self.end()) - z).exp();
                }
            }
        }

        let posteriors = (0..n)
            .map(|i| {
                self.classes_at(i as isize)
                    .iter()
                    .map(|&b| {
                        let mut acc = 0.0;
                        for &a in self.classes_at(i as isize - 1) {
                            let s = self.state(a, b);
                            if alpha[i][s] != LOG_ZERO && beta[i][s] != LOG_ZERO {
                                acc += (alpha[i][s] + beta[i][s] - z).exp();
                            }
                        }
                        (b, acc)
                    })
                    .collect()
            })
            .collect();
        Some((z, posteriors))
    }

    /// Best class sequence, breaking exact ties toward the lexicographically
    /// smallest sequence. Returns `None` if every sequence has zero probability.
    pub(crate) fn viterbi(&self) -> Option<(Vec<usize>, f64)> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let suffix = self.backward_max();
        let mut path = Vec::with_capacity(n);
        let (mut a, mut b) = (self.c, self.c);
        let mut best_total = LOG_ZERO;
        for i in 0..n {
            let mut best = LOG_ZERO;
            let mut choice = None;
            for &(c, em) in &self.emissions[i] {
                let v = self.lp(a, b, c) + em + suffix[i][self.state(b, c)];
                if v > best {
                    best = v;
                    choice = Some(c);
                }
            }
            let c = choice?;
            if i == 0 {
                best_total = best;
            }
            path.push(c);
            a = b;
            b = c;
        }
        Some((path, best_total))
    }
}
