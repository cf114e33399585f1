/// Per-iteration training log-likelihoods of an EM run.
///
/// `log_likelihoods[0]` is the likelihood under the initial parameters and
/// entry `k` the likelihood after the `k`-th M-step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmHistory {
    pub log_likelihoods: Vec<f64>,
    /// Number of scored events (tokens) behind each likelihood.
    pub tokens: usize,
}

impl EmHistory {
    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len().saturating_sub(1)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihoods.last().unwrap_or(&f64::NEG_INFINITY)
    }

    /// True when no iteration lowered the per-token log-likelihood by more than `tol`.
    pub fn is_non_decreasing(&self, tol: f64) -> bool {
        let n = self.tokens.max(1) as f64;
        self.log_likelihoods
            .windows(2)
            .all(|w| w[1] / n >= w[0] / n - tol)
    }

    pub(crate) fn converged(&self, rel_tol: f64) -> bool {
        match self.log_likelihoods.as_slice() {
            [.., prev, last] => {
                let gain = (last - prev) / prev.abs().max(f64::MIN_POSITIVE);
                gain < rel_tol
            }
            _ => false,
        }
    }
}
