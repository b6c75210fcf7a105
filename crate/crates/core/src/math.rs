//! Log-space helpers.

/// `ln(num / den)` evaluated as a difference of logs. Every path that needs
/// bit-identical attachment log-probabilities goes through here.
#[inline]
pub fn log_fraction(num: f64, den: f64) -> f64 {
    num.ln() - den.ln()
}

/// Stable `ln(sum(exp(xs)))`; `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Normalizes unnormalized log scores into probabilities with the max-shift
/// trick. Returns `None` when every score is `-inf`.
pub fn softmax(scores: &[f64]) -> Option<Vec<f64>> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Some(w.into_iter().map(|x| x / z).collect())
}
