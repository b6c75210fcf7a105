//! Attachment smoothing terms: a single scalar, or a label-dependent tensor
//! `alpha_send[new class][preexisting class]`, `alpha_recv[preexisting class][new class]`.

use crate::error::{Error, Result};
use crate::graph::Direction;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTensor {
    k: usize,
    // Both stored `[new * k + pre]`.
    send: Vec<f64>,
    recv: Vec<f64>,
}

impl AlphaTensor {
    /// `send` is row-major over (new class, preexisting class); `recv` is
    /// row-major over (preexisting class, new class), matching the
    /// `pre -> new` orientation of receive-side terms.
    pub fn new(k: usize, send: Vec<f64>, recv: Vec<f64>) -> Result<Self> {
        if k < 2 || send.len() != k * k || recv.len() != k * k {
            return Err(Error::Config(format!(
                "alpha tensor for k={k} needs {} send and {} receive entries, got {} and {}",
                k * k,
                k * k,
                send.len(),
                recv.len()
            )));
        }
        if send.iter().chain(&recv).any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("alpha entries must be finite and nonnegative".into()));
        }
        let mut transposed = vec![0.0; k * k];
        for pre in 0..k {
            for new in 0..k {
                transposed[new * k + pre] = recv[pre * k + new];
            }
        }
        Ok(AlphaTensor {
            k,
            send,
            recv: transposed,
        })
    }

    pub fn uniform(k: usize, alpha: f64) -> Result<Self> {
        Self::new(k, vec![alpha; k * k], vec![alpha; k * k])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `alpha+_{new -> pre}`
    pub fn send(&self, new: usize, pre: usize) -> f64 {
        self.send[new * self.k + pre]
    }

    /// `alpha-_{pre -> new}`
    pub fn recv(&self, pre: usize, new: usize) -> f64 {
        self.recv[new * self.k + pre]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Scalar(f64),
    Tensor(AlphaTensor),
}

impl AlphaSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            AlphaSpec::Scalar(a) if !a.is_finite() || *a < 0.0 => {
                Err(Error::Config(format!("alpha must be finite and nonnegative, got {a}")))
            }
            AlphaSpec::Tensor(t) if t.k != k => Err(Error::ClassMismatch {
                expected: k,
                got: t.k,
            }),
            _ => Ok(()),
        }
    }

    /// Smoothing weight of a preexisting user of class `pre` when a new user of
    /// class `new` draws a partner in `direction`.
    #[inline]
    pub fn weight(&self, direction: Direction, new: usize, pre: usize) -> f64 {
        match self {
            AlphaSpec::Scalar(a) => *a,
            AlphaSpec::Tensor(t) => match direction {
                Direction::Send => t.send(new, pre),
                Direction::Receive => t.recv(pre, new),
            },
        }
    }

    /// Total smoothing mass over all preexisting users, `sum_v alpha(new, label(v))`.
    ///
    /// Class sizes sharing an identical alpha are summed before scaling, so a
    /// tensor with equal entries yields exactly `alpha * |V|`.
    pub fn mass(&self, direction: Direction, new: usize, class_sizes: &[u64]) -> f64 {
        let mut groups: Vec<(f64, u64)> = Vec::with_capacity(class_sizes.len());
        for (pre, &n) in class_sizes.iter().enumerate() {
            let a = self.weight(direction, new, pre);
            match groups.iter_mut().find(|(g, _)| *g == a) {
                Some((_, count)) => *count += n,
                None => groups.push((a, n)),
            }
        }
        groups.iter().map(|&(a, n)| a * n as f64).sum()
    }

    pub fn to_tensor(&self, k: usize) -> Result<AlphaTensor> {
        match self {
            AlphaSpec::Scalar(a) => AlphaTensor::uniform(k, *a),
            AlphaSpec::Tensor(t) => Ok(t.clone()),
        }
    }
}
