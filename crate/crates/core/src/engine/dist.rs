use crate::engine::RngStream;
use crate::error::{Error, Result};
use rand::distributions::Distribution;
use serde::{Deserialize, Serialize};

/// One histogram bin: tokens of probability mass for delays in
/// `[previous upper, upper_us)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub upper_us: u64,
    pub tokens: u32,
}

/// Distribution vocabulary for padding machines and workload timing.
///
/// Time-valued distributions are in microseconds. All variants except
/// `log_normal` consume exactly one uniform draw per sample, which is what the
/// cross-implementation sequence oracle relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform {
        low: f64,
        high: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Geometric {
        p: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Token histogram with an infinity bin meaning "schedule no padding".
    /// Finite bins cover `[prev upper, upper_us)`, the first starting at 0.
    Histogram {
        bins: Vec<HistBin>,
        #[serde(default)]
        infinity_tokens: u32,
        #[serde(default = "default_true")]
        token_removal: bool,
    },
}

fn default_true() -> bool {
    true
}

/// Outcome of a draw: a finite value or the infinity sentinel (histogram
/// infinity bin; no padding gets scheduled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Finite(f64),
    Infinite,
}

impl Sample {
    pub fn finite(self) -> Option<f64> {
        match self {
            Sample::Finite(v) => Some(v),
            Sample::Infinite => None,
        }
    }

    /// Finite value rounded to whole microseconds/cells.
    pub fn finite_u64(self) -> Option<u64> {
        self.finite().map(|v| v.max(0.0).round() as u64)
    }
}

/// Mutable token counts for one histogram-backed state of one machine
/// instance. Draws remove one token from the sampled bin when token removal
/// is enabled; when every bin (including infinity) is drained the state
/// refills to the spec counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenState {
    bins: Vec<u32>,
    infinity: u32,
}

impl TokenState {
    pub fn remaining(&self) -> u64 {
        self.bins.iter().map(|&t| t as u64).sum::<u64>() + self.infinity as u64
    }
}

impl DistSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            DistSpec::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low > high {
                    return Err(Error::config(field, format!("uniform requires low <= high, got [{low}, {high}]")));
                }
            }
            DistSpec::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::config(field, format!("log_normal requires finite mu and sigma >= 0, got mu={mu} sigma={sigma}")));
                }
            }
            DistSpec::Geometric { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::config(field, format!("geometric requires p in (0, 1], got {p}")));
                }
            }
            DistSpec::Exponential { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    return Err(Error::config(field, format!("exponential requires mean > 0, got {mean}")));
                }
            }
            DistSpec::Histogram {
                bins,
                infinity_tokens,
                ..
            } => {
                if bins.is_empty() && *infinity_tokens == 0 {
                    return Err(Error::config(field, "histogram has no bins"));
                }
                let mut prev = 0u64;
                for (i, bin) in bins.iter().enumerate() {
                    if bin.upper_us <= prev {
                        return Err(Error::config(
                            field,
                            format!(
                                "histogram bin {i} upper {} not above previous edge {prev}",
                                bin.upper_us
                            ),
                        ));
                    }
                    prev = bin.upper_us;
                }
                let total: u64 =
                    bins.iter().map(|b| b.tokens as u64).sum::<u64>() + *infinity_tokens as u64;
                if total == 0 {
                    return Err(Error::config(field, "histogram tokens are all zero"));
                }
            }
        }
        Ok(())
    }

    /// Fresh token state for histogram specs; `None` for the rest.
    pub fn token_state(&self) -> Option<TokenState> {
        match self {
            DistSpec::Histogram {
                bins,
                infinity_tokens,
                ..
            } => Some(TokenState {
                bins: bins.iter().map(|b| b.tokens).collect(),
                infinity: *infinity_tokens,
            }),
            _ => None,
        }
    }

    /// Draw one sample. `tokens` must be the instance token state for
    /// histogram specs (ignored otherwise). The spec must have passed
    /// `validate`.
    pub fn sample(&self, rng: &mut RngStream, tokens: Option<&mut TokenState>) -> Sample {
        match self {
            DistSpec::Uniform { low, high } => {
                Sample::Finite(low + rng.next_f64() * (high - low))
            }
            DistSpec::LogNormal { mu, sigma } => {
                let d = rand_distr::LogNormal::new(*mu, *sigma)
                    .expect("validated log_normal parameters");
                Sample::Finite(d.sample(rng))
            }
            DistSpec::Geometric { p } => {
                // Failures before first success, support {0, 1, ...}.
                if *p >= 1.0 {
                    return Sample::Finite(0.0);
                }
                let u = rng.next_f64();
                Sample::Finite(((1.0 - u).ln() / (1.0 - p).ln()).floor())
            }
            DistSpec::Exponential { mean } => {
                Sample::Finite(-mean * (1.0 - rng.next_f64()).ln())
            }
            DistSpec::Histogram {
                bins,
                infinity_tokens,
                token_removal,
            } => {
                let state = tokens.expect("histogram draw requires token state");
                if state.remaining() == 0 {
                    state.bins = bins.iter().map(|b| b.tokens).collect();
                    state.infinity = *infinity_tokens;
                }
                let total = state.remaining();
                let mut pick = rng.below(total);
                for (i, bin) in bins.iter().enumerate() {
                    let t = state.bins[i] as u64;
                    if pick < t {
                        if *token_removal {
                            state.bins[i] -= 1;
                        }
                        let lower = if i == 0 { 0 } else { bins[i - 1].upper_us };
                        let v = lower + rng.below(bin.upper_us - lower);
                        return Sample::Finite(v as f64);
                    }
                    pick -= t;
                }
                if *token_removal {
                    state.infinity -= 1;
                }
                Sample::Infinite
            }
        }
    }
}
