//! Agreement between a metric and functional correctness: Kendall-Tau,
//! Spearman, Pearson and mean absolute error.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two equally long series of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries<'a> {
    pub m1: &'a [f64],
    pub m2: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(m1: &'a [f64], m2: &'a [f64]) -> Result<Self> {
        if m1.len() != m2.len() {
            return Err(Error::InvalidArgument(format!(
                "series lengths differ: {} vs {}",
                m1.len(),
                m2.len()
            )));
        }
        Ok(PairedSeries { m1, m2 })
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    fn require(&self, n: usize) -> Result<()> {
        if self.len() < n {
            return Err(Error::Undefined(format!(
                "need at least {n} observations, got {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn swapped(&self) -> PairedSeries<'a> {
        PairedSeries {
            m1: self.m2,
            m2: self.m1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    /// (C − D) / (C + D); pairs tied in either series count in neither term.
    #[default]
    Literal,
    /// Kendall's tau-b, (C − D) / sqrt((n0 − n1)(n0 − n2)).
    #[serde(rename = "tau_b", alias = "tie_corrected")]
    TieCorrected,
}

impl TauVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TauVariant::Literal => "literal",
            TauVariant::TieCorrected => "tau_b",
        }
    }
}

pub fn kendall_tau(s: &PairedSeries<'_>) -> Result<f64> {
    kendall_tau_with(s, TauVariant::Literal)
}

pub fn kendall_tau_with(s: &PairedSeries<'_>, variant: TauVariant) -> Result<f64> {
    s.require(2)?;
    let n = s.len();
    let (mut concordant, mut discordant) = (0u64, 0u64);
    let (mut tied_x, mut tied_y) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = s.m1[i] - s.m1[j];
            let dy = s.m2[i] - s.m2[j];
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            let prod = dx * dy;
            if prod > 0.0 {
                concordant += 1;
            } else if prod < 0.0 {
                discordant += 1;
            }
        }
    }
    let diff = concordant as f64 - discordant as f64;
    match variant {
        TauVariant::Literal => {
            let total = concordant + discordant;
            if total == 0 {
                return Err(Error::Undefined("every pair is tied".into()));
            }
            Ok(diff / total as f64)
        }
        TauVariant::TieCorrected => {
            let n0 = (n * (n - 1) / 2) as u64;
            let denom = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
            if denom == 0.0 {
                return Err(Error::Undefined("a series is constant".into()));
            }
            Ok((diff / denom).clamp(-1.0, 1.0))
        }
    }
}

/// Ranks 1..n; tied values share the mean of the positions they occupy.
pub fn rank_with_average_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let shared = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = shared;
        }
        start = end;
    }
    ranks
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population covariance over the product of population standard deviations.
fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("a series is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(s: &PairedSeries<'_>) -> Result<f64> {
    s.require(2)?;
    correlation(s.m1, s.m2)
}

pub fn spearman(s: &PairedSeries<'_>) -> Result<f64> {
    s.require(2)?;
    correlation(&rank_with_average_ties(s.m1), &rank_with_average_ties(s.m2))
}

pub fn mae(s: &PairedSeries<'_>) -> Result<f64> {
    s.require(1)?;
    Ok(s.m1.iter().zip(s.m2).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64)
}

/// One row of a correlation report. Undefined statistics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub metric: String,
    pub format: String,
    pub tau: Option<f64>,
    pub tau_variant: TauVariant,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub mae: Option<f64>,
    pub n: usize,
}

/// Compares `metric` values (m1) with ground truth (m2).
pub fn correlate(metric: &str, format: &str, values: &[f64], truth: &[f64], variant: TauVariant) -> Result<CorrelationRecord> {
    let s = PairedSeries::new(values, truth)?;
    Ok(CorrelationRecord {
        metric: metric.to_string(),
        format: format.to_string(),
        tau: kendall_tau_with(&s, variant).ok(),
        tau_variant: variant,
        spearman: spearman(&s).ok(),
        pearson: pearson(&s).ok(),
        mae: mae(&s).ok(),
        n: s.len(),
    })
}
