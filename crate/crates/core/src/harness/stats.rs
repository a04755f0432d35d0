use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::harness::table::mean_and_stddev;
use crate::harness::{CurveTable, HarnessError, Method};

/// Welch comparison of two methods' per-seed window means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_a − mean_b`.
    pub diff: f64,
    /// 95% confidence interval on `diff`.
    pub lower: f64,
    pub upper: f64,
    /// Welch–Satterthwaite degrees of freedom (infinite when both samples
    /// have zero variance).
    pub df: f64,
}

impl Comparison {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

/// Welch interval from two samples, each of size at least 2.
pub fn welch(a: &[f64], b: &[f64]) -> Comparison {
    let (ma, sa) = mean_and_stddev(a);
    let (mb, sb) = mean_and_stddev(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sa * sa / na;
    let vb = sb * sb / nb;
    let diff = ma - mb;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Comparison { mean_a: ma, mean_b: mb, diff, lower: diff, upper: diff, df: f64::INFINITY };
    }
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").inverse_cdf(0.975);
    let half = t * se2.sqrt();
    Comparison { mean_a: ma, mean_b: mb, diff, lower: diff - half, upper: diff + half, df }
}

pub fn compare_methods(table: &CurveTable, step: u64, a: Method, b: Method) -> Result<Comparison, HarnessError> {
    let xa = table.values_at(a, step);
    let xb = table.values_at(b, step);
    for (m, x) in [(a, &xa), (b, &xb)] {
        if x.is_empty() {
            return Err(HarnessError::MissingMethod(m.to_string(), step));
        }
        if x.len() < 2 {
            return Err(HarnessError::InsufficientSeeds { method: m.to_string(), count: x.len() });
        }
    }
    Ok(welch(&xa, &xb))
}
