use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// One subject's ragged `(time, value)` measurements of a single process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalSample {
    pub subject_id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LongitudinalSample {
    pub fn new(subject_id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let subject_id = subject_id.into();
        if times.len() != values.len() {
            return Err(Error::arg(format!(
                "subject {subject_id}: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::arg(format!("subject {subject_id} has no observations")));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::arg(format!("subject {subject_id} has non-finite entries")));
        }
        Ok(LongitudinalSample {
            subject_id,
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn check_domain(&self, spec: &KernelSpec) -> Result<()> {
        for &t in &self.times {
            spec.check_time(t).map_err(|_| {
                Error::arg(format!(
                    "subject {}: time {t} outside domain [{}, {}]",
                    self.subject_id, spec.domain.lo, spec.domain.hi
                ))
            })?;
        }
        Ok(())
    }
}

pub(crate) fn validate_samples(samples: &[LongitudinalSample], spec: &KernelSpec) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::arg("no subjects supplied"));
    }
    for s in samples {
        if s.times.len() != s.values.len() || s.is_empty() {
            return Err(Error::arg(format!(
                "subject {} has inconsistent or empty observations",
                s.subject_id
            )));
        }
        s.check_domain(spec)?;
    }
    Ok(())
}

/// Pooled times of all subjects in order, with each subject's offset range.
pub(crate) fn pool_times(samples: &[LongitudinalSample]) -> (Vec<f64>, Vec<std::ops::Range<usize>>) {
    let mut times = Vec::new();
    let mut ranges = Vec::with_capacity(samples.len());
    for s in samples {
        let start = times.len();
        times.extend_from_slice(&s.times);
        ranges.push(start..times.len());
    }
    (times, ranges)
}

/// Matches predictor and response subjects by id, in predictor order.
pub fn pair_by_id<'a>(
    x: &'a [LongitudinalSample],
    y: &'a [LongitudinalSample],
) -> Result<Vec<(&'a LongitudinalSample, &'a LongitudinalSample)>> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "unpaired subjects: {} predictor vs {} response subjects",
            x.len(),
            y.len()
        )));
    }
    let mut by_id: HashMap<&str, &LongitudinalSample> = HashMap::with_capacity(y.len());
    for s in y {
        if by_id.insert(s.subject_id.as_str(), s).is_some() {
            return Err(Error::arg(format!("duplicate response subject {}", s.subject_id)));
        }
    }
    let mut seen = std::collections::HashSet::with_capacity(x.len());
    x.iter()
        .map(|xs| {
            if !seen.insert(xs.subject_id.as_str()) {
                return Err(Error::arg(format!("duplicate predictor subject {}", xs.subject_id)));
            }
            by_id
                .get(xs.subject_id.as_str())
                .map(|ys| (xs, *ys))
                .ok_or_else(|| {
                    Error::arg(format!("subject {} has no response observations", xs.subject_id))
                })
        })
        .collect()
}
