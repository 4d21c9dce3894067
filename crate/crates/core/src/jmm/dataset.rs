use crate::model::{KinematicModel, ModelError};

use super::JmmError;

/// Closed grid over a set of DOFs: `per_joint_samples[i]` evenly spaced
/// values spanning `ranges[i]`, both endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    per_joint_samples: Vec<usize>,
    ranges: Vec<(f64, f64)>,
}

impl DatasetSpec {
    pub fn new(per_joint_samples: Vec<usize>, ranges: Vec<(f64, f64)>) -> Result<Self, JmmError> {
        if per_joint_samples.len() != ranges.len() {
            return Err(JmmError::LengthMismatch {
                expected: per_joint_samples.len(),
                actual: ranges.len(),
            });
        }
        if per_joint_samples.is_empty() {
            return Err(JmmError::InvalidArgument(
                "dataset needs at least one DOF".into(),
            ));
        }
        for (i, &n) in per_joint_samples.iter().enumerate() {
            if n < 2 {
                return Err(JmmError::InvalidArgument(format!(
                    "per_joint_samples[{i}] = {n}, need at least 2"
                )));
            }
        }
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(JmmError::InvalidArgument(format!(
                    "ranges[{i}] = ({lo}, {hi}) is not a finite increasing interval"
                )));
            }
        }
        Ok(Self {
            per_joint_samples,
            ranges,
        })
    }

    /// Grid over the full limit range of each listed joint.
    pub fn from_joint_limits(
        model: &KinematicModel,
        joints: &[usize],
        per_joint_samples: Vec<usize>,
    ) -> Result<Self, JmmError> {
        let ranges = joints.iter().map(|&j| model.joints()[j].range()).collect();
        Self::new(per_joint_samples, ranges)
    }

    pub fn per_joint_samples(&self) -> &[usize] {
        &self.per_joint_samples
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn dof(&self) -> usize {
        self.ranges.len()
    }

    /// ∏ N_i, or `None` on overflow.
    pub fn sample_count(&self) -> Option<u64> {
        self.per_joint_samples
            .iter()
            .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64))
    }

    /// Grid value of DOF `dof` at grid index `index`.
    pub fn value(&self, dof: usize, index: usize) -> f64 {
        let (lo, hi) = self.ranges[dof];
        let last = self.per_joint_samples[dof] - 1;
        if index == last {
            hi
        } else {
            lo + (hi - lo) * index as f64 / last as f64
        }
    }

    /// Mixed-radix enumeration of grid indices, last DOF fastest.
    pub fn indices(&self) -> GridIndices<'_> {
        GridIndices {
            radices: &self.per_joint_samples,
            current: vec![0; self.per_joint_samples.len()],
            done: false,
            leading_fixed: false,
        }
    }

    /// The slice of the enumeration whose leading index equals `leading`.
    pub fn indices_with_leading(&self, leading: usize) -> GridIndices<'_> {
        let mut current = vec![0; self.per_joint_samples.len()];
        current[0] = leading;
        GridIndices {
            radices: &self.per_joint_samples,
            current,
            done: leading >= self.per_joint_samples[0],
            leading_fixed: true,
        }
    }

    /// Grid points (angles in radians) in enumeration order.
    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.indices().map(move |idx| self.point(&idx))
    }

    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index
            .iter()
            .enumerate()
            .map(|(d, &i)| self.value(d, i))
            .collect()
    }
}

/// Iterator over grid index tuples.
#[derive(Debug, Clone)]
pub struct GridIndices<'a> {
    radices: &'a [usize],
    current: Vec<usize>,
    done: bool,
    leading_fixed: bool,
}

impl Iterator for GridIndices<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let floor = usize::from(self.leading_fixed);
        let mut d = self.current.len();
        loop {
            if d == floor {
                self.done = true;
                break;
            }
            d -= 1;
            self.current[d] += 1;
            if self.current[d] < self.radices[d] {
                break;
            }
            self.current[d] = 0;
        }
        Some(out)
    }
}

/// Counts grid postures by walking the enumeration without evaluating the
/// model.
pub fn count_grid(spec: &DatasetSpec) -> u64 {
    spec.indices().fold(0u64, |n, _| n + 1)
}

/// One training pair: angles over the selected joints and calibrated lengths
/// over the selected muscles.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub theta: Vec<f64>,
    pub lengths: Vec<f64>,
}

/// Grid sampler over a subset of a model's joints and muscles. Joints outside
/// the subset are held at zero; lengths are calibrated at the zero posture.
#[derive(Debug, Clone)]
pub struct GridSampler<'a> {
    model: &'a KinematicModel,
    spec: &'a DatasetSpec,
    joints: Vec<usize>,
    muscles: Vec<usize>,
    zero_lengths: Vec<f64>,
}

impl<'a> GridSampler<'a> {
    pub fn new(
        model: &'a KinematicModel,
        spec: &'a DatasetSpec,
        joints: &[usize],
        muscles: &[usize],
    ) -> Result<Self, JmmError> {
        if joints.len() != spec.dof() {
            return Err(JmmError::LengthMismatch {
                expected: spec.dof(),
                actual: joints.len(),
            });
        }
        for &j in joints {
            if j >= model.dof() {
                return Err(JmmError::InvalidArgument(format!(
                    "joint index {j} out of range"
                )));
            }
        }
        for &m in muscles {
            if m >= model.muscle_count() {
                return Err(JmmError::InvalidArgument(format!(
                    "muscle index {m} out of range"
                )));
            }
        }
        for (d, &j) in joints.iter().enumerate() {
            let joint = &model.joints()[j];
            let (lo, hi) = spec.ranges()[d];
            for value in [lo, hi] {
                if !joint.contains(value) {
                    return Err(ModelError::AngleOutOfRange {
                        joint: joint.name.clone(),
                        value,
                        lower: joint.lower_limit,
                        upper: joint.upper_limit,
                    }
                    .into());
                }
            }
        }
        let zero = model.muscle_lengths(&vec![0.0; model.dof()])?;
        Ok(Self {
            model,
            spec,
            joints: joints.to_vec(),
            muscles: muscles.to_vec(),
            zero_lengths: muscles.iter().map(|&m| zero.values[m]).collect(),
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        self.spec
    }

    /// Calibrated lengths of the selected muscles at subset angles `theta`.
    pub fn sample_at(&self, theta: &[f64]) -> Result<Sample, JmmError> {
        let mut full = vec![0.0; self.model.dof()];
        for (&j, &t) in self.joints.iter().zip(theta) {
            full[j] = t;
        }
        let raw = self.model.muscle_lengths(&full)?;
        Ok(Sample {
            theta: theta.to_vec(),
            lengths: self
                .muscles
                .iter()
                .zip(&self.zero_lengths)
                .map(|(&m, &z)| raw.values[m] - z)
                .collect(),
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = Result<Sample, JmmError>> + '_ {
        self.spec
            .indices()
            .map(move |idx| self.sample_at(&self.spec.point(&idx)))
    }

    pub fn samples_with_leading(
        &self,
        leading: usize,
    ) -> impl Iterator<Item = Result<Sample, JmmError>> + '_ {
        self.spec
            .indices_with_leading(leading)
            .map(move |idx| self.sample_at(&self.spec.point(&idx)))
    }
}

/// Streams the calibrated training set for the selected joints and muscles.
pub fn sample_grid<'a>(
    model: &'a KinematicModel,
    spec: &'a DatasetSpec,
    joints: &[usize],
    muscles: &[usize],
) -> Result<impl Iterator<Item = Result<Sample, JmmError>> + 'a, JmmError> {
    let sampler = GridSampler::new(model, spec, joints, muscles)?;
    Ok(spec
        .indices()
        .map(move |idx| sampler.sample_at(&spec.point(&idx))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_radix_order_last_fastest() {
        let spec = DatasetSpec::new(vec![2, 3], vec![(0.0, 1.0), (0.0, 2.0)]).unwrap();
        let idx: Vec<Vec<usize>> = spec.indices().collect();
        assert_eq!(
            idx,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2]
            ]
        );
        let leading: Vec<Vec<usize>> = spec.indices_with_leading(1).collect();
        assert_eq!(leading, vec![vec![1, 0], vec![1, 1], vec![1, 2]]);
        assert_eq!(spec.indices_with_leading(2).count(), 0);
    }

    #[test]
    fn endpoints_are_included() {
        let spec = DatasetSpec::new(vec![2], vec![(-1.0, 1.0)]).unwrap();
        let pts: Vec<Vec<f64>> = spec.points().collect();
        assert_eq!(pts, vec![vec![-1.0], vec![1.0]]);
        let spec = DatasetSpec::new(vec![7], vec![(-0.3, 0.9)]).unwrap();
        assert_eq!(spec.value(0, 6), 0.9);
        assert_eq!(spec.value(0, 0), -0.3);
    }

    #[test]
    fn sample_count_is_the_product() {
        let spec = DatasetSpec::new(vec![3, 3], vec![(0.0, 1.0); 2]).unwrap();
        assert_eq!(spec.sample_count(), Some(9));
        assert_eq!(count_grid(&spec), 9);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(DatasetSpec::new(vec![1], vec![(0.0, 1.0)]).is_err());
        assert!(DatasetSpec::new(vec![3], vec![(1.0, 1.0)]).is_err());
        assert!(DatasetSpec::new(vec![3, 3], vec![(0.0, 1.0)]).is_err());
    }
}
