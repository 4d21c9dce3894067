use nalgebra::DVector;

use crate::exec::ExecPolicy;
use crate::grouping::GroupSet;
use crate::jmm::PolynomialJmm;

use super::{EkfConfig, EstimatorError, EstimatorState, GroupFilter, MeasurementFrame, StepTrace};

/// Result of one coordinated tick for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStep {
    pub state: EstimatorState,
    pub trace: StepTrace,
}

/// Runs one filter per group and reconciles borrowed joints after each tick.
#[derive(Debug, Clone)]
pub struct GroupEstimator<'a> {
    set: &'a GroupSet,
    filters: Vec<GroupFilter<'a>>,
    exec: ExecPolicy,
}

impl<'a> GroupEstimator<'a> {
    /// `jmms[g]` is the fitted mapping of group `g`.
    pub fn new(
        set: &'a GroupSet,
        jmms: &'a [PolynomialJmm],
        config: &'a EkfConfig,
    ) -> Result<Self, EstimatorError> {
        if jmms.len() != set.groups().len() {
            return Err(EstimatorError::DimensionMismatch {
                what: "mappings per group",
                expected: set.groups().len(),
                actual: jmms.len(),
            });
        }
        let filters = set
            .groups()
            .iter()
            .zip(jmms)
            .map(|(spec, jmm)| GroupFilter::new(spec, jmm, config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            set,
            filters,
            exec: ExecPolicy::default(),
        })
    }

    pub fn with_exec(mut self, exec: ExecPolicy) -> Self {
        self.exec = exec;
        self
    }

    pub fn filters(&self) -> &[GroupFilter<'a>] {
        &self.filters
    }

    pub fn group_set(&self) -> &GroupSet {
        self.set
    }

    /// Initial states from a per-joint angle lookup.
    pub fn initial_states(
        &self,
        angle_of: impl Fn(&str) -> f64,
    ) -> Result<Vec<EstimatorState>, EstimatorError> {
        self.filters
            .iter()
            .map(|f| {
                let order = f.spec().joint_order();
                let theta = DVector::from_iterator(order.len(), order.iter().map(|j| angle_of(j)));
                f.initial_state(theta)
            })
            .collect()
    }

    /// One tick: every group predicts and updates (concurrently under the
    /// parallel policy), then borrowed joints take their source group's
    /// posterior and have their covariance rows reset to `P0` on the diagonal.
    /// Any group failure aborts the whole tick.
    pub fn step(
        &self,
        states: &[EstimatorState],
        frames: &[MeasurementFrame],
    ) -> Result<Vec<GroupStep>, EstimatorError> {
        let n = self.filters.len();
        if states.len() != n || frames.len() != n {
            return Err(EstimatorError::DimensionMismatch {
                what: "states/frames per group",
                expected: n,
                actual: states.len().min(frames.len()),
            });
        }
        let results = self.exec.map_indexed(n, |g| {
            self.filters[g]
                .step(&states[g], &frames[g])
                .map_err(|e| EstimatorError::Group {
                    group: self.filters[g].spec().name.clone(),
                    source: Box::new(e),
                })
        });
        let mut steps = Vec::with_capacity(n);
        for r in results {
            let (state, trace) = r?;
            steps.push(GroupStep { state, trace });
        }

        if self
            .filters
            .first()
            .is_some_and(|f| f.config().overwrite_shared)
        {
            // sources are estimated slots, which this pass never writes
            for g in 0..n {
                let offset = self.filters[g].spec().estimated_joints.len();
                for (b, src) in self.set.sources(g).iter().enumerate() {
                    let value = steps[src.group].state.theta[src.index];
                    let slot = offset + b;
                    let p0 = self.filters[g].p0(slot);
                    let state = &mut steps[g].state;
                    state.theta[slot] = value;
                    state.covariance.row_mut(slot).fill(0.0);
                    state.covariance.column_mut(slot).fill(0.0);
                    state.covariance[(slot, slot)] = p0;
                }
            }
        }
        Ok(steps)
    }
}

/// Free-function form of [`GroupEstimator::step`].
pub fn step_group_set(
    states: &[EstimatorState],
    set: &GroupSet,
    jmms: &[PolynomialJmm],
    frames: &[MeasurementFrame],
    config: &EkfConfig,
) -> Result<Vec<GroupStep>, EstimatorError> {
    GroupEstimator::new(set, jmms, config)?.step(states, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::{validate, GroupSpec};
    use crate::jmm::{MonomialBasis, Normalization};
    use nalgebra::DMatrix;

    fn spec(name: &str, est: &[&str], bor: &[&str], muscles: &[&str]) -> GroupSpec {
        GroupSpec {
            name: name.into(),
            estimated_joints: est.iter().map(|s| s.to_string()).collect(),
            borrowed_joints: bor.iter().map(|s| s.to_string()).collect(),
            muscles: muscles.iter().map(|s| s.to_string()).collect(),
            jmm: format!("{name}.json"),
        }
    }

    /// Quadratic mapping with distinct coefficients per muscle.
    fn quad(spec: &GroupSpec, seed: f64) -> PolynomialJmm {
        let d = spec.dof();
        let basis = MonomialBasis::enumerate(d, 2).unwrap();
        let m = spec.muscles.len();
        let c = DMatrix::from_fn(m, basis.len(), |i, j| {
            if j == 0 {
                0.0
            } else {
                0.03 * ((seed + 1.7 * i as f64 + 0.9 * j as f64).sin())
            }
        });
        PolynomialJmm::new(
            basis,
            c,
            spec.muscles.clone(),
            spec.joint_order(),
            vec![Normalization::identity(); d],
        )
        .unwrap()
    }

    fn two_groups() -> (GroupSet, Vec<PolynomialJmm>) {
        let a = spec("a", &["x", "y"], &["u"], &["a1", "a2", "a3"]);
        let b = spec("b", &["u", "v"], &["y"], &["b1", "b2", "b3"]);
        let jmms = vec![quad(&a, 0.3), quad(&b, 1.1)];
        (validate(vec![a, b], 8).unwrap(), jmms)
    }

    fn frames(set: &GroupSet, k: f64) -> Vec<MeasurementFrame> {
        set.groups()
            .iter()
            .map(|g| {
                let m = g.muscles.len();
                let dz = DVector::from_fn(m, |i, _| 1e-3 * ((i as f64 + k).cos()));
                MeasurementFrame::absolute(
                    dz,
                    DVector::from_fn(m, |i, _| 1e-2 * (k + i as f64).sin()),
                )
            })
            .collect()
    }

    #[test]
    fn shared_joints_agree_after_every_tick() {
        let (set, jmms) = two_groups();
        let config = EkfConfig::default();
        let est = GroupEstimator::new(&set, &jmms, &config).unwrap();
        let mut states = est.initial_states(|_| 0.05).unwrap();
        for k in 0..20 {
            let steps = est.step(&states, &frames(&set, k as f64)).unwrap();
            states = steps.into_iter().map(|s| s.state).collect();
            // a's borrowed `u` equals b's estimated `u`, b's borrowed `y` equals a's `y`
            assert_eq!(states[0].theta[2].to_bits(), states[1].theta[0].to_bits());
            assert_eq!(states[1].theta[2].to_bits(), states[0].theta[1].to_bits());
            assert_eq!(states[0].covariance[(2, 2)], config.initial_covariance_p0);
            assert_eq!(states[0].covariance[(0, 2)], 0.0);
        }
    }

    #[test]
    fn single_group_matches_plain_filter() {
        let a = spec("a", &["x", "y"], &[], &["a1", "a2", "a3"]);
        let jmms = vec![quad(&a, 0.3)];
        let set = validate(vec![a], 8).unwrap();
        let config = EkfConfig::default();
        let est = GroupEstimator::new(&set, &jmms, &config).unwrap();
        let states = est.initial_states(|_| 0.1).unwrap();
        let fr = frames(&set, 2.0);
        let coordinated = est.step(&states, &fr).unwrap();
        let plain = est.filters()[0].step(&states[0], &fr[0]).unwrap();
        assert_eq!(coordinated[0].state, plain.0);
        assert_eq!(coordinated[0].trace, plain.1);
    }

    #[test]
    fn policies_are_bit_identical() {
        let (set, jmms) = two_groups();
        let config = EkfConfig::default();
        let run = |exec| {
            let est = GroupEstimator::new(&set, &jmms, &config)
                .unwrap()
                .with_exec(exec);
            let mut states = est.initial_states(|_| 0.0).unwrap();
            for k in 0..10 {
                states = est
                    .step(&states, &frames(&set, k as f64))
                    .unwrap()
                    .into_iter()
                    .map(|s| s.state)
                    .collect();
            }
            states
        };
        assert_eq!(run(ExecPolicy::Sequential), run(ExecPolicy::Parallel));
    }

    #[test]
    fn failing_group_aborts_tick() {
        let (set, jmms) = two_groups();
        let config = EkfConfig::default();
        let est = GroupEstimator::new(&set, &jmms, &config).unwrap();
        let states = est.initial_states(|_| 0.0).unwrap();
        let mut fr = frames(&set, 0.0);
        fr[1].delta_z[0] = f64::INFINITY;
        match est.step(&states, &fr) {
            Err(EstimatorError::Group { group, .. }) => assert_eq!(group, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
