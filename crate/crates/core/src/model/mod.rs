//! Kinematic chains with straight-line via-point muscle routing.
//!
//! A [`KinematicModel`] is the geometric ground truth: it yields link poses
//! for a joint-angle vector and the muscle lengths obtained by summing the
//! distances between consecutive via-points in the world frame.

mod schema;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

pub use schema::{load_model_file, model_from_json, model_to_json};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("joint `{joint}` angle {value} rad outside [{lower}, {upper}]")]
    AngleOutOfRange {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("expected a vector of length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("muscle lengths are already calibrated")]
    DoubleCalibration,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("failed to read model file: {0}")]
    Io(String),
}

impl ModelError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Single-axis revolute joint. Ball joints are expressed as stacked
/// roll/pitch/yaw joints through massless intermediate links.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDef {
    pub name: String,
    pub parent_link: String,
    pub child_link: String,
    pub axis: Unit<Vector3<f64>>,
    /// Pose of the joint frame relative to the parent link at zero angle.
    pub origin: Isometry3<f64>,
    pub lower_limit: f64,
    pub upper_limit: f64,
}

impl JointDef {
    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.lower_limit && angle <= self.upper_limit
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower_limit, self.upper_limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViaPoint {
    pub link: String,
    pub position: Vector3<f64>,
}

/// Muscle routed through an ordered list of via-points: start, relays, end.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleDef {
    pub name: String,
    pub via_points: Vec<ViaPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleLengths {
    pub values: DVector<f64>,
    pub calibrated: bool,
}

impl MuscleLengths {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// World transform of every link, indexed like [`KinematicModel::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPoses {
    poses: Vec<Isometry3<f64>>,
}

impl LinkPoses {
    pub fn get(&self, link: usize) -> &Isometry3<f64> {
        &self.poses[link]
    }

    pub fn as_slice(&self) -> &[Isometry3<f64>] {
        &self.poses
    }
}

#[derive(Debug, Clone)]
struct ResolvedVia {
    link: usize,
    position: Point3<f64>,
}

/// Immutable kinematic tree plus muscle routings.
///
/// Joint order defines the index of every angle vector, muscle order the
/// index of every length vector.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    links: Vec<String>,
    joints: Vec<JointDef>,
    muscles: Vec<MuscleDef>,
    base: usize,
    // joint driving each link, None for the base
    parent_joint: Vec<Option<usize>>,
    joint_parent_link: Vec<usize>,
    joint_child_link: Vec<usize>,
    // joints sorted so that a parent link is always posed before its child
    joint_order: Vec<usize>,
    vias: Vec<Vec<ResolvedVia>>,
    link_index: HashMap<String, usize>,
    joint_index: HashMap<String, usize>,
    muscle_index: HashMap<String, usize>,
}

impl KinematicModel {
    /// Validates every structural invariant and reports the first violation
    /// with a path such as `joints[3].axis`.
    pub fn new(
        links: Vec<String>,
        joints: Vec<JointDef>,
        muscles: Vec<MuscleDef>,
    ) -> Result<Self, ModelError> {
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if l.is_empty() {
                return Err(ModelError::invalid(
                    format!("links[{i}]"),
                    "empty link name",
                ));
            }
            if link_index.insert(l.clone(), i).is_some() {
                return Err(ModelError::invalid(
                    format!("links[{i}]"),
                    format!("duplicate link `{l}`"),
                ));
            }
        }
        if links.is_empty() {
            return Err(ModelError::invalid("links", "model has no links"));
        }

        let mut joint_index = HashMap::new();
        let mut parent_joint = vec![None; links.len()];
        let mut joint_parent_link = Vec::with_capacity(joints.len());
        let mut joint_child_link = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            let path = |field: &str| format!("joints[{j}].{field}");
            if joint.name.is_empty() {
                return Err(ModelError::invalid(path("name"), "empty joint name"));
            }
            if joint_index.insert(joint.name.clone(), j).is_some() {
                return Err(ModelError::invalid(
                    path("name"),
                    format!("duplicate joint `{}`", joint.name),
                ));
            }
            let axis_norm = joint.axis.into_inner().norm();
            if !axis_norm.is_finite() || (axis_norm - 1.0).abs() > 1e-9 {
                return Err(ModelError::invalid(
                    path("axis"),
                    "axis must have unit norm",
                ));
            }
            if !joint.lower_limit.is_finite() || !joint.upper_limit.is_finite() {
                return Err(ModelError::invalid(path("limits"), "limits must be finite"));
            }
            if joint.lower_limit >= joint.upper_limit {
                return Err(ModelError::invalid(
                    path("limits"),
                    "lower limit must be below upper limit",
                ));
            }
            let parent = *link_index.get(&joint.parent_link).ok_or_else(|| {
                ModelError::invalid(
                    path("parent"),
                    format!("unknown link `{}`", joint.parent_link),
                )
            })?;
            let child = *link_index.get(&joint.child_link).ok_or_else(|| {
                ModelError::invalid(
                    path("child"),
                    format!("unknown link `{}`", joint.child_link),
                )
            })?;
            if parent == child {
                return Err(ModelError::invalid(
                    path("child"),
                    "joint connects a link to itself",
                ));
            }
            if parent_joint[child].is_some() {
                return Err(ModelError::invalid(
                    path("child"),
                    format!("link `{}` already has a parent joint", joint.child_link),
                ));
            }
            parent_joint[child] = Some(j);
            joint_parent_link.push(parent);
            joint_child_link.push(child);
        }

        let roots: Vec<usize> = (0..links.len())
            .filter(|&l| parent_joint[l].is_none())
            .collect();
        if roots.len() != 1 {
            let names: Vec<&str> = roots.iter().map(|&l| links[l].as_str()).collect();
            return Err(ModelError::invalid(
                "links",
                format!("expected a single base link, found {names:?}"),
            ));
        }
        let base = roots[0];

        // breadth-first from the base; anything unreached sits on a cycle
        let mut joint_order = Vec::with_capacity(joints.len());
        let mut reached = vec![false; links.len()];
        reached[base] = true;
        let mut frontier = vec![base];
        while let Some(link) = frontier.pop() {
            for (j, &p) in joint_parent_link.iter().enumerate() {
                if p == link {
                    let c = joint_child_link[j];
                    reached[c] = true;
                    joint_order.push(j);
                    frontier.push(c);
                }
            }
        }
        if let Some(l) = reached.iter().position(|r| !r) {
            return Err(ModelError::invalid(
                format!("links[{l}]"),
                format!("link `{}` is not connected to the base (cycle)", links[l]),
            ));
        }

        let mut muscle_index = HashMap::new();
        let mut vias = Vec::with_capacity(muscles.len());
        for (m, muscle) in muscles.iter().enumerate() {
            if muscle.name.is_empty() {
                return Err(ModelError::invalid(
                    format!("muscles[{m}].name"),
                    "empty muscle name",
                ));
            }
            if muscle_index.insert(muscle.name.clone(), m).is_some() {
                return Err(ModelError::invalid(
                    format!("muscles[{m}].name"),
                    format!("duplicate muscle `{}`", muscle.name),
                ));
            }
            if muscle.via_points.len() < 2 {
                return Err(ModelError::invalid(
                    format!("muscles[{m}].via_points"),
                    "a muscle needs at least two via-points",
                ));
            }
            let mut resolved = Vec::with_capacity(muscle.via_points.len());
            for (v, via) in muscle.via_points.iter().enumerate() {
                let link = *link_index.get(&via.link).ok_or_else(|| {
                    ModelError::invalid(
                        format!("muscles[{m}].via_points[{v}].link"),
                        format!("unknown link `{}`", via.link),
                    )
                })?;
                if !via.position.iter().all(|x| x.is_finite()) {
                    return Err(ModelError::invalid(
                        format!("muscles[{m}].via_points[{v}].position"),
                        "position must be finite",
                    ));
                }
                resolved.push(ResolvedVia {
                    link,
                    position: Point3::from(via.position),
                });
            }
            vias.push(resolved);
        }

        Ok(Self {
            links,
            joints,
            muscles,
            base,
            parent_joint,
            joint_parent_link,
            joint_child_link,
            joint_order,
            vias,
            link_index,
            joint_index,
            muscle_index,
        })
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn joints(&self) -> &[JointDef] {
        &self.joints
    }

    pub fn muscles(&self) -> &[MuscleDef] {
        &self.muscles
    }

    /// Number of degrees of freedom.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn muscle_count(&self) -> usize {
        self.muscles.len()
    }

    pub fn base_link(&self) -> &str {
        &self.links[self.base]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_index.get(name).copied()
    }

    pub fn muscle_index(&self, name: &str) -> Option<usize> {
        self.muscle_index.get(name).copied()
    }

    /// Resolves joint names to canonical indices.
    pub fn joint_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>, ModelError> {
        names
            .iter()
            .map(|n| {
                self.joint_index(n.as_ref())
                    .ok_or_else(|| ModelError::Unknown {
                        kind: "joint",
                        name: n.as_ref().to_string(),
                    })
            })
            .collect()
    }

    pub fn muscle_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>, ModelError> {
        names
            .iter()
            .map(|n| {
                self.muscle_index(n.as_ref())
                    .ok_or_else(|| ModelError::Unknown {
                        kind: "muscle",
                        name: n.as_ref().to_string(),
                    })
            })
            .collect()
    }

    /// Returns a copy of the model whose base link is re-posed by `transform`.
    /// Used to check invariance of lengths under rigid motion of the whole body.
    pub fn with_base_transform(&self, transform: &Isometry3<f64>) -> Self {
        let mut out = self.clone();
        for (j, joint) in out.joints.iter_mut().enumerate() {
            if self.joint_parent_link[j] == self.base {
                joint.origin = transform * joint.origin;
            }
        }
        for vias in out.vias.iter_mut() {
            for via in vias.iter_mut() {
                if via.link == self.base {
                    via.position = transform * via.position;
                }
            }
        }
        for muscle in out.muscles.iter_mut() {
            for via in muscle.via_points.iter_mut() {
                if via.link == self.links[self.base] {
                    via.position =
                        transform.transform_vector(&via.position) + transform.translation.vector;
                }
            }
        }
        out
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.joints.len() {
            return Err(ModelError::LengthMismatch {
                expected: self.joints.len(),
                actual: theta.len(),
            });
        }
        for (joint, &value) in self.joints.iter().zip(theta) {
            if !joint.contains(value) {
                return Err(ModelError::AngleOutOfRange {
                    joint: joint.name.clone(),
                    value,
                    lower: joint.lower_limit,
                    upper: joint.upper_limit,
                });
            }
        }
        Ok(())
    }

    /// World pose of every link at `theta`; the base link is the identity.
    pub fn forward_kinematics(&self, theta: &[f64]) -> Result<LinkPoses, ModelError> {
        self.check_theta(theta)?;
        Ok(self.pose_links(theta))
    }

    fn pose_links(&self, theta: &[f64]) -> LinkPoses {
        let mut poses = vec![Isometry3::identity(); self.links.len()];
        for &j in &self.joint_order {
            let joint = &self.joints[j];
            let rotation = UnitQuaternion::from_axis_angle(&joint.axis, theta[j]);
            let local = joint.origin * Isometry3::from_parts(Translation3::identity(), rotation);
            poses[self.joint_child_link[j]] = poses[self.joint_parent_link[j]] * local;
        }
        LinkPoses { poses }
    }

    fn lengths_from_poses(&self, poses: &LinkPoses) -> DVector<f64> {
        DVector::from_iterator(
            self.vias.len(),
            self.vias.iter().map(|vias| {
                vias.windows(2)
                    .map(|w| {
                        let a = poses.get(w[0].link) * w[0].position;
                        let b = poses.get(w[1].link) * w[1].position;
                        (b - a).norm()
                    })
                    .sum::<f64>()
            }),
        )
    }

    /// Raw (uncalibrated) muscle lengths at `theta`.
    pub fn muscle_lengths(&self, theta: &[f64]) -> Result<MuscleLengths, ModelError> {
        let poses = self.forward_kinematics(theta)?;
        Ok(MuscleLengths {
            values: self.lengths_from_poses(&poses),
            calibrated: false,
        })
    }

    /// Subtracts the raw lengths at `theta_ref` so that lengths read zero there.
    pub fn calibrate(
        &self,
        raw: &MuscleLengths,
        theta_ref: &[f64],
    ) -> Result<MuscleLengths, ModelError> {
        if raw.calibrated {
            return Err(ModelError::DoubleCalibration);
        }
        if raw.len() != self.muscle_count() {
            return Err(ModelError::LengthMismatch {
                expected: self.muscle_count(),
                actual: raw.len(),
            });
        }
        let reference = self.muscle_lengths(theta_ref)?;
        Ok(MuscleLengths {
            values: &raw.values - reference.values,
            calibrated: true,
        })
    }

    /// Calibration against the all-zero posture.
    pub fn calibrate_at_zero(&self, raw: &MuscleLengths) -> Result<MuscleLengths, ModelError> {
        self.calibrate(raw, &vec![0.0; self.dof()])
    }

    /// Muscle lengths calibrated at the all-zero posture.
    pub fn calibrated_lengths(&self, theta: &[f64]) -> Result<MuscleLengths, ModelError> {
        let raw = self.muscle_lengths(theta)?;
        self.calibrate_at_zero(&raw)
    }

    /// Central-difference muscle Jacobian (M × D), meters per radian.
    pub fn numeric_muscle_jacobian(
        &self,
        theta: &[f64],
        step: f64,
    ) -> Result<DMatrix<f64>, ModelError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(ModelError::InvalidStep(step));
        }
        self.check_theta(theta)?;
        let mut jac = DMatrix::zeros(self.muscle_count(), self.dof());
        let mut probe = theta.to_vec();
        for j in 0..self.dof() {
            probe[j] = theta[j] + step;
            let plus = self.muscle_lengths(&probe)?;
            probe[j] = theta[j] - step;
            let minus = self.muscle_lengths(&probe)?;
            probe[j] = theta[j];
            jac.set_column(j, &((plus.values - minus.values) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// Joints between `link` and the base, nearest first.
    fn chain_to_base(&self, mut link: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(j) = self.parent_joint[link] {
            out.push(j);
            link = self.joint_parent_link[j];
        }
        out
    }

    /// Joints on the tree path between two links.
    pub fn joints_between(&self, a: usize, b: usize) -> Vec<usize> {
        let ca = self.chain_to_base(a);
        let cb = self.chain_to_base(b);
        let mut out: Vec<usize> = ca.iter().filter(|j| !cb.contains(j)).copied().collect();
        out.extend(cb.iter().filter(|j| !ca.contains(j)));
        out.sort_unstable();
        out
    }

    /// Canonical indices of the joints whose motion can change the length of
    /// muscle `m`, in ascending order.
    pub fn spanned_joints(&self, m: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for w in self.vias[m].windows(2) {
            for j in self.joints_between(w[0].link, w[1].link) {
                if !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
