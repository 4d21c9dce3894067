//! Estimation groups over overlapping joint sets.
//!
//! Each group estimates its own joints (`estimated_joints`) and borrows the
//! joints that its polyarticular muscles also cross (`borrowed_joints`). A
//! borrowed joint must be estimated by exactly one other group, which is its
//! authoritative source.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DOF_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub estimated_joints: Vec<String>,
    #[serde(default)]
    pub borrowed_joints: Vec<String>,
    pub muscles: Vec<String>,
    /// Identifier (file path in group documents) of the fitted mapping whose
    /// joint order is `estimated_joints ++ borrowed_joints`.
    pub jmm: String,
}

impl GroupSpec {
    pub fn dof(&self) -> usize {
        self.estimated_joints.len() + self.borrowed_joints.len()
    }

    /// `estimated_joints ++ borrowed_joints`, the group's state ordering.
    pub fn joint_order(&self) -> Vec<String> {
        self.estimated_joints
            .iter()
            .chain(&self.borrowed_joints)
            .cloned()
            .collect()
    }

    /// Per-slot flag: true for estimated joints, false for borrowed ones.
    pub fn estimated_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.estimated_joints.len()];
        mask.resize(self.dof(), false);
        mask
    }
}

/// Diagonal 0/1 projector with ones over the estimated joints.
pub fn selection_matrix(group: &GroupSpec) -> DMatrix<f64> {
    let mask = group.estimated_mask();
    DMatrix::from_fn(mask.len(), mask.len(), |i, j| {
        if i == j && mask[i] {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyGroup,
    DuplicateGroup,
    DuplicateJoint,
    DuplicateMuscle,
    Overlap,
    DofCapExceeded,
    DoubleEstimation,
    OrphanBorrowed,
    UnknownJoint,
    UnknownMuscle,
    JmmMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("group configuration has {} violation(s): {}", .0.len(), summarize(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{} ({})", x.path, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Where a borrowed slot takes its value from after each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub group: usize,
    /// Slot within the source group's estimated joints.
    pub index: usize,
}

/// Validated set of groups with resolved borrowed-joint sources.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    groups: Vec<GroupSpec>,
    dof_cap: usize,
    // sources[g][b] for borrowed slot b of group g
    sources: Vec<Vec<Source>>,
}

impl GroupSet {
    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn dof_cap(&self) -> usize {
        self.dof_cap
    }

    /// Sources of group `g`'s borrowed joints, in borrowed order.
    pub fn sources(&self, g: usize) -> &[Source] {
        &self.sources[g]
    }

    /// Borrowed joint name → authoritative (group, estimated slot).
    pub fn source_map(&self) -> BTreeMap<String, Source> {
        let mut out = BTreeMap::new();
        for (g, group) in self.groups.iter().enumerate() {
            for (name, src) in group.borrowed_joints.iter().zip(&self.sources[g]) {
                out.insert(name.clone(), *src);
            }
        }
        out
    }

    /// Group and slot that authoritatively estimate `joint`.
    pub fn estimator_of(&self, joint: &str) -> Option<Source> {
        self.groups.iter().enumerate().find_map(|(g, group)| {
            group
                .estimated_joints
                .iter()
                .position(|j| j == joint)
                .map(|index| Source { group: g, index })
        })
    }

    /// Every estimated joint, in group declaration order.
    pub fn estimated_joints(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| g.estimated_joints.iter().cloned())
            .collect()
    }
}

fn push_duplicates(list: &[String], code: ViolationCode, path: &str, out: &mut Vec<Violation>) {
    for (i, name) in list.iter().enumerate() {
        if list[..i].contains(name) {
            out.push(Violation {
                code,
                path: format!("{path}[{i}]"),
                message: format!("`{name}` listed twice"),
            });
        }
    }
}

/// Validates a list of groups against `dof_cap` and resolves sources,
/// reporting every violation found.
pub fn validate(groups: Vec<GroupSpec>, dof_cap: usize) -> Result<GroupSet, GroupError> {
    let mut violations = Vec::new();

    for (g, group) in groups.iter().enumerate() {
        let path = format!("groups[{g}]");
        if groups[..g].iter().any(|o| o.name == group.name) {
            violations.push(Violation {
                code: ViolationCode::DuplicateGroup,
                path: format!("{path}.name"),
                message: format!("group `{}` declared twice", group.name),
            });
        }
        if group.dof() == 0 {
            violations.push(Violation {
                code: ViolationCode::EmptyGroup,
                path: path.clone(),
                message: "group has no joints".into(),
            });
        }
        push_duplicates(
            &group.estimated_joints,
            ViolationCode::DuplicateJoint,
            &format!("{path}.estimated_joints"),
            &mut violations,
        );
        push_duplicates(
            &group.borrowed_joints,
            ViolationCode::DuplicateJoint,
            &format!("{path}.borrowed_joints"),
            &mut violations,
        );
        push_duplicates(
            &group.muscles,
            ViolationCode::DuplicateMuscle,
            &format!("{path}.muscles"),
            &mut violations,
        );
        for (b, name) in group.borrowed_joints.iter().enumerate() {
            if group.estimated_joints.contains(name) {
                violations.push(Violation {
                    code: ViolationCode::Overlap,
                    path: format!("{path}.borrowed_joints[{b}]"),
                    message: format!("`{name}` is both estimated and borrowed"),
                });
            }
        }
        if group.dof() > dof_cap {
            violations.push(Violation {
                code: ViolationCode::DofCapExceeded,
                path: path.clone(),
                message: format!("{} DOFs exceed the cap of {dof_cap}", group.dof()),
            });
        }
    }

    // each joint may be estimated by at most one group
    let mut estimators: BTreeMap<&str, Source> = BTreeMap::new();
    for (g, group) in groups.iter().enumerate() {
        for (i, name) in group.estimated_joints.iter().enumerate() {
            if let Some(first) = estimators.get(name.as_str()) {
                if first.group != g {
                    violations.push(Violation {
                        code: ViolationCode::DoubleEstimation,
                        path: format!("groups[{g}].estimated_joints[{i}]"),
                        message: format!(
                            "`{name}` is already estimated by group `{}`",
                            groups[first.group].name
                        ),
                    });
                }
            } else {
                estimators.insert(name, Source { group: g, index: i });
            }
        }
    }

    let mut sources = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let mut resolved = Vec::with_capacity(group.borrowed_joints.len());
        for (b, name) in group.borrowed_joints.iter().enumerate() {
            match estimators.get(name.as_str()) {
                Some(src) if src.group != g => resolved.push(*src),
                Some(_) => {} // same-group overlap, already reported
                None => violations.push(Violation {
                    code: ViolationCode::OrphanBorrowed,
                    path: format!("groups[{g}].borrowed_joints[{b}]"),
                    message: format!("`{name}` is not estimated by any group"),
                }),
            }
        }
        sources.push(resolved);
    }

    if violations.is_empty() {
        Ok(GroupSet {
            groups,
            dof_cap,
            sources,
        })
    } else {
        Err(GroupError::ValidationFailed(violations))
    }
}

/// Checks that every group references joints and muscles that exist.
pub fn check_against_model(
    set: &GroupSet,
    model: &crate::model::KinematicModel,
) -> Result<(), GroupError> {
    let mut violations = Vec::new();
    for (g, group) in set.groups().iter().enumerate() {
        for (field, list) in [
            ("estimated_joints", &group.estimated_joints),
            ("borrowed_joints", &group.borrowed_joints),
        ] {
            for (i, name) in list.iter().enumerate() {
                if model.joint_index(name).is_none() {
                    violations.push(Violation {
                        code: ViolationCode::UnknownJoint,
                        path: format!("groups[{g}].{field}[{i}]"),
                        message: format!("model has no joint `{name}`"),
                    });
                }
            }
        }
        for (i, name) in group.muscles.iter().enumerate() {
            if model.muscle_index(name).is_none() {
                violations.push(Violation {
                    code: ViolationCode::UnknownMuscle,
                    path: format!("groups[{g}].muscles[{i}]"),
                    message: format!("model has no muscle `{name}`"),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(GroupError::ValidationFailed(violations))
    }
}

/// Checks that each supplied mapping covers its group's joint order and
/// muscles exactly. `jmms[g]` belongs to group `g`; `None` skips the group.
pub fn check_jmms(
    set: &GroupSet,
    jmms: &[Option<&crate::jmm::PolynomialJmm>],
) -> Result<(), GroupError> {
    let mut violations = Vec::new();
    for (g, (group, jmm)) in set.groups().iter().zip(jmms).enumerate() {
        let Some(jmm) = jmm else { continue };
        if jmm.joint_names() != group.joint_order().as_slice() {
            violations.push(Violation {
                code: ViolationCode::JmmMismatch,
                path: format!("groups[{g}].jmm"),
                message: format!(
                    "mapping joints {:?} differ from group joint order {:?}",
                    jmm.joint_names(),
                    group.joint_order()
                ),
            });
        }
        if jmm.muscle_names() != group.muscles.as_slice() {
            violations.push(Violation {
                code: ViolationCode::JmmMismatch,
                path: format!("groups[{g}].jmm"),
                message: format!(
                    "mapping muscles {:?} differ from group muscles {:?}",
                    jmm.muscle_names(),
                    group.muscles
                ),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(GroupError::ValidationFailed(violations))
    }
}

/// Group configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDocument {
    #[serde(default = "default_cap")]
    pub dof_cap: usize,
    pub groups: Vec<GroupSpec>,
}

fn default_cap() -> usize {
    DEFAULT_DOF_CAP
}

impl GroupDocument {
    pub fn from_json(text: &str) -> Result<Self, GroupError> {
        serde_json::from_str(text).map_err(|e| GroupError::Format {
            path: "$".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GroupError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GroupError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("group document serializes")
    }

    pub fn validate(&self) -> Result<GroupSet, GroupError> {
        validate(self.groups.clone(), self.dof_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(name: &str, est: &[&str], bor: &[&str]) -> GroupSpec {
        GroupSpec {
            name: name.into(),
            estimated_joints: est.iter().map(|s| s.to_string()).collect(),
            borrowed_joints: bor.iter().map(|s| s.to_string()).collect(),
            muscles: vec![format!("{name}_m")],
            jmm: format!("{name}.json"),
        }
    }

    fn codes(err: GroupError) -> Vec<ViolationCode> {
        match err {
            GroupError::ValidationFailed(v) => v.into_iter().map(|v| v.code).collect(),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_group_without_borrowing() {
        let set = validate(vec![group("a", &["j1", "j2"], &[])], 8).unwrap();
        assert!(set.source_map().is_empty());
    }

    #[test]
    fn mutual_borrowing_resolves_sources() {
        let set = validate(
            vec![
                group("neck", &["n1", "n2"], &["s1"]),
                group("scapula", &["s1", "s2"], &["n2"]),
            ],
            8,
        )
        .unwrap();
        let map = set.source_map();
        assert_eq!(map.len(), 2);
        assert_eq!(map["s1"], Source { group: 1, index: 0 });
        assert_eq!(map["n2"], Source { group: 0, index: 1 });
        assert_eq!(set.sources(0), &[Source { group: 1, index: 0 }]);
    }

    #[test]
    fn reports_every_violation() {
        let err = validate(
            vec![
                group("a", &["j1", "j2"], &["x"]),
                group("b", &["j2"], &["j1", "j1"]),
                group("c", &["k1", "k2", "k3"], &["j1"]),
            ],
            3,
        )
        .unwrap_err();
        let codes = codes(err);
        assert!(codes.contains(&ViolationCode::OrphanBorrowed));
        assert!(codes.contains(&ViolationCode::DoubleEstimation));
        assert!(codes.contains(&ViolationCode::DuplicateJoint));
        assert!(codes.contains(&ViolationCode::DofCapExceeded));
    }

    #[test]
    fn overlap_is_rejected() {
        let err = validate(vec![group("a", &["j1"], &["j1"])], 8).unwrap_err();
        assert_eq!(codes(err), vec![ViolationCode::Overlap]);
    }

    #[test]
    fn validation_is_idempotent() {
        let groups = vec![
            group("neck", &["n1"], &["s1"]),
            group("scapula", &["s1"], &["n1"]),
        ];
        let once = validate(groups, 8).unwrap();
        let twice = validate(once.groups().to_vec(), once.dof_cap()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn selection_matrix_blocks() {
        assert_eq!(
            selection_matrix(&group("a", &["a", "b", "c", "d"], &[])),
            DMatrix::identity(4, 4)
        );
        let s = selection_matrix(&group("a", &["a", "b", "c", "d"], &["e", "f", "g", "h"]));
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        ]));
        assert_eq!(s, expected);
        assert_eq!(&s * &s, s);
        assert_eq!(
            selection_matrix(&group("a", &[], &["x", "y"])),
            DMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn document_defaults_cap() {
        let doc = GroupDocument::from_json(
            r#"{"groups": [{"name": "g", "estimated_joints": ["a"], "muscles": ["m"], "jmm": "g.json"}]}"#,
        )
        .unwrap();
        assert_eq!(doc.dof_cap, DEFAULT_DOF_CAP);
        assert!(doc.validate().is_ok());
    }

    #[test]
    fn mapping_must_match_group_order() {
        use crate::jmm::{MonomialBasis, Normalization, PolynomialJmm};
        let set = validate(vec![group("a", &["x"], &["y"]), group("b", &["y"], &[])], 8).unwrap();
        let make = |joints: &[&str]| {
            let basis = MonomialBasis::enumerate(joints.len(), 1).unwrap();
            let b = basis.len();
            PolynomialJmm::new(
                basis,
                DMatrix::zeros(1, b),
                vec!["a_m".into()],
                joints.iter().map(|s| s.to_string()).collect(),
                vec![Normalization::identity(); joints.len()],
            )
            .unwrap()
        };
        let good = make(&["x", "y"]);
        let swapped = make(&["y", "x"]);
        assert!(check_jmms(&set, &[Some(&good), None]).is_ok());
        let err = check_jmms(&set, &[Some(&swapped), None]).unwrap_err();
        assert_eq!(codes(err), vec![ViolationCode::JmmMismatch]);
    }
}
