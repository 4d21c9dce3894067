//! Bundled demo models and their estimation groups.
//!
//! * `elbow1`: one hinge with an antagonist muscle pair.
//! * `planar2`: a planar shoulder/elbow arm with a biarticular muscle.
//! * `upper6`: neck, scapula and glenohumeral joints (two each) in three
//!   overlapping groups.

use crate::exec::ExecPolicy;
use crate::grouping::GroupDocument;
use crate::harness::{build_jmm, BuildRequest, ExperimentSetup, HarnessError};
use crate::model::{model_from_json, KinematicModel};

pub const NAMES: [&str; 3] = ["elbow1", "planar2", "upper6"];

fn sources(name: &str) -> Option<(&'static str, &'static str)> {
    match name {
        "elbow1" => Some((
            include_str!("../models/elbow1.json"),
            include_str!("../models/elbow1.groups.json"),
        )),
        "planar2" => Some((
            include_str!("../models/planar2.json"),
            include_str!("../models/planar2.groups.json"),
        )),
        "upper6" => Some((
            include_str!("../models/upper6.json"),
            include_str!("../models/upper6.groups.json"),
        )),
        _ => None,
    }
}

fn unknown(name: &str) -> HarnessError {
    HarnessError::Config(format!(
        "unknown demo model `{name}` (available: {})",
        NAMES.join(", ")
    ))
}

pub fn model_json(name: &str) -> Option<&'static str> {
    sources(name).map(|s| s.0)
}

pub fn groups_json(name: &str) -> Option<&'static str> {
    sources(name).map(|s| s.1)
}

pub fn model(name: &str) -> Result<KinematicModel, HarnessError> {
    Ok(model_from_json(
        model_json(name).ok_or_else(|| unknown(name))?,
    )?)
}

pub fn groups(name: &str) -> Result<GroupDocument, HarnessError> {
    Ok(GroupDocument::from_json(
        groups_json(name).ok_or_else(|| unknown(name))?,
    )?)
}

/// Model, validated groups and one mapping per group fitted over the joint
/// limits with `samples_per_joint` grid points per joint.
pub fn setup(
    name: &str,
    samples_per_joint: usize,
    degree: usize,
    exec: ExecPolicy,
) -> Result<ExperimentSetup, HarnessError> {
    let model = model(name)?;
    let set = groups(name)?.validate()?;
    let jmms = set
        .groups()
        .iter()
        .map(|g| {
            let request = BuildRequest::over_limits(
                &model,
                g.joint_order(),
                g.muscles.clone(),
                samples_per_joint,
                degree,
            )?;
            Ok(build_jmm(&model, &request, exec)?.0)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    ExperimentSetup::new(format!("demo:{name}"), model, set, jmms)
}
