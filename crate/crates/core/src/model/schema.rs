//! JSON model documents. Angles are stored in degrees, positions in meters.
//!
//! ```json
//! {
//!   "links": ["base", "forearm"],
//!   "joints": [{
//!     "name": "elbow", "parent": "base", "child": "forearm",
//!     "axis": [0, 0, 1],
//!     "origin": { "translation": [0, 0, 0], "rotation": [1, 0, 0, 0] },
//!     "limits_deg": [-90, 90]
//!   }],
//!   "muscles": [{
//!     "name": "flexor",
//!     "via_points": [
//!       { "link": "base", "position": [-0.2, 0.03, 0] },
//!       { "link": "forearm", "position": [0.05, 0.02, 0] }
//!     ]
//!   }]
//! }
//! ```
//!
//! `rotation` is a unit quaternion in `[w, x, y, z]` order.

use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{JointDef, KinematicModel, ModelError, MuscleDef, ViaPoint};

#[derive(Debug, Serialize, Deserialize)]
struct OriginDoc {
    translation: [f64; 3],
    #[serde(default = "identity_quat")]
    rotation: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Serialize, Deserialize)]
struct JointDoc {
    name: String,
    parent: String,
    child: String,
    axis: [f64; 3],
    origin: OriginDoc,
    limits_deg: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct ViaDoc {
    link: String,
    position: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct MuscleDoc {
    name: String,
    via_points: Vec<ViaDoc>,
}

fn field<'a>(value: &'a Value, key: &str, path: &str) -> Result<&'a Value, ModelError> {
    value
        .get(key)
        .ok_or_else(|| ModelError::invalid(path, format!("missing key `{key}`")))
}

fn array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, ModelError> {
    value
        .as_array()
        .ok_or_else(|| ModelError::invalid(path, "expected an array"))
}

fn parse<T: for<'de> Deserialize<'de>>(value: &Value, path: &str) -> Result<T, ModelError> {
    T::deserialize(value).map_err(|e| ModelError::invalid(path, e.to_string()))
}

fn joint_from_doc(doc: JointDoc, path: &str) -> Result<JointDef, ModelError> {
    let axis = Vector3::from(doc.axis);
    let norm = axis.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(ModelError::invalid(
            format!("{path}.axis"),
            format!("axis must have unit norm (got {norm})"),
        ));
    }
    let [w, x, y, z] = doc.origin.rotation;
    let q = Quaternion::new(w, x, y, z);
    if !q.norm().is_finite() || (q.norm() - 1.0).abs() > 1e-6 {
        return Err(ModelError::invalid(
            format!("{path}.origin.rotation"),
            "rotation must be a unit quaternion [w, x, y, z]",
        ));
    }
    let [lo, hi] = doc.limits_deg;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(ModelError::invalid(
            format!("{path}.limits_deg"),
            "limits must be finite with lower < upper",
        ));
    }
    Ok(JointDef {
        name: doc.name,
        parent_link: doc.parent,
        child_link: doc.child,
        axis: Unit::new_unchecked(axis),
        origin: Isometry3::from_parts(
            Translation3::from(Vector3::from(doc.origin.translation)),
            UnitQuaternion::from_quaternion(q),
        ),
        lower_limit: lo.to_radians(),
        upper_limit: hi.to_radians(),
    })
}

/// Parses and validates a model document.
pub fn model_from_json(text: &str) -> Result<KinematicModel, ModelError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| ModelError::invalid("$", e.to_string()))?;
    let links: Vec<String> = parse(field(&root, "links", "$")?, "links")?;

    let mut joints = Vec::new();
    for (i, j) in array(field(&root, "joints", "$")?, "joints")?
        .iter()
        .enumerate()
    {
        let path = format!("joints[{i}]");
        joints.push(joint_from_doc(parse(j, &path)?, &path)?);
    }

    let mut muscles = Vec::new();
    for (i, m) in array(field(&root, "muscles", "$")?, "muscles")?
        .iter()
        .enumerate()
    {
        let doc: MuscleDoc = parse(m, &format!("muscles[{i}]"))?;
        muscles.push(MuscleDef {
            name: doc.name,
            via_points: doc
                .via_points
                .into_iter()
                .map(|v| ViaPoint {
                    link: v.link,
                    position: Vector3::from(v.position),
                })
                .collect(),
        });
    }

    KinematicModel::new(links, joints, muscles)
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<KinematicModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}

/// Serializes a model back into the document format.
pub fn model_to_json(model: &KinematicModel) -> String {
    let joints: Vec<JointDoc> = model
        .joints()
        .iter()
        .map(|j| {
            let q = j.origin.rotation.quaternion();
            JointDoc {
                name: j.name.clone(),
                parent: j.parent_link.clone(),
                child: j.child_link.clone(),
                axis: [j.axis.x, j.axis.y, j.axis.z],
                origin: OriginDoc {
                    translation: j.origin.translation.vector.into(),
                    rotation: [q.w, q.i, q.j, q.k],
                },
                limits_deg: [j.lower_limit.to_degrees(), j.upper_limit.to_degrees()],
            }
        })
        .collect();
    let muscles: Vec<MuscleDoc> = model
        .muscles()
        .iter()
        .map(|m| MuscleDoc {
            name: m.name.clone(),
            via_points: m
                .via_points
                .iter()
                .map(|v| ViaDoc {
                    link: v.link.clone(),
                    position: v.position.into(),
                })
                .collect(),
        })
        .collect();
    let doc = serde_json::json!({
        "links": model.links(),
        "joints": joints,
        "muscles": muscles,
    });
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}
