//! JSON persistence of fitted mappings.
//!
//! Floats are written in shortest round-trip form, so loading a saved file
//! reproduces every coefficient bit for bit.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{JmmError, MonomialBasis, Normalization, PolynomialJmm};

pub const JMM_FORMAT: &str = "jae-jmm/1";

#[derive(Debug, Serialize, Deserialize)]
struct BasisDoc {
    dof_count: usize,
    degree: usize,
    ordering: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct JmmDoc {
    format: String,
    basis: BasisDoc,
    joint_names: Vec<String>,
    muscle_names: Vec<String>,
    normalization: Vec<Normalization>,
    /// M × B, row-major.
    coefficients: Vec<f64>,
}

pub fn jmm_to_json(jmm: &PolynomialJmm) -> String {
    let c = jmm.coefficients();
    let doc = JmmDoc {
        format: JMM_FORMAT.into(),
        basis: BasisDoc {
            dof_count: jmm.basis().dof_count(),
            degree: jmm.basis().degree(),
            ordering: "graded-lex".into(),
        },
        joint_names: jmm.joint_names().to_vec(),
        muscle_names: jmm.muscle_names().to_vec(),
        normalization: jmm.normalization().to_vec(),
        coefficients: (0..c.nrows())
            .flat_map(|i| (0..c.ncols()).map(move |j| c[(i, j)]))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("jmm document serializes")
}

pub fn jmm_from_json(text: &str) -> Result<PolynomialJmm, JmmError> {
    let doc: JmmDoc = serde_json::from_str(text).map_err(|e| JmmError::Format {
        path: "$".into(),
        message: e.to_string(),
    })?;
    if doc.format != JMM_FORMAT {
        return Err(JmmError::Format {
            path: "format".into(),
            message: format!("expected `{JMM_FORMAT}`, found `{}`", doc.format),
        });
    }
    if doc.basis.ordering != "graded-lex" {
        return Err(JmmError::Format {
            path: "basis.ordering".into(),
            message: format!("unsupported ordering `{}`", doc.basis.ordering),
        });
    }
    let basis = MonomialBasis::enumerate(doc.basis.dof_count, doc.basis.degree)?;
    let rows = doc.muscle_names.len();
    if doc.coefficients.len() != rows * basis.len() {
        return Err(JmmError::Format {
            path: "coefficients".into(),
            message: format!(
                "expected {} values ({} muscles × {} monomials), found {}",
                rows * basis.len(),
                rows,
                basis.len(),
                doc.coefficients.len()
            ),
        });
    }
    let coefficients = DMatrix::from_row_slice(rows, basis.len(), &doc.coefficients);
    PolynomialJmm::new(
        basis,
        coefficients,
        doc.muscle_names,
        doc.joint_names,
        doc.normalization,
    )
}

pub fn save_jmm(jmm: &PolynomialJmm, path: impl AsRef<Path>) -> Result<(), JmmError> {
    let path = path.as_ref();
    std::fs::write(path, jmm_to_json(jmm))
        .map_err(|e| JmmError::Io(format!("{}: {e}", path.display())))
}

pub fn load_jmm(path: impl AsRef<Path>) -> Result<PolynomialJmm, JmmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| JmmError::Io(format!("{}: {e}", path.display())))?;
    jmm_from_json(&text)
}
