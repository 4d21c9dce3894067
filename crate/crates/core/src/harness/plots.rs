use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::log::TrajectoryLog;
use super::HarnessError;

/// Files written by [`emit_plots`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotOutput {
    /// One CSV per joint: tick, true angle and every group's estimate.
    pub joint_data: Vec<PathBuf>,
    pub error_data: PathBuf,
    pub script: PathBuf,
    /// Figures the script draws: one overlay per joint plus one error plot.
    pub figures: Vec<String>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Writes per-joint time series, an error table and a matplotlib script that
/// renders true-vs-estimated overlays and the error curves.
pub fn emit_plots(
    log: &TrajectoryLog,
    out_dir: impl AsRef<Path>,
) -> Result<PlotOutput, HarnessError> {
    if log.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;

    let mut joint_data = Vec::new();
    let mut figures = Vec::new();
    let mut script_joints = String::new();
    for (j, joint) in log.joint_names.iter().enumerate() {
        let cols: Vec<usize> = log
            .estimate_columns
            .iter()
            .enumerate()
            .filter(|(_, c)| &c.joint == joint)
            .map(|(i, _)| i)
            .collect();
        let mut text = String::from("tick,true_deg");
        for &c in &cols {
            let col = &log.estimate_columns[c];
            let tag = if col.borrowed {
                "borrowed"
            } else {
                "estimated"
            };
            write!(text, ",{}_{tag}_deg", col.group).unwrap();
        }
        text.push('\n');
        for row in &log.rows {
            write!(text, "{},{}", row.tick, row.truth[j].to_degrees()).unwrap();
            for &c in &cols {
                write!(text, ",{}", row.estimates[c].to_degrees()).unwrap();
            }
            text.push('\n');
        }
        let stem = file_stem(joint);
        let path = out_dir.join(format!("joint_{stem}.csv"));
        write(&path, &text)?;
        joint_data.push(path);
        figures.push(format!("joint_{stem}.png"));
        writeln!(script_joints, "    ({joint:?}, \"joint_{stem}\"),").unwrap();
    }

    let mut errors = String::from("tick");
    for joint in &log.error_joints {
        write!(errors, ",{joint}").unwrap();
    }
    errors.push('\n');
    for row in &log.rows {
        write!(errors, "{}", row.tick).unwrap();
        for e in &row.errors {
            write!(errors, ",{}", e.to_degrees()).unwrap();
        }
        errors.push('\n');
    }
    let error_data = out_dir.join("errors.csv");
    write(&error_data, &errors)?;
    figures.push("errors.png".to_string());

    let script = out_dir.join("plot.py");
    write(&script, &SCRIPT.replace("@JOINTS@", &script_joints))?;
    Ok(PlotOutput {
        joint_data,
        error_data,
        script,
        figures,
    })
}

const SCRIPT: &str = r#"#!/usr/bin/env python3
"""Renders joint-angle overlays and error curves from the CSV files next to
this script. Requires matplotlib."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
JOINTS = [
@JOINTS@]


def read(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [[] for _ in header]
    return header, [[float(v) for v in c] for c in cols]


for joint, stem in JOINTS:
    header, cols = read(stem + ".csv")
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(cols[0], cols[1], "k-", lw=2, label="true")
    for name, col in zip(header[2:], cols[2:]):
        ax.plot(cols[0], col, lw=1, label=name.replace("_deg", ""))
    ax.set_title(joint)
    ax.set_xlabel("tick")
    ax.set_ylabel("angle [deg]")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, stem + ".png"), dpi=120)
    plt.close(fig)

header, cols = read("errors.csv")
fig, ax = plt.subplots(figsize=(8, 3))
for name, col in zip(header[1:], cols[1:]):
    ax.plot(cols[0], col, lw=1, label=name)
ax.axhline(0.0, color="k", lw=0.5)
ax.set_xlabel("tick")
ax.set_ylabel("error [deg]")
ax.legend(loc="best", fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "errors.png"), dpi=120)
plt.close(fig)
"#;
