//! CSV trajectory logs.
//!
//! A log starts with `# key=value` comment lines fingerprinting the run,
//! followed by an RFC 4180 table with one row per tick. Angles are written in
//! degrees and lengths in meters.

use std::io::{BufRead, Write};
use std::path::Path;

use super::HarnessError;

/// One column of per-group estimates: the estimate of `joint` held by `group`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimateColumn {
    pub group: String,
    pub joint: String,
    pub borrowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub tick: usize,
    /// True angles of every model joint, radians.
    pub truth: Vec<f64>,
    /// Measured length change per model muscle, meters.
    pub delta_z: Vec<f64>,
    /// Absolute encoder reading per model muscle, meters (absolute mode only).
    pub z_abs: Option<Vec<f64>>,
    /// One value per [`TrajectoryLog::estimate_columns`], radians.
    pub estimates: Vec<f64>,
    /// Authoritative estimate minus truth per [`TrajectoryLog::error_joints`],
    /// radians.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: Vec<(String, String)>,
    pub joint_names: Vec<String>,
    pub muscle_names: Vec<String>,
    pub estimate_columns: Vec<EstimateColumn>,
    pub error_joints: Vec<String>,
    pub has_absolute: bool,
    pub rows: Vec<LogRow>,
}

/// Radians whose degree form is exactly `deg`, so that a loaded log writes
/// back byte for byte. Logged values come from `to_degrees`, so such a value
/// lies within a few ulps of the plain conversion.
fn from_logged_degrees(deg: f64) -> f64 {
    let guess = deg.to_radians();
    let (mut up, mut down) = (guess, guess);
    for _ in 0..8 {
        if up.to_degrees() == deg {
            return up;
        }
        if down.to_degrees() == deg {
            return down;
        }
        up = up.next_up();
        down = down.next_down();
    }
    guess
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Per-tick series of the authoritative error of `joint`, radians.
    pub fn error_series(&self, joint: &str) -> Option<Vec<f64>> {
        let idx = self.error_joints.iter().position(|j| j == joint)?;
        Some(self.rows.iter().map(|r| r.errors[idx]).collect())
    }

    pub fn truth_series(&self, joint: &str) -> Option<Vec<f64>> {
        let idx = self.joint_names.iter().position(|j| j == joint)?;
        Some(self.rows.iter().map(|r| r.truth[idx]).collect())
    }

    /// Per-tick series of the estimate of `joint` held by `group`.
    pub fn estimate_series(&self, group: &str, joint: &str) -> Option<Vec<f64>> {
        let idx = self
            .estimate_columns
            .iter()
            .position(|c| c.group == group && c.joint == joint)?;
        Some(self.rows.iter().map(|r| r.estimates[idx]).collect())
    }

    fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["tick".to_string()];
        cols.extend(self.joint_names.iter().map(|j| format!("true_deg:{j}")));
        cols.extend(self.muscle_names.iter().map(|m| format!("dz_m:{m}")));
        if self.has_absolute {
            cols.extend(self.muscle_names.iter().map(|m| format!("zabs_m:{m}")));
        }
        cols.extend(
            self.estimate_columns
                .iter()
                .map(|c| format!("est_deg:{}:{}", c.group, c.joint)),
        );
        cols.extend(self.error_joints.iter().map(|j| format!("err_deg:{j}")));
        cols
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        for (k, v) in &self.header {
            writeln!(out, "# {k}={v}").map_err(io)?;
        }
        let mut writer = csv::WriterBuilder::new().from_writer(out);
        writer.write_record(self.column_names()).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec: Vec<String> = Vec::with_capacity(1 + row.truth.len() * 3);
            rec.push(row.tick.to_string());
            rec.extend(row.truth.iter().map(|v| v.to_degrees().to_string()));
            rec.extend(row.delta_z.iter().map(|v| v.to_string()));
            if self.has_absolute {
                let z = row.z_abs.as_ref().ok_or_else(|| {
                    HarnessError::Config(format!("tick {} lacks absolute lengths", row.tick))
                })?;
                rec.extend(z.iter().map(|v| v.to_string()));
            }
            rec.extend(row.estimates.iter().map(|v| v.to_degrees().to_string()));
            rec.extend(row.errors.iter().map(|v| v.to_degrees().to_string()));
            writer.write_record(&rec).map_err(csv_err)?;
        }
        writer.flush().map_err(io)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Parses a log written by [`TrajectoryLog::write_csv`]. Values come back
    /// in radians, so angles may differ from the originals in the last bit.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, HarnessError> {
        let mut header = Vec::new();
        let mut line = String::new();
        let mut table = String::new();
        loop {
            line.clear();
            if input.read_line(&mut line).map_err(io)? == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((k, v)) = rest.split_once('=') {
                    header.push((k.trim().to_string(), v.trim().to_string()));
                }
            } else {
                table.push_str(&line);
                input.read_to_string(&mut table).map_err(io)?;
                break;
            }
        }
        let mut reader = csv::Reader::from_reader(table.as_bytes());
        let cols: Vec<String> = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        if cols.first().map(String::as_str) != Some("tick") {
            return Err(HarnessError::Config(
                "log table must start with a `tick` column".into(),
            ));
        }

        let mut log = TrajectoryLog {
            header,
            joint_names: vec![],
            muscle_names: vec![],
            estimate_columns: vec![],
            error_joints: vec![],
            has_absolute: false,
            rows: vec![],
        };
        #[derive(Clone, Copy)]
        enum Kind {
            Truth,
            Dz,
            Zabs,
            Est,
            Err,
        }
        let mut kinds = Vec::with_capacity(cols.len());
        for c in &cols[1..] {
            let (prefix, rest) = c
                .split_once(':')
                .ok_or_else(|| HarnessError::Config(format!("unrecognized column `{c}`")))?;
            match prefix {
                "true_deg" => {
                    log.joint_names.push(rest.to_string());
                    kinds.push(Kind::Truth);
                }
                "dz_m" => {
                    log.muscle_names.push(rest.to_string());
                    kinds.push(Kind::Dz);
                }
                "zabs_m" => {
                    log.has_absolute = true;
                    kinds.push(Kind::Zabs);
                }
                "est_deg" => {
                    let (group, joint) = rest.split_once(':').ok_or_else(|| {
                        HarnessError::Config(format!("unrecognized column `{c}`"))
                    })?;
                    log.estimate_columns.push(EstimateColumn {
                        group: group.to_string(),
                        joint: joint.to_string(),
                        borrowed: false,
                    });
                    kinds.push(Kind::Est);
                }
                "err_deg" => {
                    log.error_joints.push(rest.to_string());
                    kinds.push(Kind::Err);
                }
                _ => return Err(HarnessError::Config(format!("unrecognized column `{c}`"))),
            }
        }
        if let Some(borrowed) = log.header_value("borrowed_columns") {
            let set: Vec<String> = borrowed
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            for c in &mut log.estimate_columns {
                c.borrowed = set.contains(&format!("{}:{}", c.group, c.joint));
            }
        }

        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| HarnessError::Config(format!("row {r}: bad number `{s}`")))
            };
            let mut row = LogRow {
                tick: record
                    .get(0)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| HarnessError::Config(format!("row {r}: bad tick")))?,
                truth: vec![],
                delta_z: vec![],
                z_abs: log.has_absolute.then(Vec::new),
                estimates: vec![],
                errors: vec![],
            };
            if record.len() != cols.len() {
                return Err(HarnessError::Config(format!(
                    "row {r}: expected {} fields, found {}",
                    cols.len(),
                    record.len()
                )));
            }
            for (kind, field) in kinds.iter().zip(record.iter().skip(1)) {
                let v = parse(field)?;
                match kind {
                    Kind::Truth => row.truth.push(from_logged_degrees(v)),
                    Kind::Dz => row.delta_z.push(v),
                    Kind::Zabs => row.z_abs.as_mut().expect("absolute log").push(v),
                    Kind::Est => row.estimates.push(from_logged_degrees(v)),
                    Kind::Err => row.errors.push(from_logged_degrees(v)),
                }
            }
            log.rows.push(row);
        }
        Ok(log)
    }
}

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryLog {
        TrajectoryLog {
            header: vec![
                ("model".into(), "demo".into()),
                ("borrowed_columns".into(), "g:b".into()),
            ],
            joint_names: vec!["a".into(), "b".into()],
            muscle_names: vec!["m".into()],
            estimate_columns: vec![
                EstimateColumn {
                    group: "g".into(),
                    joint: "a".into(),
                    borrowed: false,
                },
                EstimateColumn {
                    group: "g".into(),
                    joint: "b".into(),
                    borrowed: true,
                },
            ],
            error_joints: vec!["a".into()],
            has_absolute: true,
            rows: (0..3)
                .map(|t| LogRow {
                    tick: t,
                    truth: vec![0.1 * t as f64, -0.2],
                    delta_z: vec![1e-4 * t as f64],
                    z_abs: Some(vec![2e-4 * t as f64]),
                    estimates: vec![0.11 * t as f64, -0.19],
                    errors: vec![0.01 * t as f64],
                })
                .collect(),
        }
    }

    #[test]
    fn csv_layout() {
        let text = sample().to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# model=demo"));
        assert_eq!(lines.next(), Some("# borrowed_columns=g:b"));
        assert_eq!(
            lines.next(),
            Some("tick,true_deg:a,true_deg:b,dz_m:m,zabs_m:m,est_deg:g:a,est_deg:g:b,err_deg:a")
        );
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn reads_back_structure() {
        let log = sample();
        let text = log.to_csv_string().unwrap();
        let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.header, log.header);
        assert_eq!(back.estimate_columns, log.estimate_columns);
        assert_eq!(back.rows.len(), 3);
        for (a, b) in back.rows.iter().zip(&log.rows) {
            assert_eq!(a.delta_z, b.delta_z);
            assert!((a.truth[0] - b.truth[0]).abs() < 1e-15);
        }
        // rewriting the parsed log reproduces the bytes
        assert_eq!(back.to_csv_string().unwrap(), text);
    }

    proptest::proptest! {
        #[test]
        fn logged_degrees_convert_back_exactly(rad in -20.0..20.0f64) {
            let deg = rad.to_degrees();
            proptest::prop_assert_eq!(from_logged_degrees(deg).to_degrees(), deg);
        }
    }
}
