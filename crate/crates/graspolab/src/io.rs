//! CSV file formats. Every file written here starts with one `#` comment
//! line carrying the resolved run configuration; readers skip such lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use graspolab_core::mapping::LineModel;
use graspolab_core::{
    assemble_observations, AxisLine, EEPosition, ImagePoint, MappingMatrix, ObservationSet,
};

use crate::error::HarnessError;

pub const OBSERVATION_HEADER: [&str; 6] = ["ix", "iy", "iz", "rx", "ry", "rz"];
pub const MATRIX_HEADER: [&str; 3] = ["c1", "c2", "c3"];
pub const LINES_HEADER: [&str; 3] = ["axis", "slope", "intercept"];

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, e.into())
}

/// Writes `comment`, a header row and `rows` to `path`.
pub fn write_csv<I>(
    path: &Path,
    comment: &str,
    header: &[&str],
    rows: I,
) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "{}", comment.trim_end()).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Header and records of a CSV file, skipping `#` lines.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| HarnessError::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::data(path, e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &[String], want: &[&str]) -> Result<(), HarnessError> {
    if header.iter().map(String::as_str).eq(want.iter().copied()) {
        Ok(())
    } else {
        Err(HarnessError::data(
            path,
            format!(
                "expected header {}, found {}",
                want.join(","),
                header.join(",")
            ),
        ))
    }
}

fn parse_f64(path: &Path, row: usize, field: &str) -> Result<f64, HarnessError> {
    let v: f64 = field.parse().map_err(|_| {
        HarnessError::data(
            path,
            format!("row {row}: cannot parse {field:?} as a number"),
        )
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HarnessError::data(
            path,
            format!("row {row}: non-finite value {field:?}"),
        ))
    }
}

pub fn write_observations(
    path: &Path,
    comment: &str,
    obs: &ObservationSet,
) -> Result<(), HarnessError> {
    let rows = (0..obs.len()).map(|j| {
        let (p, r) = (obs.image_point(j), obs.position(j));
        [p.ix, p.iy, p.iz, r.rx, r.ry, r.rz]
            .iter()
            .map(|v| fmt_f64(*v))
            .collect()
    });
    write_csv(path, comment, &OBSERVATION_HEADER, rows)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet, HarnessError> {
    let (header, rows) = read_csv(path)?;
    expect_header(path, &header, &OBSERVATION_HEADER)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut positions = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let v = row
            .iter()
            .map(|f| parse_f64(path, i + 1, f))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(ImagePoint::with_depth(v[0], v[1], v[2]));
        positions.push(EEPosition::new(v[3], v[4], v[5]));
    }
    assemble_observations(&points, &positions).map_err(|e| HarnessError::data(path, e.to_string()))
}

pub fn write_mapping(path: &Path, comment: &str, m: &MappingMatrix) -> Result<(), HarnessError> {
    let rows = (0..3).map(|r| (0..3).map(|c| fmt_f64(m.get(r, c))).collect());
    write_csv(path, comment, &MATRIX_HEADER, rows)
}

pub fn read_mapping(path: &Path) -> Result<MappingMatrix, HarnessError> {
    let (header, rows) = read_csv(path)?;
    expect_header(path, &header, &MATRIX_HEADER)?;
    if rows.len() != 3 {
        return Err(HarnessError::data(
            path,
            format!("expected 3 rows, found {}", rows.len()),
        ));
    }
    let mut m = [0.0; 9];
    for (r, row) in rows.iter().enumerate() {
        for (c, f) in row.iter().enumerate() {
            m[r * 3 + c] = parse_f64(path, r + 1, f)?;
        }
    }
    MappingMatrix::from_row_major(m).map_err(|e| HarnessError::data(path, e.to_string()))
}

pub fn write_lines(path: &Path, comment: &str, model: &LineModel) -> Result<(), HarnessError> {
    let rows = ["x", "y", "z"]
        .iter()
        .zip(&model.lines)
        .map(|(axis, l)| vec![axis.to_string(), fmt_f64(l.slope), fmt_f64(l.intercept)]);
    write_csv(path, comment, &LINES_HEADER, rows)
}

pub fn read_lines(path: &Path) -> Result<[AxisLine; 3], HarnessError> {
    let (header, rows) = read_csv(path)?;
    expect_header(path, &header, &LINES_HEADER)?;
    let mut lines = [None; 3];
    for (i, row) in rows.iter().enumerate() {
        let idx = match row[0].as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            other => {
                return Err(HarnessError::data(
                    path,
                    format!("row {}: unknown axis {other:?}", i + 1),
                ))
            }
        };
        lines[idx] = Some(AxisLine {
            slope: parse_f64(path, i + 1, &row[1])?,
            intercept: parse_f64(path, i + 1, &row[2])?,
        });
    }
    match lines {
        [Some(x), Some(y), Some(z)] => Ok([x, y, z]),
        _ => Err(HarnessError::data(path, "need one row per axis x, y, z")),
    }
}

/// Rows of `(label, metric, value)` in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<(String, String, String)>,
}

impl ResultTable {
    pub fn push(
        &mut self,
        label: impl Into<String>,
        metric: impl Into<String>,
        value: impl Into<String>,
    ) {
        self.rows.push((label.into(), metric.into(), value.into()));
    }

    pub fn get(&self, label: &str, metric: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|(l, m, _)| l == label && m == metric)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn get_f64(&self, label: &str, metric: &str) -> Option<f64> {
        self.get(label, metric)?.parse().ok()
    }

    pub fn write(&self, path: &Path, comment: &str) -> Result<(), HarnessError> {
        let rows = self
            .rows
            .iter()
            .map(|(l, m, v)| vec![l.clone(), m.clone(), v.clone()]);
        write_csv(path, comment, &["label", "metric", "value"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let pts = [
            ImagePoint::new(0.1, 0.7),
            ImagePoint::new(1.0 / 3.0, 2e-9),
            ImagePoint::new(0.5, 0.5),
        ];
        let pos = [
            EEPosition::new(0.3, -0.2, 0.05),
            EEPosition::new(1e-12, 4.0, -7.25),
            EEPosition::new(0.0, 0.0, 0.0),
        ];
        let obs = assemble_observations(&pts, &pos).unwrap();
        write_observations(&path, "# test", &obs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# test\nix,iy,iz,rx,ry,rz\n"));
        assert_eq!(read_observations(&path).unwrap(), obs);
    }

    #[test]
    fn wrong_header_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(&path, "x,y,z,a,b,c\n1,2,3,4,5,6\n").unwrap();
        assert_eq!(read_observations(&path).unwrap_err().category(), "data");
        std::fs::write(&path, "ix,iy,iz,rx,ry,rz\n1,2,3,4,oops,6\n").unwrap();
        assert_eq!(read_observations(&path).unwrap_err().category(), "data");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_observations(Path::new("/nonexistent/obs.csv")).unwrap_err();
        assert_eq!(err.category(), "io");
    }

    #[test]
    fn models_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = MappingMatrix::from_row_major([0.1, -0.2, 0.3, 4.0, 5.0, -6.0, 1e-7, 8.0, 9.5])
            .unwrap();
        let p = dir.path().join("m.csv");
        write_mapping(&p, "# m", &m).unwrap();
        assert_eq!(read_mapping(&p).unwrap(), m);

        let lm = LineModel {
            lines: [
                AxisLine {
                    slope: 0.5,
                    intercept: -0.25,
                },
                AxisLine {
                    slope: 1.5,
                    intercept: 0.0,
                },
                AxisLine {
                    slope: 0.0,
                    intercept: 0.125,
                },
            ],
            constant_axes: [false, false, true],
        };
        let p = dir.path().join("lr.csv");
        write_lines(&p, "# lr", &lm).unwrap();
        assert_eq!(read_lines(&p).unwrap(), lm.lines);
    }
}
