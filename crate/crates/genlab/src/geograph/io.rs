//! Point-cloud file ingestion: ASCII OFF meshes (vertices only, faces
//! ignored) and XYZ-CSV. Parsing is locale-independent and every malformed
//! input reports the offending line number.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geograph::{CloudSource, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Off,
    XyzCsv,
}

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut cloud = match format {
        CloudFormat::Off => parse_off(&text),
        CloudFormat::XyzCsv => parse_xyz_csv(&text),
    }?;
    cloud.source = CloudSource::File(path.display().to_string());
    Ok(cloud)
}

pub fn save_point_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    let text = match format {
        CloudFormat::Off => write_off(cloud),
        CloudFormat::XyzCsv => write_xyz_csv(cloud),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Parse an ASCII OFF file: header token "OFF", a counts line "V F E",
/// then V vertex coordinate lines. Face lines are ignored.
pub fn parse_off(text: &str) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
    let (lineno, header) = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty OFF file".into(),
        })?;
    if header.trim() != "OFF" {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected OFF header, found {:?}", header.trim()),
        });
    }
    let (lineno, counts) = lines.next().ok_or(Error::Parse {
        line: lineno,
        msg: "missing counts line".into(),
    })?;
    let fields: Vec<&str> = counts.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("counts line must be \"V F E\", found {:?}", counts.trim()),
        });
    }
    let n_vertices: usize = fields[0].parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("invalid vertex count {:?}", fields[0]),
    })?;
    let mut coords = Vec::with_capacity(3 * n_vertices);
    for _ in 0..n_vertices {
        let (lineno, line) = lines.next().ok_or(Error::Parse {
            line: lineno,
            msg: format!("expected {n_vertices} vertex lines, file ended early"),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("vertex line needs 3 coordinates, found {:?}", line.trim()),
            });
        }
        for f in &fields[..3] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid coordinate {f:?}"),
            })?;
            coords.push(v);
        }
    }
    Ok(PointCloud::new(3, coords, CloudSource::Derived))
}

pub fn write_off(cloud: &PointCloud) -> String {
    assert_eq!(cloud.dim(), 3, "OFF files hold 3D points");
    let mut out = String::from("OFF\n");
    out.push_str(&format!("{} 0 0\n", cloud.n()));
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    out
}

/// Parse XYZ-CSV: one "x,y,z" row per point, optional non-numeric header
/// row, decimal points only.
pub fn parse_xyz_csv(text: &str) -> Result<PointCloud> {
    let mut coords = Vec::new();
    let mut saw_data = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 comma-separated values, found {}", fields.len()),
            });
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                coords.extend(vals);
                saw_data = true;
            }
            Err(_) if !saw_data => continue, // header row
            Err(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("invalid numeric row {trimmed:?}"),
                });
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    Ok(PointCloud::new(3, coords, CloudSource::Derived))
}

pub fn write_xyz_csv(cloud: &PointCloud) -> String {
    assert_eq!(cloud.dim(), 3, "XYZ-CSV files hold 3D points");
    let mut out = String::from("x,y,z\n");
    for p in cloud.points() {
        out.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OFF: &str = "OFF\n8 0 0\n\
        0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n";

    #[test]
    fn off_cube_exact_coordinates() {
        let cloud = parse_off(CUBE_OFF).unwrap();
        assert_eq!(cloud.n(), 8);
        assert_eq!(cloud.point(0), &[0.0, 0.0, 0.0]);
        assert_eq!(cloud.point(6), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn off_write_read_round_trip_is_bit_exact() {
        let cloud = parse_off(CUBE_OFF).unwrap();
        let text = write_off(&cloud);
        let back = parse_off(&text).unwrap();
        for i in 0..cloud.n() {
            for (a, b) in cloud.point(i).iter().zip(back.point(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // and the writer is a fixed point
        assert_eq!(write_off(&back), text);
    }

    #[test]
    fn off_faces_are_ignored() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let cloud = parse_off(text).unwrap();
        assert_eq!(cloud.n(), 3);
    }

    #[test]
    fn off_malformed_header_reports_line() {
        match parse_off("OFZ\n3 1 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn off_bad_vertex_reports_line() {
        let text = "OFF\n2 0 0\n0 0 0\n0 zero 0\n";
        match parse_off(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn off_truncated_reports_error() {
        assert!(parse_off("OFF\n5 0 0\n0 0 0\n").is_err());
    }

    #[test]
    fn csv_round_trip_with_header() {
        let text = "x,y,z\n0.5,1.25,-3\n1,2,3\n";
        let cloud = parse_xyz_csv(text).unwrap();
        assert_eq!(cloud.n(), 2);
        assert_eq!(cloud.point(0), &[0.5, 1.25, -3.0]);
        let again = parse_xyz_csv(&write_xyz_csv(&cloud)).unwrap();
        assert_eq!(cloud.point(1), again.point(1));
    }

    #[test]
    fn csv_bad_row_reports_line() {
        let text = "x,y,z\n1,2,3\n1,2\n";
        match parse_xyz_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
