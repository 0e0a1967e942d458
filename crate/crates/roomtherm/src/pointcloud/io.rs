//! PLY (ASCII) and XYZ readers/writers.
//!
//! PLY support is deliberately ASCII-only; binary files are rejected with a
//! clear error so round-trips stay bit-exact and testable.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    Xyz,
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ply" | "ply_ascii" => Ok(CloudFormat::PlyAscii),
            "xyz" => Ok(CloudFormat::Xyz),
            other => Err(Error::InvalidInput(format!(
                "unknown cloud format '{other}' (expected ply or xyz)"
            ))),
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CloudFormat::PlyAscii => write!(f, "ply"),
            CloudFormat::Xyz => write!(f, "xyz"),
        }
    }
}

impl CloudFormat {
    /// Pick a format from a file extension, defaulting to PLY.
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xyz") => CloudFormat::Xyz,
            _ => CloudFormat::PlyAscii,
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::PlyAscii => parse_ply(path, &text),
        CloudFormat::Xyz => parse_xyz(path, &text),
    }
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    if !cloud.all_finite() {
        return Err(Error::InvalidInput(
            "cloud contains non-finite coordinates; refusing to serialize".into(),
        ));
    }
    let mut out = Vec::new();
    match format {
        CloudFormat::PlyAscii => {
            write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\n\
                 property float x\nproperty float y\nproperty float z\nend_header\n",
                cloud.len()
            )
            .expect("write to vec");
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("write to vec");
            }
        }
        CloudFormat::Xyz => {
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("write to vec");
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_coord(path: &Path, line_no: usize, token: &str) -> Result<f64> {
    let value: f64 = token
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("non-numeric coordinate '{token}'")))?;
    if !value.is_finite() {
        return Err(Error::parse(
            path,
            line_no,
            format!("non-finite coordinate '{token}'"),
        ));
    }
    Ok(value)
}

fn parse_xyz(path: &Path, text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 'x y z', found {} fields", tokens.len()),
            ));
        }
        points.push(Point3::new(
            parse_coord(path, line_no, tokens[0])?,
            parse_coord(path, line_no, tokens[1])?,
            parse_coord(path, line_no, tokens[2])?,
        ));
    }
    Ok(PointCloud::new(points))
}

fn parse_ply(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));

    let (line_no, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, line_no, "expected 'ply' magic line"));
    }

    let mut format_seen = false;
    let mut vertex_count: Option<usize> = None;
    // Property names of the vertex element, in declaration order.
    let mut vertex_props: Vec<String> = Vec::new();
    // None before any element, Some(true) while inside vertex, Some(false) after.
    let mut in_vertex: Option<bool> = None;
    let mut trailing_elements = false;
    let mut header_end = 0usize;

    for (line_no, raw) in lines.by_ref() {
        let line = raw.trim();
        if line == "end_header" {
            header_end = line_no;
            break;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unsupported PLY format '{kind}' (only ascii 1.0)"),
                    ));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tokens.next().unwrap_or("");
                let count: usize = tokens.next().unwrap_or("").parse().map_err(|_| {
                    Error::parse(path, line_no, "element line missing a numeric count")
                })?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(Error::parse(path, line_no, "duplicate vertex element"));
                    }
                    if in_vertex == Some(false) {
                        return Err(Error::parse(
                            path,
                            line_no,
                            "vertex element must come first",
                        ));
                    }
                    vertex_count = Some(count);
                    in_vertex = Some(true);
                } else {
                    if vertex_count.is_none() {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("element '{name}' precedes the vertex element"),
                        ));
                    }
                    in_vertex = Some(false);
                    trailing_elements = true;
                }
            }
            Some("property") => {
                if in_vertex == Some(true) {
                    let kind = tokens.next().unwrap_or("");
                    if kind == "list" {
                        return Err(Error::parse(
                            path,
                            line_no,
                            "list properties on vertices are not supported",
                        ));
                    }
                    let name = tokens.next().unwrap_or("");
                    if name.is_empty() {
                        return Err(Error::parse(path, line_no, "property line missing a name"));
                    }
                    vertex_props.push(name.to_string());
                }
            }
            Some(other) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unexpected header keyword '{other}'"),
                ));
            }
            None => {}
        }
    }
    if header_end == 0 {
        return Err(Error::parse(path, 1, "header has no 'end_header' line"));
    }
    if !format_seen {
        return Err(Error::parse(path, header_end, "header has no format line"));
    }
    let count =
        vertex_count.ok_or_else(|| Error::parse(path, header_end, "no vertex element declared"))?;

    let coord_index = |name: &str| -> Result<usize> {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, header_end, format!("no '{name}' vertex property")))
    };
    let (ix, iy, iz) = (coord_index("x")?, coord_index("y")?, coord_index("z")?);

    let mut points = Vec::with_capacity(count);
    let mut last_line = header_end;
    for (line_no, raw) in lines.by_ref() {
        if points.len() == count {
            // Rows past the declared vertices belong to later elements.
            if !trailing_elements && !raw.trim().is_empty() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("more data rows than the {count} declared vertices"),
                ));
            }
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != vertex_props.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "expected {} values per vertex row, found {}",
                    vertex_props.len(),
                    tokens.len()
                ),
            ));
        }
        points.push(Point3::new(
            parse_coord(path, line_no, tokens[ix])?,
            parse_coord(path, line_no, tokens[iy])?,
            parse_coord(path, line_no, tokens[iz])?,
        ));
    }
    if points.len() != count {
        return Err(Error::parse(
            path,
            last_line + 1,
            format!("vertex count mismatch: declared {count}, found {}", points.len()),
        ));
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        fs::write(file.path(), content).unwrap();
        file
    }

    #[test]
    fn xyz_parses_plain_triples() {
        let file = write_temp("0 0 0\n1 0 0\n");
        let cloud = load_cloud(file.path(), CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn xyz_skips_comments_and_rejects_bad_rows() {
        let file = write_temp("# header\n1 2 3\n");
        assert_eq!(load_cloud(file.path(), CloudFormat::Xyz).unwrap().len(), 1);

        let file = write_temp("1 2\n");
        let err = load_cloud(file.path(), CloudFormat::Xyz).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let file = write_temp("1 2 zebra\n");
        let err = load_cloud(file.path(), CloudFormat::Xyz).unwrap_err();
        assert!(err.to_string().contains("zebra"), "{err}");
    }

    #[test]
    fn ply_count_mismatch_is_an_error() {
        let file = write_temp(
            "ply\nformat ascii 1.0\nelement vertex 3\n\
             property float x\nproperty float y\nproperty float z\nend_header\n\
             0 0 0\n1 1 1\n",
        );
        let err = load_cloud(file.path(), CloudFormat::PlyAscii).unwrap_err();
        assert!(err.to_string().contains("mismatch"), "{err}");
    }

    #[test]
    fn ply_extra_properties_are_ignored() {
        // Hand-written reference: colored vertices, coordinates still extracted.
        let file = write_temp(
            "ply\nformat ascii 1.0\ncomment colored\nelement vertex 2\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n\
             0.5 1.5 2.5 255 0 0\n-1 -2 -3 0 255 0\n",
        );
        let cloud = load_cloud(file.path(), CloudFormat::PlyAscii).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[0], Point3::new(0.5, 1.5, 2.5));
        assert_eq!(cloud.points()[1], Point3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn binary_ply_is_rejected() {
        let file = write_temp(
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n",
        );
        let err = load_cloud(file.path(), CloudFormat::PlyAscii).unwrap_err();
        assert!(err.to_string().contains("ascii"), "{err}");
    }

    #[test]
    fn empty_cloud_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ply");
        save_cloud(&PointCloud::default(), &path, CloudFormat::PlyAscii).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 0"));
        let cloud = load_cloud(&path, CloudFormat::PlyAscii).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn random_cloud_round_trips_within_1e6() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cloud: PointCloud = (0..1000)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() * 10.0 - 5.0,
                    rng.random::<f64>() * 10.0 - 5.0,
                    rng.random::<f64>() * 10.0 - 5.0,
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        for format in [CloudFormat::PlyAscii, CloudFormat::Xyz] {
            let path = dir.path().join(format!("cloud.{format}"));
            save_cloud(&cloud, &path, format).unwrap();
            let back = load_cloud(&path, format).unwrap();
            assert_eq!(back.len(), cloud.len());
            let max_err = cloud
                .points()
                .iter()
                .zip(back.points())
                .map(|(a, b)| {
                    (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.z - b.z).abs())
                })
                .fold(0.0, f64::max);
            assert!(max_err <= 1e-6, "{format}: max error {max_err}");
        }
    }

    #[test]
    fn nan_point_refuses_to_serialize() {
        let cloud = PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]);
        let dir = tempfile::tempdir().unwrap();
        let err = save_cloud(&cloud, &dir.path().join("bad.ply"), CloudFormat::PlyAscii)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }
}
