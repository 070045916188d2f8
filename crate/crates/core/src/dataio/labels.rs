//! Text label files.
//!
//! One example per line. Single-label lines hold a decimal class index;
//! multi-label lines hold `C` comma-separated `0`/`1` values. Lines starting
//! with `#` are comments. Blank lines are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LabelSet, MultiLabelSet};
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with('#'))
}

pub fn parse_labels(text: &str, num_classes: usize, path: Option<&Path>) -> Result<LabelSet> {
    let mut labels = Vec::new();
    for (line_no, line) in data_lines(text) {
        let err = |msg: String| Error::format_at_line(path.map(Path::to_path_buf), line_no, msg);
        let c: usize = line
            .trim()
            .parse()
            .map_err(|_| err(format!("expected a class index, found {line:?}")))?;
        if c >= num_classes {
            return Err(err(format!("class {c} out of range for {num_classes} classes")));
        }
        labels.push(c);
    }
    LabelSet::new(labels, num_classes)
}

pub fn parse_multilabels(text: &str, num_classes: usize, path: Option<&Path>) -> Result<MultiLabelSet> {
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(text) {
        let err = |msg: String| Error::format_at_line(path.map(Path::to_path_buf), line_no, msg);
        let row = line
            .split(',')
            .map(|f| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("expected 0 or 1, found {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if row.len() != num_classes {
            return Err(err(format!("row has {} values, expected {num_classes}", row.len())));
        }
        rows.push(row);
    }
    MultiLabelSet::new(rows, num_classes)
}

pub fn format_labels(labels: &LabelSet) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for &c in labels.as_slice() {
        let _ = writeln!(out, "{c}");
    }
    out
}

pub fn format_multilabels(labels: &MultiLabelSet) -> String {
    let mut out = String::with_capacity(labels.len() * labels.num_classes() * 2);
    for i in 0..labels.len() {
        let row: Vec<&str> = labels.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_labels(path: impl AsRef<Path>, num_classes: usize) -> Result<LabelSet> {
    let path = path.as_ref();
    parse_labels(&fs::read_to_string(path)?, num_classes, Some(path))
}

pub fn read_multilabels(path: impl AsRef<Path>, num_classes: usize) -> Result<MultiLabelSet> {
    let path = path.as_ref();
    parse_multilabels(&fs::read_to_string(path)?, num_classes, Some(path))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelSet) -> Result<()> {
    fs::write(path, format_labels(labels))?;
    Ok(())
}

pub fn write_multilabels(path: impl AsRef<Path>, labels: &MultiLabelSet) -> Result<()> {
    fs::write(path, format_multilabels(labels))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_label_file() {
        let l = parse_labels("0\n2\n1\n", 3, None).unwrap();
        assert_eq!(l.as_slice(), &[0, 2, 1]);
        assert_eq!(format_labels(&l), "0\n2\n1\n");
    }

    #[test]
    fn comments_are_skipped() {
        let l = parse_labels("# header\n1\n# mid\n0\n", 2, None).unwrap();
        assert_eq!(l.as_slice(), &[1, 0]);
    }

    #[test]
    fn out_of_range_reports_line() {
        let e = parse_labels("0\n1\n3\n", 3, None).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_labels("0\n\n1\n", 3, None).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn multi_label_rows() {
        let l = parse_multilabels("1,0,1\n0,0,0\n", 3, None).unwrap();
        assert_eq!(l.row(0), &[true, false, true]);
        assert_eq!(l.row(1), &[false, false, false]);
        assert_eq!(format_multilabels(&l), "1,0,1\n0,0,0\n");
        let e = parse_multilabels("1,0\n", 3, None).unwrap_err().to_string();
        assert!(e.contains("line 1"));
        assert!(parse_multilabels("1,2,0\n", 3, None).is_err());
    }
}
