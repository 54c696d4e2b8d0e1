//! CSV serialization: header `x0,...,x{d-1},label`, one row per sample,
//! coordinates written with 17 significant digits.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{DataError, LabeledDataset};

fn csv_error(line: usize, e: impl std::fmt::Display) -> DataError {
    DataError::Csv {
        line,
        msg: e.to_string(),
    }
}

pub fn write_csv<W: Write>(ds: &LabeledDataset, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let d = ds.dim();
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).chain(["label".to_string()]).collect();
    w.write_record(&header).map_err(|e| csv_error(1, e))?;
    for n in 0..ds.len() {
        let row: Vec<String> = ds
            .point(n)
            .iter()
            .map(|v| format!("{v:.16e}"))
            .chain([ds.labels()[n].to_string()])
            .collect();
        w.write_record(&row).map_err(|e| csv_error(n + 2, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset. The class count is the largest label present.
pub fn read_csv<R: Read>(input: R) -> Result<LabeledDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| csv_error(1, e))?.clone();
    if header.len() < 2 || header.get(header.len() - 1) != Some("label") {
        return Err(csv_error(1, format!("expected header x0,...,label, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let d = header.len() - 1;
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| csv_error(line, e))?;
        for f in rec.iter().take(d) {
            let v: f64 = f.parse().map_err(|e| csv_error(line, format!("bad coordinate `{f}`: {e}")))?;
            coords.push(v);
        }
        let y: usize = rec[d].parse().map_err(|e| csv_error(line, format!("bad label `{}`: {e}", &rec[d])))?;
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(csv_error(2, "no samples"));
    }
    let n = labels.len();
    let by_row = Array2::from_shape_vec((n, d), coords).map_err(|e| csv_error(0, e))?;
    let k = labels.iter().copied().max().unwrap_or(0);
    LabeledDataset::new(by_row.t().to_owned(), labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn writes_header_and_rows() {
        let ds = LabeledDataset::new(array![[0.5, 1.0], [2.0, -3.0]], vec![1, 2], 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x0,x1,label"));
        assert_eq!(lines.next(), Some("5.0000000000000000e-1,2.0000000000000000e0,1"));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_csv("x0,label\n1.0\n".as_bytes()).is_err());
        assert!(read_csv("x0,label\nfoo,1\n".as_bytes()).is_err());
        assert!(read_csv("".as_bytes()).is_err());
    }
}
