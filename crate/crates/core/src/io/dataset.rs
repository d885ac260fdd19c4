//! Long-format dataset files: one row per individual and occasion from first
//! capture to the end of the study.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::format::sig17;
use crate::domain::{CaptureCode, CaptureHistory, Dataset};
use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["id", "occasion", "capture", "covariate"];

struct Rows {
    first_line: u64,
    rows: Vec<(u64, usize, CaptureCode, Option<f64>)>,
    birth: Option<usize>,
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_dataset(file)
}

/// Parses the columns `id,occasion,capture,covariate` with an optional trailing
/// `birth` column. Missing covariates are written `NA`.
pub fn parse_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> =
        rdr.headers().map_err(|e| Error::parse(format!("line 1: {e}")))?.iter().map(str::to_string).collect();
    let has_birth = match header.len() {
        4 => false,
        5 if header[4] == "birth" => true,
        _ => false,
    };
    if header[..header.len().min(4)] != COLUMNS || (header.len() != 4 && !has_birth) {
        return Err(Error::parse(format!(
            "line 1: header must be `id,occasion,capture,covariate[,birth]`, got `{}`",
            header.join(",")
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Rows> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::parse(format!("line {line}: {msg}"));
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let occasion: usize = record[1]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| bad(format!("occasion must be a positive integer, got `{}`", &record[1])))?;
        let code = record[2]
            .parse::<u8>()
            .map_err(|_| bad(format!("capture must be 0, 1 or 2, got `{}`", &record[2])))
            .and_then(|c| CaptureCode::try_from(c).map_err(|e| bad(e.to_string())))?;
        let covariate = match &record[3] {
            "NA" | "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|y| y.is_finite())
                    .ok_or_else(|| bad(format!("covariate must be a finite number or NA, got `{s}`")))?,
            ),
        };
        let birth = if has_birth {
            match &record[4] {
                "NA" | "" => None,
                s => Some(s.parse::<usize>().map_err(|_| bad(format!("birth must be an occasion or NA, got `{s}`")))?),
            }
        } else {
            None
        };

        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Rows { first_line: line, rows: Vec::new(), birth }
        });
        if entry.birth != birth {
            return Err(bad(format!("birth of `{id}` differs from its first row")));
        }
        if let Some(prev) = entry.rows.iter().find(|r| r.1 == occasion) {
            return Err(bad(format!("duplicate row for `{id}` at occasion {occasion} (first at line {})", prev.0)));
        }
        entry.rows.push((line, occasion, code, covariate));
    }
    if order.is_empty() {
        return Err(Error::parse("dataset has no rows"));
    }

    let occasions = by_id.values().flat_map(|r| r.rows.iter().map(|x| x.1)).max().unwrap_or(0);
    let mut histories = Vec::with_capacity(order.len());
    for id in order {
        let mut entry = by_id.remove(&id).expect("id recorded in order");
        entry.rows.sort_by_key(|r| r.1);
        let first = entry.rows[0].1;
        if let Some(w) = entry.rows.windows(2).find(|w| w[1].1 != w[0].1 + 1) {
            return Err(Error::parse(format!("line {}: `{id}` has no row for occasion {}", w[1].0, w[0].1 + 1)));
        }
        let last = entry.rows.last().expect("non-empty").1;
        if last != occasions {
            return Err(Error::parse(format!(
                "line {}: `{id}` has rows up to occasion {last} but the study has {occasions} occasions",
                entry.first_line
            )));
        }
        let captures = entry.rows.iter().map(|r| r.2).collect();
        let covariates = entry.rows.iter().map(|r| r.3).collect();
        let mut h = CaptureHistory::new(id, first, captures, covariates)?;
        if let Some(b) = entry.birth {
            h = h.with_birth(b)?;
        }
        histories.push(h);
    }
    Dataset::new(histories)
}

pub fn write_dataset(data: &Dataset, mut out: impl Write) -> Result<()> {
    let has_birth = data.histories().iter().any(|h| h.birth().is_some());
    let mut w = csv::WriterBuilder::new().from_writer(&mut out);
    let mut header = COLUMNS.to_vec();
    if has_birth {
        header.push("birth");
    }
    w.write_record(&header).map_err(csv_io)?;
    for h in data.histories() {
        let birth = h.birth().map_or_else(|| "NA".to_string(), |b| b.to_string());
        for (k, (code, cov)) in h.captures().iter().zip(h.covariates()).enumerate() {
            let occasion = (h.first() + k).to_string();
            let code = code.as_u8().to_string();
            let cov = cov.map_or_else(|| "NA".to_string(), sig17);
            let mut row = vec![h.id(), &occasion, &code, &cov];
            if has_birth {
                row.push(&birth);
            }
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_dataset(data, &mut buf)?;
    buf.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes())
    }

    #[test]
    fn minimal_file() {
        let d = parse("id,occasion,capture,covariate\na,1,1,12.5\na,2,0,NA\na,3,2,NA\n").unwrap();
        let h = &d.histories()[0];
        assert_eq!(h.death_occasion(), Some(3));
        assert_eq!(h.covariate(1), Some(12.5));
        assert_eq!(d.occasions(), 3);
    }

    #[test]
    fn covariate_after_death_names_the_id() {
        let err =
            parse("id,occasion,capture,covariate\nsheep7,1,1,12.5\nsheep7,2,2,NA\nsheep7,3,0,10.0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("sheep7"), "{err}");
    }

    #[test]
    fn capture_after_recovery_is_rejected() {
        let err = parse("id,occasion,capture,covariate\na,1,1,1\na,2,2,NA\na,3,1,NA\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn duplicate_row_reports_line() {
        let err = parse("id,occasion,capture,covariate\na,1,1,1\na,2,0,NA\na,2,0,NA\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn malformed_rows_report_line() {
        for (text, line) in [
            ("id,occasion,capture,covariate\na,1,1,1\na,x,0,NA\n", "line 3"),
            ("id,occasion,capture,covariate\na,1,3,1\n", "line 2"),
            ("id,occasion,capture,covariate\na,1,1,abc\n", "line 2"),
            ("id,occasion,capture,covariate\na,1,1\n", "line 2"),
            ("id,occ,capture,covariate\na,1,1,1\n", "line 1"),
        ] {
            let err = parse(text).unwrap_err();
            assert!(matches!(err, Error::Parse(_)), "{text}: {err}");
            assert!(err.to_string().contains(line), "{text}: {err}");
        }
    }

    #[test]
    fn gaps_and_short_histories_are_rejected() {
        assert!(parse("id,occasion,capture,covariate\na,1,1,1\na,3,0,NA\n").is_err());
        assert!(parse("id,occasion,capture,covariate\na,1,1,1\na,2,0,NA\nb,1,1,2\n").is_err());
    }

    #[test]
    fn rows_may_come_in_any_order() {
        let d = parse("id,occasion,capture,covariate\nb,2,1,3\na,2,0,NA\na,1,1,1\n").unwrap();
        assert_eq!(d.histories()[0].id(), "b");
        assert_eq!(d.histories()[0].first(), 2);
        assert_eq!(d.histories()[1].first(), 1);
    }

    #[test]
    fn write_then_read_is_identity() {
        let h1 = CaptureHistory::new(
            "a",
            1,
            vec![CaptureCode::Seen, CaptureCode::Unseen, CaptureCode::Seen],
            vec![Some(0.1), None, Some(-1e-300)],
        )
        .unwrap();
        let h2 = CaptureHistory::new("b", 2, vec![CaptureCode::Seen, CaptureCode::Recovered], vec![None, None])
            .unwrap()
            .with_birth(1)
            .unwrap();
        let d = Dataset::new(vec![h1, h2]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = parse_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.checksum(), d.checksum());
    }
}
