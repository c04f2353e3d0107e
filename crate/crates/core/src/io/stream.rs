//! Marker stream CSV.
//!
//! ```text
//! time_s,body,label,x_mm,y_mm,z_mm,visible
//! 0.01,femur,F1,100.5,839.2,420.0,1
//! 0.01,femur,F2,,,,0
//! ```
//!
//! Consecutive rows with the same time form one sample. Times must not
//! decrease. Hidden markers (`visible` = 0) may leave the coordinates empty.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::rigidbody::{MarkerFrameSample, MarkerObservation};
use std::collections::BTreeSet;
use std::io::{Read, Write};

pub const STREAM_HEADER: [&str; 7] = ["time_s", "body", "label", "x_mm", "y_mm", "z_mm", "visible"];

fn parse_err(line: u64, column: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        reason: reason.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        csv::ErrorKind::UnequalLengths { len, expected_len, .. } => parse_err(
            line,
            (len.min(expected_len) + 1) as usize,
            format!("expected {expected_len} fields, found {len}"),
        ),
        csv::ErrorKind::Utf8 { err, .. } => parse_err(line, err.field() + 1, "invalid UTF-8"),
        other => parse_err(line, 1, format!("{other:?}")),
    }
}

struct Row {
    line: u64,
    t: f64,
    observation: MarkerObservation,
}

fn parse_row(record: &csv::StringRecord) -> Result<Row> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let field = |i: usize| record.get(i).unwrap_or("");
    let number = |i: usize| -> Result<Option<f64>> {
        let s = field(i);
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(parse_err(line, i + 1, format!("`{s}` is not a finite number"))),
        }
    };

    let t = number(0)?.ok_or_else(|| parse_err(line, 1, "missing time"))?;
    if t < 0.0 {
        return Err(parse_err(line, 1, format!("negative time {t}")));
    }
    let body = field(1);
    if body.is_empty() {
        return Err(parse_err(line, 2, "missing body"));
    }
    let label = field(2);
    if label.is_empty() {
        return Err(parse_err(line, 3, "missing marker label"));
    }
    let visible = match field(6) {
        "1" => true,
        "0" => false,
        other => return Err(parse_err(line, 7, format!("visible must be 0 or 1, got `{other}`"))),
    };
    let coords = [number(3)?, number(4)?, number(5)?];
    let position = match coords {
        [Some(x), Some(y), Some(z)] => Some(Vec3::new(x, y, z)),
        [None, None, None] if !visible => None,
        _ => {
            let column = coords.iter().position(Option::is_none).unwrap_or(0) + 4;
            let reason = if visible {
                "visible marker needs all three coordinates"
            } else {
                "coordinates must be all present or all empty"
            };
            return Err(parse_err(line, column, reason));
        }
    };
    Ok(Row {
        line,
        t,
        observation: MarkerObservation {
            body: body.to_string(),
            label: label.to_string(),
            position,
            visible,
        },
    })
}

/// Incremental reader yielding one sample at a time.
pub struct MarkerStreamReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    pending: Option<Result<Row>>,
    previous_t: Option<f64>,
    failed: bool,
}

impl<R: Read> MarkerStreamReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader.headers().map_err(csv_err)?.clone();
        if header.is_empty() {
            return Err(parse_err(1, 1, "missing header"));
        }
        for (i, expected) in STREAM_HEADER.iter().enumerate() {
            match header.get(i) {
                Some(h) if h == *expected => {}
                found => {
                    return Err(parse_err(
                        1,
                        i + 1,
                        format!("expected header `{expected}`, found `{}`", found.unwrap_or("")),
                    ))
                }
            }
        }
        if header.len() != STREAM_HEADER.len() {
            return Err(parse_err(1, STREAM_HEADER.len() + 1, "unexpected extra header column"));
        }
        Ok(MarkerStreamReader {
            records: reader.into_records(),
            pending: None,
            previous_t: None,
            failed: false,
        })
    }

    fn next_row(&mut self) -> Option<Result<Row>> {
        if let Some(row) = self.pending.take() {
            return Some(row);
        }
        let record = self.records.next()?;
        Some(record.map_err(csv_err).and_then(|r| parse_row(&r)))
    }

    fn read_sample(&mut self) -> Option<Result<MarkerFrameSample>> {
        let first = match self.next_row()? {
            Ok(row) => row,
            Err(e) => return Some(Err(e)),
        };
        if let Some(previous) = self.previous_t {
            if first.t <= previous {
                return Some(Err(Error::NonMonotonicTime {
                    previous,
                    current: first.t,
                    line: first.line,
                }));
            }
        }
        let t = first.t;
        let mut labels = BTreeSet::from([first.observation.label.clone()]);
        let mut observations = vec![first.observation];
        loop {
            match self.next_row() {
                None => break,
                // finish this sample; the error surfaces on the next call
                Some(Err(e)) => {
                    self.pending = Some(Err(e));
                    break;
                }
                Some(Ok(row)) if row.t == t => {
                    if !labels.insert(row.observation.label.clone()) {
                        return Some(Err(parse_err(
                            row.line,
                            3,
                            format!("marker `{}` appears twice at t = {t}", row.observation.label),
                        )));
                    }
                    observations.push(row.observation);
                }
                Some(Ok(row)) => {
                    self.pending = Some(Ok(row));
                    break;
                }
            }
        }
        self.previous_t = Some(t);
        Some(Ok(MarkerFrameSample::new(t, observations)))
    }
}

impl<R: Read> Iterator for MarkerStreamReader<R> {
    type Item = Result<MarkerFrameSample>;

    /// Stops after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.read_sample();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

/// Reads a whole stream.
pub fn parse_marker_stream<R: Read>(input: R) -> Result<Vec<MarkerFrameSample>> {
    MarkerStreamReader::new(input)?.collect()
}

pub fn write_marker_stream<W: Write>(output: W, samples: &[MarkerFrameSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(STREAM_HEADER).map_err(csv_err)?;
    for s in samples {
        let t = s.t.to_string();
        for o in &s.observations {
            let [x, y, z] = match o.position {
                Some(p) => [p.x.to_string(), p.y.to_string(), p.z.to_string()],
                None => Default::default(),
            };
            let visible = if o.visible { "1" } else { "0" };
            w.write_record([t.as_str(), &o.body, &o.label, &x, &y, &z, visible])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Converts a `MM:SS.mmm` clock reading to seconds.
pub fn parse_clock_time(text: &str) -> Result<f64> {
    let bad = |reason: &str| parse_err(0, 1, format!("clock time `{text}`: {reason}"));
    let (minutes, seconds) = text.trim().split_once(':').ok_or_else(|| bad("expected MM:SS.mmm"))?;
    let minutes: u32 = minutes.parse().map_err(|_| bad("minutes are not a whole number"))?;
    let seconds: f64 = seconds.parse().map_err(|_| bad("seconds are not a number"))?;
    if !(0.0..60.0).contains(&seconds) {
        return Err(bad("seconds must be in [0, 60)"));
    }
    // integer milliseconds keep e.g. 01:48.492 from picking up rounding noise
    let millis = (seconds * 1000.0).round();
    if (seconds * 1000.0 - millis).abs() < 1e-6 {
        return Ok((f64::from(minutes) * 60_000.0 + millis) / 1000.0);
    }
    Ok(f64::from(minutes) * 60.0 + seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "time_s,body,label,x_mm,y_mm,z_mm,visible\n";

    fn parse(text: &str) -> Result<Vec<MarkerFrameSample>> {
        parse_marker_stream(text.as_bytes())
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse(HEADER).unwrap().is_empty());
    }

    #[test]
    fn one_row_one_observation() {
        let s = parse(&format!("{HEADER}0.5,femur,F1,1,2.5,-3,1\n")).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].t, 0.5);
        assert_eq!(s[0].observations.len(), 1);
        assert_eq!(s[0].visible_position("F1"), Some(Vec3::new(1.0, 2.5, -3.0)));
    }

    #[test]
    fn rows_group_by_time() {
        let text = format!("{HEADER}0,a,A1,1,1,1,1\n0,a,A2,,,,0\n0.01,a,A1,1,1,1,1\n");
        let s = parse(&text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].observations.len(), 2);
        assert!(!s[0].observations[1].visible);
        assert_eq!(s[0].observations[1].position, None);
    }

    #[test]
    fn time_regression_names_both_times() {
        let text = format!("{HEADER}1.5,a,A1,1,1,1,1\n1.25,a,A1,1,1,1,1\n");
        match parse(&text) {
            Err(Error::NonMonotonicTime { previous, current, line }) => {
                assert_eq!((previous, current, line), (1.5, 1.25, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line_and_column() {
        let cases = [
            ("0,a,A1,1,x,1,1\n", 2, 5),
            ("0,a,A1,1,1,1,2\n", 2, 7),
            ("0,a,A1,,,,1\n", 2, 4),
            ("0,a,A1,1,,1,0\n", 2, 5),
            ("0,,A1,1,1,1,1\n", 2, 2),
            ("-1,a,A1,1,1,1,1\n", 2, 1),
            ("0,a,A1,1,1,1,1\n0,a,A1,1,1,1,1\n", 3, 3),
            ("0,a,A1,1,1,1,1\n0,a,A2,1,1,inf,1\n", 3, 6),
            ("0,a,A1,1,1,1\n", 2, 7),
        ];
        for (body, line, column) in cases {
            match parse(&format!("{HEADER}{body}")) {
                Err(Error::Parse { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{body}"),
                other => panic!("{body}: {other:?}"),
            }
        }
        assert!(matches!(parse("time,body\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn emit_parse_round_trip() {
        let text = format!(
            "{HEADER}0,femur,F1,0.1,-2000.125,3.333333333333333,1\n0,femur,F2,,,,0\n0,tibia,T1,4,5,6,0\n0.01,femur,F1,1,2,3,1\n"
        );
        let samples = parse(&text).unwrap();
        let mut out = Vec::new();
        write_marker_stream(&mut out, &samples).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(parse_marker_stream(out.as_slice()).unwrap(), samples);
    }

    #[test]
    fn reader_stops_after_error() {
        let text = format!("{HEADER}0,a,A1,1,1,1,1\n1,a,A1,1,q,1,1\n2,a,A1,1,1,1,1\n");
        let items: Vec<_> = MarkerStreamReader::new(text.as_bytes()).unwrap().collect();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_ok() && items[1].is_err());
    }

    #[test]
    fn clock_times() {
        assert_eq!(parse_clock_time("00:11.033").unwrap(), 11.033);
        assert_eq!(parse_clock_time("01:48.492").unwrap(), 108.492);
        assert_eq!(parse_clock_time("04:37.517").unwrap(), 277.517);
        assert!(parse_clock_time("04:37:517").is_err());
        assert!(parse_clock_time("11.5").is_err());
    }
}
