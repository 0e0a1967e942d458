//! Time series types (weather, zone traces, monitoring streams) and their
//! CSV formats.
//!
//! All files share the column vocabulary `time_s, t_out_c, t_zone_c,
//! hvac_on`: weather files carry `time_s,t_out_c`, schedules
//! `time_s,hvac_on`, traces `time_s,t_zone_c,hvac_on`, and monitoring
//! streams all four.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Outdoor forcing: strictly increasing timestamps with one outdoor
/// temperature per timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherSeries {
    /// Seconds.
    pub timestamps: Vec<f64>,
    /// °C.
    pub t_out: Vec<f64>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.t_out.len() {
            return Err(Error::Alignment(format!(
                "weather has {} timestamps but {} temperatures",
                self.timestamps.len(),
                self.t_out.len()
            )));
        }
        if self.timestamps.is_empty() {
            return Err(Error::InvalidInput("weather series is empty".into()));
        }
        for pair in self.timestamps.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidInput(format!(
                    "weather timestamps not strictly increasing at {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.t_out.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("weather contains non-finite values".into()));
        }
        Ok(())
    }

    /// Constant outdoor temperature sampled every `interval_s` over
    /// `horizon_s` (inclusive of t = 0).
    pub fn constant(t_out: f64, horizon_s: f64, interval_s: f64) -> WeatherSeries {
        let n = (horizon_s / interval_s).round() as usize;
        let timestamps: Vec<f64> = (0..=n).map(|i| i as f64 * interval_s).collect();
        let t_out = vec![t_out; timestamps.len()];
        WeatherSeries { timestamps, t_out }
    }

    /// Sinusoidal daily cycle: `mean + amplitude·cos(2π (h - peak_hour)/24)`
    /// where `h` is the hour of day.
    pub fn sinusoidal_daily(
        days: f64,
        interval_s: f64,
        mean: f64,
        amplitude: f64,
        peak_hour: f64,
    ) -> WeatherSeries {
        let n = (days * 86400.0 / interval_s).round() as usize;
        let timestamps: Vec<f64> = (0..=n).map(|i| i as f64 * interval_s).collect();
        let t_out = timestamps
            .iter()
            .map(|&t| {
                let hour = t / 3600.0;
                mean + amplitude * ((hour - peak_hour) * std::f64::consts::TAU / 24.0).cos()
            })
            .collect();
        WeatherSeries { timestamps, t_out }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("time_s,t_out_c\n");
        for (t, v) in self.timestamps.iter().zip(&self.t_out) {
            out.push_str(&format!("{t},{v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<WeatherSeries> {
        let rows = read_rows(path, &["time_s", "t_out_c"])?;
        let series = WeatherSeries {
            timestamps: rows.iter().map(|r| r[0]).collect(),
            t_out: rows.iter().map(|r| r[1]).collect(),
        };
        series.validate()?;
        Ok(series)
    }
}

/// Indoor temperature trace with the HVAC status strip.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub timestamps: Vec<f64>,
    /// °C.
    pub t_zone: Vec<f64>,
    pub hvac_on: Vec<bool>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.t_zone.len()
            || self.timestamps.len() != self.hvac_on.len()
        {
            return Err(Error::Alignment(format!(
                "trace columns disagree: {} timestamps, {} temperatures, {} flags",
                self.timestamps.len(),
                self.t_zone.len(),
                self.hvac_on.len()
            )));
        }
        if self.t_zone.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("trace contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("time_s,t_zone_c,hvac_on\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.timestamps[i],
                self.t_zone[i],
                u8::from(self.hvac_on[i])
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Trace> {
        let rows = read_rows(path, &["time_s", "t_zone_c", "hvac_on"])?;
        let trace = Trace {
            timestamps: rows.iter().map(|r| r[0]).collect(),
            t_zone: rows.iter().map(|r| r[1]).collect(),
            hvac_on: rows.iter().map(|r| r[2] != 0.0).collect(),
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// One monitoring sample: outdoor and indoor temperature plus HVAC status.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamSample {
    pub time_s: f64,
    pub t_out_c: f64,
    pub t_zone_c: f64,
    pub hvac_on: bool,
}

/// Split a stream into its weather and trace components (shared timestamps).
pub fn split_stream(stream: &[StreamSample]) -> (WeatherSeries, Trace) {
    let timestamps: Vec<f64> = stream.iter().map(|s| s.time_s).collect();
    (
        WeatherSeries {
            timestamps: timestamps.clone(),
            t_out: stream.iter().map(|s| s.t_out_c).collect(),
        },
        Trace {
            timestamps,
            t_zone: stream.iter().map(|s| s.t_zone_c).collect(),
            hvac_on: stream.iter().map(|s| s.hvac_on).collect(),
        },
    )
}

/// Zip weather and a trace into stream samples. Timestamps must agree.
pub fn merge_stream(weather: &WeatherSeries, trace: &Trace) -> Result<Vec<StreamSample>> {
    if weather.len() != trace.len() {
        return Err(Error::Alignment(format!(
            "weather has {} samples, trace has {}",
            weather.len(),
            trace.len()
        )));
    }
    Ok((0..weather.len())
        .map(|i| StreamSample {
            time_s: weather.timestamps[i],
            t_out_c: weather.t_out[i],
            t_zone_c: trace.t_zone[i],
            hvac_on: trace.hvac_on[i],
        })
        .collect())
}

pub fn write_stream_csv(path: &Path, stream: &[StreamSample]) -> Result<()> {
    let mut out = String::from("time_s,t_out_c,t_zone_c,hvac_on\n");
    for s in stream {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.time_s,
            s.t_out_c,
            s.t_zone_c,
            u8::from(s.hvac_on)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_stream_csv(path: &Path) -> Result<Vec<StreamSample>> {
    let rows = read_rows(path, &["time_s", "t_out_c", "t_zone_c", "hvac_on"])?;
    Ok(rows
        .iter()
        .map(|r| StreamSample {
            time_s: r[0],
            t_out_c: r[1],
            t_zone_c: r[2],
            hvac_on: r[3] != 0.0,
        })
        .collect())
}

/// HVAC flag per timestamp: on while the hour of day lies in
/// `[on_hour, off_hour)`.
pub fn daily_schedule(timestamps: &[f64], on_hour: f64, off_hour: f64) -> Vec<bool> {
    timestamps
        .iter()
        .map(|&t| {
            let hour = (t / 3600.0) % 24.0;
            hour >= on_hour && hour < off_hour
        })
        .collect()
}

pub fn write_schedule_csv(path: &Path, timestamps: &[f64], schedule: &[bool]) -> Result<()> {
    let mut out = String::from("time_s,hvac_on\n");
    for (t, on) in timestamps.iter().zip(schedule) {
        out.push_str(&format!("{},{}\n", t, u8::from(*on)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_schedule_csv(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let rows = read_rows(path, &["time_s", "hvac_on"])?;
    Ok((
        rows.iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| r[1] != 0.0).collect(),
    ))
}

/// Parse a header-checked CSV of f64 columns. hvac_on columns arrive as 0/1
/// and are converted by the callers.
fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let expected = columns.join(",");
    if header.trim() != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header '{expected}', found '{}'", header.trim()),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(fields.len());
        for (name, field) in columns.iter().zip(&fields) {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("bad {name} value '{field}'"))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_peaks_at_requested_hour() {
        let w = WeatherSeries::sinusoidal_daily(1.0, 3600.0, 32.0, 6.0, 15.0);
        w.validate().unwrap();
        let (peak_idx, _) = w
            .t_out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(peak_idx, 15);
        assert!((w.t_out[15] - 38.0).abs() < 1e-9);
        assert!((w.t_out[3] - 26.0).abs() < 1e-9);
    }

    #[test]
    fn daily_schedule_half_open_interval() {
        let ts: Vec<f64> = (0..48).map(|i| i as f64 * 1800.0).collect();
        let s = daily_schedule(&ts, 10.0, 18.0);
        assert!(!s[19]); // 09:30
        assert!(s[20]); // 10:00
        assert!(s[35]); // 17:30
        assert!(!s[36]); // 18:00
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let w = WeatherSeries::sinusoidal_daily(0.5, 600.0, 30.0, 5.0, 14.0);
        let wp = dir.path().join("weather.csv");
        w.write_csv(&wp).unwrap();
        assert_eq!(WeatherSeries::read_csv(&wp).unwrap(), w);

        let trace = Trace {
            timestamps: w.timestamps.clone(),
            t_zone: w.t_out.iter().map(|t| t - 4.0).collect(),
            hvac_on: daily_schedule(&w.timestamps, 9.0, 17.0),
        };
        let tp = dir.path().join("trace.csv");
        trace.write_csv(&tp).unwrap();
        assert_eq!(Trace::read_csv(&tp).unwrap(), trace);

        let stream = merge_stream(&w, &trace).unwrap();
        let sp = dir.path().join("stream.csv");
        write_stream_csv(&sp, &stream).unwrap();
        assert_eq!(read_stream_csv(&sp).unwrap(), stream);
        let (w2, t2) = split_stream(&stream);
        assert_eq!(w2, w);
        assert_eq!(t2, trace);
    }

    #[test]
    fn header_and_field_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "time,temp\n0,1\n").unwrap();
        let err = WeatherSeries::read_csv(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        fs::write(&p, "time_s,t_out_c\n0,1\nbad,2\n").unwrap();
        let err = WeatherSeries::read_csv(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_increasing_weather_is_rejected() {
        let w = WeatherSeries {
            timestamps: vec![0.0, 10.0, 10.0],
            t_out: vec![1.0, 2.0, 3.0],
        };
        assert!(w.validate().is_err());
    }
}
