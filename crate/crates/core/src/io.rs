//! CSV and JSON file formats.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so files
//! are locale independent and a value read back is bit-identical.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::model::{mbar_to_pa, pa_to_mbar};
use crate::precession::{conserved_quantities, SweepPoint, Trajectory};
use crate::spindown::{SpinDownTrace, SquidTrace, TraceMeta};

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "omega_x", "omega_y", "omega_z", "e_x", "e_y", "e_z"];
pub const SWEEP_HEADER: [&str; 3] = ["omega0", "T_s", "T_l"];
pub const SPINDOWN_HEADER: [&str; 2] = ["t_s", "f_hz"];
pub const SQUID_HEADER: [&str; 2] = ["t_s", "y"];
pub const PRESSURE_HEADER: [&str; 2] = ["p_gauge_mbar", "gamma_per_s"];

/// Relative tolerance on the sample spacing of an imported SQUID record.
const SPACING_TOLERANCE: f64 = 1e-6;

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::Data(e.to_string()),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Shortest round-trip decimal, switching to exponent form outside [1e-4, 1e16).
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn num(x: f64) -> String {
    format_f64(x)
}

fn write_rows<W, I>(w: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.write_record(&r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a trajectory; `with_energy` appends the `E_n` column.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory, with_energy: bool) -> Result<()> {
    let mut header = TRAJECTORY_HEADER.to_vec();
    if with_energy {
        header.push("E_n");
    }
    let rows = traj.states.iter().map(|s| {
        let mut r: Vec<String> = [s.t, s.omega.x, s.omega.y, s.omega.z, s.e.x, s.e.y, s.e.z].map(num).to_vec();
        if with_energy {
            r.push(num(conserved_quantities(s).energy));
        }
        r
    });
    write_rows(w, &header, rows)
}

/// Header row only, for empty records.
pub fn write_header<W: Write>(w: W, header: &[&str]) -> Result<()> {
    write_rows(w, header, std::iter::empty())
}

/// A missing slow line is written as an empty `T_l` field.
pub fn write_sweep<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let rows = points
        .iter()
        .map(|p| vec![num(p.omega0), num(p.fast_period), p.slow_period.map(num).unwrap_or_default()]);
    write_rows(w, &SWEEP_HEADER, rows)
}

pub fn write_spindown<W: Write>(w: W, trace: &SpinDownTrace) -> Result<()> {
    let rows = trace.times.iter().zip(&trace.freqs).map(|(t, f)| vec![num(*t), num(*f)]);
    write_rows(w, &SPINDOWN_HEADER, rows)
}

pub fn write_squid<W: Write>(w: W, trace: &SquidTrace) -> Result<()> {
    let rows = trace.values.iter().enumerate().map(|(k, y)| vec![num(trace.time(k)), num(*y)]);
    write_rows(w, &SQUID_HEADER, rows)
}

/// Reads a numeric CSV whose header must equal `header`.
pub fn read_columns<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let found: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Data(format!("expected header `{}`, found `{}`", header.join(","), found.join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("row {}: column `{}` is not a number: `{field}`", i + 2, header[c])))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn read_spindown<R: Read>(r: R) -> Result<SpinDownTrace> {
    let mut cols = read_columns(r, &SPINDOWN_HEADER)?;
    let f = cols.pop().unwrap();
    let t = cols.pop().unwrap();
    SpinDownTrace::new(t, f)
}

/// Reads a uniformly sampled record and recovers its sample rate from the time column.
pub fn read_squid<R: Read>(r: R) -> Result<SquidTrace> {
    let cols = read_columns(r, &SQUID_HEADER)?;
    let (t, y) = (&cols[0], &cols[1]);
    if t.len() < 2 {
        return Err(Error::Data(format!("need at least two samples, found {}", t.len())));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Data("times must increase".into()));
    }
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) / dt - 1.0).abs() > SPACING_TOLERANCE {
            return Err(Error::Data(format!("row {}: sampling is not uniform", k + 3)));
        }
    }
    SquidTrace::from_samples(1.0 / dt, y.clone())
}

/// Reads (gauge pressure in Pa, γ) pairs from a `p_gauge_mbar,gamma_per_s` file.
pub fn read_pressure_series<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let cols = read_columns(r, &PRESSURE_HEADER)?;
    Ok(cols[0].iter().zip(&cols[1]).map(|(p, g)| (mbar_to_pa(*p), *g)).collect())
}

pub fn write_pressure_series<W: Write>(w: W, points: &[(f64, f64)]) -> Result<()> {
    let rows = points.iter().map(|(p, g)| vec![num(pa_to_mbar(*p)), num(*g)]);
    write_rows(w, &PRESSURE_HEADER, rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Deserializes JSON, naming the offending field path on failure.
pub fn read_json<R: Read, T: DeserializeOwned>(r: R) -> Result<T> {
    let mut de = serde_json::Deserializer::from_reader(r);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("at `{path}`: {inner}"))
        }
    })
}

pub fn write_meta<W: Write>(w: W, meta: &TraceMeta) -> Result<()> {
    write_json(w, meta)
}

pub fn read_meta<R: Read>(r: R) -> Result<TraceMeta> {
    read_json(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spindown::*;

    #[test]
    fn spindown_round_trip_is_exact() {
        let model = StateSpaceModel::new(0.1, 50, 1e-3).unwrap();
        let p = OUParams::new(1e-19, 1e-3, 4.0, 1e4).unwrap();
        let tr = simulate_ou_spindown(&p, &model, 9).unwrap();
        let mut buf = Vec::new();
        write_spindown(&mut buf, &tr).unwrap();
        assert!(buf.starts_with(b"t_s,f_hz\n"));
        let back = read_spindown(buf.as_slice()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.freqs, tr.freqs);
    }

    #[test]
    fn squid_round_trip_recovers_rate() {
        let spec = SquidSpec {
            f0: 50.0,
            gamma: 0.01,
            amplitude: 1.0,
            phase0: 0.0,
            noise_sigma: 0.1,
            sample_rate: 400.0,
            duration: 1.0,
            process_noise: 0.0,
        };
        let sq = synth_squid_signal(&spec, 1).unwrap();
        let mut buf = Vec::new();
        write_squid(&mut buf, &sq).unwrap();
        let back = read_squid(buf.as_slice()).unwrap();
        assert_eq!(back.values, sq.values);
        assert!((back.sample_rate - 400.0).abs() < 1e-9);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.0, -2.5, 6.123233995736766e-17, 1.5e20, 12.58, 1e-4, 9.99e-5, f64::MIN_POSITIVE] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_f64(6.1e-17), "6.1e-17");
        assert_eq!(format_f64(0.25), "0.25");
    }

    #[test]
    fn bad_header_and_bad_number() {
        assert!(matches!(read_spindown("t,f\n0,1\n".as_bytes()), Err(Error::Data(_))));
        match read_spindown("t_s,f_hz\n0,1\n1,abc\n".as_bytes()) {
            Err(Error::Data(m)) => assert!(m.contains("row 3") && m.contains("f_hz"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_error_names_the_field() {
        #[derive(serde::Deserialize, Debug)]
        #[serde(deny_unknown_fields)]
        #[allow(dead_code)]
        struct Inner {
            radius_m: f64,
        }
        #[derive(serde::Deserialize, Debug)]
        #[allow(dead_code)]
        struct Outer {
            magnet: Inner,
        }
        let err = read_json::<_, Outer>(r#"{"magnet": {"radius_m": "x"}}"#.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("magnet.radius_m"), "{err}");
    }

    #[test]
    fn meta_uses_capital_q() {
        let m = TraceMeta { seed: Some(1), gamma: 1.0, omega0: 2.0, q: 3.0, sigma_v: 0.0, dt: 1.0, n_samples: 2 };
        let mut buf = Vec::new();
        write_meta(&mut buf, &m).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert!(s.contains("\"Q\": 3.0"));
        assert_eq!(read_meta(buf.as_slice()).unwrap(), m);
    }
}
