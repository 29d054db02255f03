//! CSV input and output of paths, targets and tabulated kernels.

use std::io::{Read, Write};

use crate::error::{BssError, Result};
use crate::grid::{PathRole, SamplePath, SimGrid};
use crate::kernels::Kernel;
use crate::simulator::SimulatedPath;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,value` rows.
pub fn write_path_csv<W: Write>(w: W, path: &SamplePath) -> Result<()> {
    write_columns(w, &[("value", path)])
}

/// One column per path after the time column; all paths share one grid.
pub fn write_columns<W: Write>(w: W, columns: &[(&str, &SamplePath)]) -> Result<()> {
    let Some((_, first)) = columns.first() else {
        return Err(BssError::invalid("no columns to write"));
    };
    let grid = first.grid;
    if columns.iter().any(|(_, p)| p.grid != grid) {
        return Err(BssError::domain("columns live on different grids"));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t"];
    header.extend(columns.iter().map(|(name, _)| *name));
    out.write_record(&header)?;
    for i in 0..grid.n_points() {
        let mut row = vec![fmt17(grid.time(i))];
        row.extend(columns.iter().map(|(_, p)| fmt17(p.values[i])));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Wide `t,B,sigma,Y,Z` file.
pub fn write_simulated_path<W: Write>(w: W, path: &SimulatedPath) -> Result<()> {
    write_columns(
        w,
        &[
            ("B", &path.driver_b),
            ("sigma", &path.sigma),
            ("Y", &path.y_part),
            ("Z", &path.z),
        ],
    )
}

/// Reads a two-column `t,value` file.
pub fn read_series_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(BssError::invalid(format!(
            "expected header `t,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| {
                BssError::invalid(format!("row {}: cannot parse `{s}`: {e}", line + 2))
            })
        };
        ts.push(parse(&record[0])?);
        vs.push(parse(&record[1])?);
    }
    Ok((ts, vs))
}

/// A target path from a `t,value` file whose times form a uniform grid.
pub fn read_target_csv<R: Read>(r: R) -> Result<SamplePath> {
    let (ts, vs) = read_series_csv(r)?;
    if ts.len() < 2 {
        return Err(BssError::invalid("a target needs at least two rows"));
    }
    let grid = SimGrid::new(ts[0], *ts.last().expect("non-empty"), ts.len() - 1)?;
    for (i, &t) in ts.iter().enumerate() {
        if grid.index_of(t)? != i {
            return Err(BssError::domain(format!("target time {t} breaks the uniform grid")));
        }
    }
    SamplePath::new(grid, vs, PathRole::Target)
}

/// A tabulated kernel from a `t,value` file.
pub fn read_kernel_csv<R: Read>(r: R) -> Result<Kernel> {
    let (ts, vs) = read_series_csv(r)?;
    Kernel::tabulated(ts, vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_round_trip_is_exact() {
        let grid = SimGrid::new(0.0, 1.0, 7).unwrap();
        let path = SamplePath::from_fn(grid, PathRole::Target, |t| (t * 3.3).sin() * t).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &path).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,value\n"));
        let back = read_target_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values, path.values);
        assert_eq!(back.grid.n_steps(), 7);
    }

    #[test]
    fn bad_header_and_gaps_are_rejected() {
        assert!(read_series_csv("time,v\n0,0\n".as_bytes()).is_err());
        assert!(read_target_csv("t,value\n0,0\n0.5,1\n0.6,1\n".as_bytes()).is_err());
    }

    #[test]
    fn kernel_from_csv() {
        let k = read_kernel_csv("t,value\n0,1\n0.5,1\n1,0\n".as_bytes()).unwrap();
        assert_eq!(k.value(0.25), 1.0);
        assert_eq!(k.value(0.75), 0.5);
    }
}
