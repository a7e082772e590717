//! File emission and ingestion for the command-line tools.
//!
//! Writers target any `std::io::Write` sink so tests can render into
//! memory; the atomic helpers stage bytes into a hidden temporary file
//! next to the destination and rename it into place, so a crash mid-write
//! never leaves a half-written artifact behind.
//!
//! Floats are printed with the shortest representation that parses back
//! to the same bits, which makes the control CSV a lossless round trip.

use crate::control::{BinaryControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::optimizer::{GapRow, IterationRecord, RelaxRow};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

/// Relative slack when matching times read from a file against a grid.
const TIME_TOL: f64 = 1e-9;

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` via a temporary file in the same directory
/// plus a rename. Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let seq = TEMP_SEQ.fetch_add(1, Ordering::Relaxed);
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(
        ".{}.{}.{seq}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        e.into()
    })
}

/// Pretty-printed JSON through [`write_atomic`].
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Renders a writer callback into a byte buffer, for handing to
/// [`write_atomic`].
pub fn render<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Relaxed control as `interval_index,t_start,t_end,beta_1..beta_M`.
/// The end times make the file self-describing: [`read_beta_csv`]
/// recovers the grid even from a single row.
pub fn write_beta_csv<W: Write>(out: &mut W, beta: &RelaxedControl) -> Result<()> {
    write!(out, "interval_index,t_start,t_end")?;
    for j in 1..=beta.num_modes() {
        write!(out, ",beta_{j}")?;
    }
    writeln!(out)?;
    let grid = beta.grid();
    for k in 0..grid.n_intervals() {
        write!(out, "{k},{},{}", grid.level_time(k), grid.level_time(k + 1))?;
        for &v in beta.row(k) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("line {line}: not a number: {field:?}")))
}

/// Parses the format emitted by [`write_beta_csv`]. Rows must be listed
/// in order on a uniform grid and sit on the simplex; a control file is
/// an input, so infeasible rows are rejected rather than repaired.
pub fn read_beta_csv(text: &str) -> Result<RelaxedControl> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config("empty control file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 4 || cols[0] != "interval_index" || cols[1] != "t_start" || cols[2] != "t_end"
    {
        return Err(Error::Config(format!("unrecognized control header: {header:?}")));
    }
    let m = cols.len() - 3;
    for (j, col) in cols[3..].iter().enumerate() {
        let want = format!("beta_{}", j + 1);
        if *col != want {
            return Err(Error::Config(format!(
                "control header column {col:?} where {want:?} was expected"
            )));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 3 {
            return Err(Error::Config(format!(
                "line {lineno}: {} fields where {} were expected",
                fields.len(),
                m + 3
            )));
        }
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {lineno}: bad interval index")))?;
        if k != rows.len() {
            return Err(Error::Config(format!(
                "line {lineno}: interval {k} out of order (expected {})",
                rows.len()
            )));
        }
        let t0 = parse_f64(fields[1], lineno)?;
        let t1 = parse_f64(fields[2], lineno)?;
        let row: Vec<f64> = fields[3..]
            .iter()
            .map(|f| parse_f64(f, lineno))
            .collect::<Result<_>>()?;
        let sum: f64 = row.iter().sum();
        if !row.iter().all(|v| (-TIME_TOL..=1.0 + TIME_TOL).contains(v))
            || (sum - 1.0).abs() > TIME_TOL
        {
            return Err(Error::Config(format!(
                "line {lineno}: weights do not lie on the simplex (sum = {sum})"
            )));
        }
        rows.push(row);
        spans.push((t0, t1));
    }
    if rows.is_empty() {
        return Err(Error::Config("control file has a header but no rows".into()));
    }

    let horizon = spans.last().unwrap().1;
    let grid = TimeGrid::new(horizon, rows.len())?;
    let tol = TIME_TOL * horizon.abs().max(1.0);
    for (k, &(t0, t1)) in spans.iter().enumerate() {
        if (t0 - grid.level_time(k)).abs() > tol || (t1 - grid.level_time(k + 1)).abs() > tol {
            return Err(Error::Config(format!(
                "interval {k} spans [{t0}, {t1}], off the uniform grid"
            )));
        }
    }

    let mut values = ndarray::Array2::zeros((rows.len(), m));
    for (k, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[[k, j]] = v;
        }
    }
    RelaxedControl::new(grid, values)
}

pub fn read_beta_file(path: &Path) -> Result<RelaxedControl> {
    read_beta_csv(&fs::read_to_string(path)?)
}

/// Optimizer iteration log as `iter,J,step_size,pg_norm`.
pub fn write_iteration_log_csv<W: Write>(out: &mut W, log: &[IterationRecord]) -> Result<()> {
    writeln!(out, "iter,J,step_size,pg_norm")?;
    for r in log {
        writeln!(out, "{},{},{},{}", r.iter, r.cost, r.step_size, r.pg_norm)?;
    }
    Ok(())
}

/// Relax-round table as `k,dt,epsilon,J_v,abs_gap,rel_gap`.
pub fn write_study_csv<W: Write>(out: &mut W, rows: &[RelaxRow]) -> Result<()> {
    writeln!(out, "k,dt,epsilon,J_v,abs_gap,rel_gap")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k, r.dt, r.epsilon, r.j_v, r.abs_gap, r.rel_gap
        )?;
    }
    Ok(())
}

/// Deviation-vs-distance table as `k,dt,epsilon,distance,ratio`.
pub fn write_gap_csv<W: Write>(out: &mut W, rows: &[GapRow]) -> Result<()> {
    writeln!(out, "k,dt,epsilon,distance,ratio")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.k, r.dt, r.epsilon, r.distance, r.ratio
        )?;
    }
    Ok(())
}

/// Binary control as `interval_index,t_start,t_end,active_mode,label`.
pub fn write_alpha_csv<W: Write>(
    out: &mut W,
    alpha: &BinaryControl,
    labels: &[String],
) -> Result<()> {
    if labels.len() != alpha.num_modes() {
        return Err(Error::InvalidControl(format!(
            "{} labels for {} modes",
            labels.len(),
            alpha.num_modes()
        )));
    }
    writeln!(out, "interval_index,t_start,t_end,active_mode,label")?;
    let grid = alpha.grid();
    for (k, &j) in alpha.active_modes().iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{j},{}",
            grid.level_time(k),
            grid.level_time(k + 1),
            labels[j]
        )?;
    }
    Ok(())
}

/// Scalar spatial profile sampled at cell centers, as `x,value`.
pub fn write_profile_csv<W: Write>(out: &mut W, sgrid: &SpaceGrid, values: &[f64]) -> Result<()> {
    if values.len() != sgrid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} samples for {} cells",
            values.len(),
            sgrid.n_cells()
        )));
    }
    writeln!(out, "x,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{v}", sgrid.center(i))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn atomic_write_creates_dirs_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.txt");
        write_atomic(&path, b"first").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"first");
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No stray temporaries survive next to the target.
        let siblings: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(siblings, vec![std::ffi::OsString::from("out.txt")]);
    }

    #[test]
    fn atomic_write_rejects_bare_root() {
        assert!(write_atomic(Path::new("/"), b"x").is_err());
    }

    #[test]
    fn json_writer_emits_trailing_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        write_json_atomic(&path, &vec![1, 2, 3]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(serde_json::from_str::<Vec<i32>>(&text).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn beta_csv_round_trips_bitwise() {
        let grid = TimeGrid::new(3.0, 5).unwrap();
        let third = 1.0 / 3.0;
        let values = Array2::from_shape_vec(
            (5, 3),
            vec![
                third, third, third, //
                0.1, 0.2, 0.7, //
                1.0, 0.0, 0.0, //
                0.25, 0.5, 0.25, //
                1e-9, 0.5, 0.5 - 1e-9,
            ],
        )
        .unwrap();
        let beta = RelaxedControl::new(grid, values.clone()).unwrap();
        let bytes = render(|b| write_beta_csv(b, &beta)).unwrap();
        let back = read_beta_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert!(back.grid().same_as(beta.grid()));
        assert_eq!(back.values(), &values);
    }

    #[test]
    fn single_interval_beta_round_trips() {
        let grid = TimeGrid::new(0.7, 1).unwrap();
        let beta = RelaxedControl::constant(grid, &[0.5, 0.5]).unwrap();
        let bytes = render(|b| write_beta_csv(b, &beta)).unwrap();
        let back = read_beta_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert!(back.grid().same_as(beta.grid()));
        assert_eq!(back.values(), beta.values());
    }

    #[test]
    fn beta_reader_rejects_malformed_input() {
        // Wrong header name.
        assert!(read_beta_csv("index,t_start,t_end,beta_1\n0,0,1,1").is_err());
        // Mislabeled weight column.
        assert!(read_beta_csv("interval_index,t_start,t_end,beta_2\n0,0,1,1").is_err());
        // Out-of-order interval index.
        assert!(read_beta_csv(
            "interval_index,t_start,t_end,beta_1,beta_2\n1,0,1,0.5,0.5"
        )
        .is_err());
        // Row off the simplex.
        assert!(read_beta_csv(
            "interval_index,t_start,t_end,beta_1,beta_2\n0,0,1,0.5,0.4"
        )
        .is_err());
        // Non-uniform spacing.
        let text = "interval_index,t_start,t_end,beta_1,beta_2\n\
                    0,0,0.4,1,0\n1,0.4,1.0,0,1";
        assert!(read_beta_csv(text).is_err());
        // No rows at all.
        assert!(read_beta_csv("interval_index,t_start,t_end,beta_1\n").is_err());
    }

    #[test]
    fn table_headers_are_pinned() {
        let log = render(|b| write_iteration_log_csv(b, &[])).unwrap();
        assert_eq!(std::str::from_utf8(&log).unwrap(), "iter,J,step_size,pg_norm\n");
        let study = render(|b| write_study_csv(b, &[])).unwrap();
        assert_eq!(
            std::str::from_utf8(&study).unwrap(),
            "k,dt,epsilon,J_v,abs_gap,rel_gap\n"
        );
        let gap = render(|b| write_gap_csv(b, &[])).unwrap();
        assert_eq!(
            std::str::from_utf8(&gap).unwrap(),
            "k,dt,epsilon,distance,ratio\n"
        );
    }

    #[test]
    fn study_rows_render_in_order() {
        let rows = vec![
            RelaxRow {
                k: 1,
                dt: 1.0,
                epsilon: 0.5,
                j_v: 0.467,
                abs_gap: 0.381,
                rel_gap: 4.43,
            },
            RelaxRow {
                k: 2,
                dt: 0.5,
                epsilon: 0.25,
                j_v: 0.396,
                abs_gap: 0.31,
                rel_gap: 3.6,
            },
        ];
        let bytes = render(|b| write_study_csv(b, &rows)).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("1,1,0.5,0.467"));
        assert!(text.lines().nth(2).unwrap().starts_with("2,0.5,0.25,0.396"));
    }

    #[test]
    fn alpha_csv_lists_modes_and_labels() {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let alpha = BinaryControl::new(grid, vec![0, 1, 0], 2).unwrap();
        let labels = vec!["flux+".to_string(), "flux-".to_string()];
        let bytes = render(|b| write_alpha_csv(b, &alpha, &labels)).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "interval_index,t_start,t_end,active_mode,label");
        assert!(lines[1].ends_with(",0,flux+"));
        assert!(lines[2].ends_with(",1,flux-"));
        assert_eq!(lines.len(), 4);

        let short = vec!["only".to_string()];
        assert!(render(|b| write_alpha_csv(b, &alpha, &short)).is_err());
    }

    #[test]
    fn profile_csv_checks_length() {
        let sgrid = SpaceGrid::new(2.0, 4).unwrap();
        let bytes = render(|b| write_profile_csv(b, &sgrid, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,value");
        assert!(text.contains("0.25,1"));
        assert!(text.contains("1.75,4"));
        assert!(render(|b| write_profile_csv(b, &sgrid, &[1.0])).is_err());
    }
}
