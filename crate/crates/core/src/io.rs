//! Profile files: a two-column `x,h` CSV plus a JSON sidecar describing
//! where the heights came from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RheoParams;
use crate::real::Real;
use crate::solver::{resample_linear, Grid, HeightProfile, Provenance};

/// JSON sidecar written next to every profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub n: f64,
    pub nx: usize,
    pub wall_touch_time: f64,
    pub provenance: Provenance,
}

/// Sidecar path for a profile CSV: `foo.csv` -> `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_profile_csv<T: Real>(path: &Path, h: &[T]) -> Result<()> {
    let grid = Grid::<T>::new(h.len())?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["x", "h"]).map_err(csv_err)?;
    for (i, v) in h.iter().enumerate() {
        w.write_record([grid.x(i).to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` (CSV) and its JSON sidecar.
pub fn write_profile<T: Real>(path: &Path, profile: &HeightProfile<T>) -> Result<()> {
    write_profile_csv(path, &profile.h)?;
    let meta = ProfileMeta {
        b: profile.params.b.as_f64(),
        s: profile.params.s.as_f64(),
        n: profile.params.n.as_f64(),
        nx: profile.h.len(),
        wall_touch_time: profile.t.as_f64(),
        provenance: profile.provenance,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Reads an `x,h` CSV. `x` must be strictly increasing.
pub fn read_xy_csv<T: Real>(path: &Path) -> Result<(Vec<T>, Vec<T>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column '{name}'", path.display())))
    };
    let (ix, ih) = (col("x")?, col("h")?);
    let mut xs = Vec::new();
    let mut hs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |k: usize| -> Result<T> {
            rec.get(k)
                .and_then(|s| s.parse::<T>().ok())
                .ok_or_else(|| Error::Parse(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        xs.push(parse(ix)?);
        hs.push(parse(ih)?);
    }
    if xs.len() < 2 {
        return Err(Error::Parse(format!("{}: need at least two rows", path.display())));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parse(format!(
            "{}: x must be strictly increasing",
            path.display()
        )));
    }
    Ok((xs, hs))
}

pub fn read_meta(csv: &Path) -> Result<Option<ProfileMeta>> {
    let p = sidecar_path(csv);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
}

/// Reads a profile written by [`write_profile`]. Without a sidecar the
/// profile is tagged as observed with `params` left at zero.
pub fn read_profile<T: Real>(path: &Path) -> Result<HeightProfile<T>> {
    let (xs, hs) = read_xy_csv::<T>(path)?;
    let meta = read_meta(path)?;
    let h = if is_uniform_unit_grid(&xs) {
        hs
    } else {
        resample_to_uniform(&xs, &hs, xs.len())?
    };
    Ok(match meta {
        Some(m) => HeightProfile {
            h,
            t: T::lit(m.wall_touch_time),
            params: RheoParams::new(T::lit(m.b), T::lit(m.s), T::lit(m.n)),
            provenance: m.provenance,
        },
        None => HeightProfile {
            h,
            t: T::zero(),
            params: RheoParams::new(T::zero(), T::zero(), T::zero()),
            provenance: Provenance::Observed,
        },
    })
}

fn is_uniform_unit_grid<T: Real>(xs: &[T]) -> bool {
    let grid = match Grid::<T>::new(xs.len()) {
        Ok(g) => g,
        Err(_) => return false,
    };
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    xs.iter().enumerate().all(|(i, &x)| (x - grid.x(i)).abs() <= tol)
}

/// Linear interpolation of scattered `(x, h)` samples spanning `[0, 1]`
/// onto `nx` uniform nodes.
pub fn resample_to_uniform<T: Real>(xs: &[T], hs: &[T], nx: usize) -> Result<Vec<T>> {
    if xs.len() != hs.len() || xs.len() < 2 {
        return Err(Error::Shape("x and h must have the same length (>= 2)".into()));
    }
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    if (xs[0]).abs() > tol || (xs[xs.len() - 1] - T::one()).abs() > tol {
        return Err(Error::Parse(format!(
            "observation x must span [0, 1], got [{}, {}]",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    if is_uniform_unit_grid(xs) {
        return Ok(resample_linear(hs, nx));
    }
    let grid = Grid::<T>::new(nx)?;
    let mut j = 0;
    Ok((0..nx)
        .map(|i| {
            let x = grid.x(i);
            while j + 2 < xs.len() && xs[j + 1] < x {
                j += 1;
            }
            let (x0, x1) = (xs[j], xs[j + 1]);
            let w = ((x - x0) / (x1 - x0)).max(T::zero()).min(T::one());
            hs[j] * (T::one() - w) + hs[j + 1] * w
        })
        .collect())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> HeightProfile<f64> {
        HeightProfile {
            h: vec![2.5, 1.0 / 3.0, 0.1, 0.0, 1e-9],
            t: 0.123_456_789_012_345_6,
            params: RheoParams::new(12.5, 3.25, 1.0),
            provenance: Provenance::Pde,
        }
    }

    #[test]
    fn profile_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_profile(&path, &profile()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,h\n0,2.5\n0.25,"));
        let back: HeightProfile<f64> = read_profile(&path).unwrap();
        assert_eq!(back, profile());
        let meta = read_meta(&path).unwrap().unwrap();
        assert_eq!(meta.nx, 5);
        assert_eq!(meta.provenance, Provenance::Pde);
    }

    #[test]
    fn scattered_observation_is_resampled() {
        let xs = vec![0.0, 0.1, 0.5, 1.0];
        let hs = vec![1.0, 0.9, 0.5, 0.0];
        let r: Vec<f64> = resample_to_uniform(&xs, &hs, 5).unwrap();
        assert_eq!(r.len(), 5);
        assert!((r[1] - 0.75).abs() < 1e-12);
        assert!((r[4]).abs() < 1e-12);
        assert!(resample_to_uniform(&[0.1, 1.0], &[1.0, 0.0], 5).is_err());
    }

    #[test]
    fn rejects_bad_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,h\n0,1\n0.5,oops\n1,0\n").unwrap();
        assert!(matches!(read_xy_csv::<f64>(&path), Err(Error::Parse(_))));
        fs::write(&path, "x,h\n0,1\n0,2\n1,0\n").unwrap();
        assert!(read_xy_csv::<f64>(&path).is_err());
        fs::write(&path, "x,y\n0,1\n1,0\n").unwrap();
        assert!(read_xy_csv::<f64>(&path).is_err());
    }
}
