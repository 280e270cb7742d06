//! CSV dump of nodal fields: columns theta, phi, value (radians), row-major
//! over (latitude, longitude). Values use the shortest round-trip decimal
//! form, so reading back is bit-exact.

use std::io::{Read, Write};
use std::sync::Arc;

use super::grid::{ScalarField, SphereGrid};
use crate::error::{Error, Result};

pub fn write_field_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "phi", "value"])?;
    let n_phi = grid.n_phi();
    for (i, v) in field.values().iter().enumerate() {
        let t = grid.theta()[i / n_phi];
        let p = grid.phi()[i % n_phi];
        w.write_record([t.to_string(), p.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(input: R, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["theta", "phi", "value"] {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {headers:?}")));
    }
    let n_phi = grid.n_phi();
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("row {i}: missing column {k}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("row {i}: {e}")))
        };
        if i >= grid.len() {
            return Err(Error::InvalidArgument("more rows than grid nodes".into()));
        }
        let (t, p) = (parse(0)?, parse(1)?);
        if (t - grid.theta()[i / n_phi]).abs() > 1e-12 || (p - grid.phi()[i % n_phi]).abs() > 1e-12 {
            return Err(Error::GridMismatch);
        }
        values.push(parse(2)?);
    }
    ScalarField::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_grid;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = build_grid(6, 12, 5).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p.x() * 3.1).sin() / 7.0 + p.z().exp() * 1e-17);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let back = read_field_csv(buf.as_slice(), &g).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_grid() {
        let g = build_grid(6, 12, 5).unwrap();
        let other = build_grid(7, 12, 5).unwrap();
        let f = ScalarField::constant(&g, 1.0);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        assert!(read_field_csv(buf.as_slice(), &other).is_err());
    }
}
