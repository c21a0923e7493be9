//! Binary layouts (little endian) and CSV helpers.
//!
//! * field: `nx: u64, dx: f64, x_min: f64`, then `nx` values.
//! * space-time field: the field header followed by `levels: u64, dt: f64`,
//!   then `levels·nx` values, level by level.
//! * measure sample: `kind: u8, params: [f64; 3], seed: u64`, grid
//!   `x_min: f64, x_max: f64, nx: u64, t_max: f64, nt: u64`, `count: u64`,
//!   then `count` cell values.

use smpde_core::measure::MeasureKind;
use smpde_core::{Field, GridSpec, MeasureSample, SpaceTimeField};

use crate::error::CliError;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, at: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], CliError> {
        let end = self.at + N;
        let chunk = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| CliError::Format(format!("truncated input at byte {}", self.at)))?;
        self.at = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take::<1>()?[0])
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>, CliError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn finish(&self) -> Result<(), CliError> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(CliError::Format(format!("{} trailing bytes", self.bytes.len() - self.at)))
        }
    }
}

fn count(v: u64) -> Result<usize, CliError> {
    usize::try_from(v).map_err(|_| CliError::Format(format!("count {v} too large")))
}

pub fn field_to_bytes(f: &Field) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(24 + 8 * g.nx);
    put_u64(&mut out, g.nx as u64);
    put_f64(&mut out, g.dx());
    put_f64(&mut out, g.x_min);
    f.values().iter().for_each(|v| put_f64(&mut out, *v));
    out
}

/// Values with their `(dx, x_min)` header.
pub fn field_from_bytes(bytes: &[u8]) -> Result<(f64, f64, Vec<f64>), CliError> {
    let mut r = Reader::new(bytes);
    let nx = count(r.u64()?)?;
    let (dx, x_min) = (r.f64()?, r.f64()?);
    let values = r.values(nx)?;
    r.finish()?;
    Ok((dx, x_min, values))
}

pub fn space_time_to_bytes(u: &SpaceTimeField) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(40 + 8 * u.as_flat().len());
    put_u64(&mut out, g.nx as u64);
    put_f64(&mut out, g.dx());
    put_f64(&mut out, g.x_min);
    put_u64(&mut out, u.levels() as u64);
    put_f64(&mut out, g.dt());
    u.as_flat().iter().for_each(|v| put_f64(&mut out, *v));
    out
}

/// Rebuilds the field on `grid`, checking the header against it.
pub fn space_time_from_bytes(bytes: &[u8], grid: GridSpec) -> Result<SpaceTimeField, CliError> {
    let mut r = Reader::new(bytes);
    let nx = count(r.u64()?)?;
    let (dx, x_min) = (r.f64()?, r.f64()?);
    let levels = count(r.u64()?)?;
    let dt = r.f64()?;
    if nx != grid.nx || levels != grid.nt + 1 || dx != grid.dx() || x_min != grid.x_min || dt != grid.dt() {
        return Err(CliError::Format("space-time header does not match the grid".into()));
    }
    let values = r.values(nx * levels)?;
    r.finish()?;
    Ok(SpaceTimeField::from_flat(grid, values)?)
}

pub fn measure_to_bytes(s: &MeasureSample) -> Vec<u8> {
    let g = s.grid();
    let mut out = Vec::with_capacity(81 + 8 * g.nx);
    out.push(s.kind().tag());
    s.kind().params().iter().for_each(|p| put_f64(&mut out, *p));
    put_u64(&mut out, s.seed());
    put_f64(&mut out, g.x_min);
    put_f64(&mut out, g.x_max);
    put_u64(&mut out, g.nx as u64);
    put_f64(&mut out, g.t_max);
    put_u64(&mut out, g.nt as u64);
    put_u64(&mut out, s.increments().len() as u64);
    s.increments().iter().for_each(|v| put_f64(&mut out, *v));
    out
}

pub fn measure_from_bytes(bytes: &[u8]) -> Result<MeasureSample, CliError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let params = [r.f64()?, r.f64()?, r.f64()?];
    let kind = MeasureKind::from_tag(tag, params)?;
    let seed = r.u64()?;
    let (x_min, x_max) = (r.f64()?, r.f64()?);
    let nx = count(r.u64()?)?;
    let t_max = r.f64()?;
    let nt = count(r.u64()?)?;
    let grid = GridSpec::new(x_min, x_max, nx, t_max, nt)?;
    let n = count(r.u64()?)?;
    let increments = r.values(n)?;
    r.finish()?;
    Ok(MeasureSample::from_parts(grid, kind, seed, increments)?)
}

/// CSV with a header row; values use the shortest round-trip representation.
pub fn csv_bytes<R: serde::Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Format(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Format(e.to_string()))
}

pub fn field_csv(f: &Field) -> Result<Vec<u8>, CliError> {
    let xs = f.grid().x_centers();
    csv_bytes(&["x", "value"], xs.into_iter().zip(f.values().iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smpde_core::measure::{sample_alpha_stable, sample_weighted_wiener, WeightSpec};

    fn grid() -> GridSpec {
        GridSpec::new(-2.0, 2.0, 32, 0.5, 4).unwrap()
    }

    #[test]
    fn measure_round_trip_is_bit_exact() {
        let g = grid();
        for s in [
            sample_weighted_wiener(&g, WeightSpec::Gaussian { amplitude: 0.5, rate: 2.0 }, 11).unwrap(),
            sample_alpha_stable(&g, 1.5, 3).unwrap(),
        ] {
            let bytes = measure_to_bytes(&s);
            let back = measure_from_bytes(&bytes).unwrap();
            assert_eq!(back, s);
            assert_eq!(measure_to_bytes(&back), bytes);
        }
        let bytes = measure_to_bytes(&sample_alpha_stable(&g, 1.5, 3).unwrap());
        assert!(measure_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn measure_round_trip_any_sample(alpha in 0.2f64..2.0, seed: u64, nx in 4usize..64, nt in 1usize..8) {
            let g = GridSpec::new(-1.0, 1.0, nx, 0.25, nt).unwrap();
            let s = sample_alpha_stable(&g, alpha, seed).unwrap();
            let back = measure_from_bytes(&measure_to_bytes(&s)).unwrap();
            proptest::prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn field_layouts() {
        let g = grid();
        let f = Field::from_fn(g, 0.0, |x| x * x).unwrap();
        let bytes = field_to_bytes(&f);
        assert_eq!(bytes.len(), 24 + 8 * 32);
        let (dx, x_min, values) = field_from_bytes(&bytes).unwrap();
        assert_eq!((dx, x_min), (g.dx(), -2.0));
        assert_eq!(values, f.values());
        let rows: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64; 32]).collect();
        let u = SpaceTimeField::from_rows(g, rows).unwrap();
        let back = space_time_from_bytes(&space_time_to_bytes(&u), g).unwrap();
        assert_eq!(back, u);
        assert!(space_time_from_bytes(&space_time_to_bytes(&u), g.with_time(1.0, 4).unwrap()).is_err());
    }

    #[test]
    fn csv_has_header() {
        let text = String::from_utf8(field_csv(&Field::from_fn(grid(), 0.0, |x| x).unwrap()).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,value"));
        assert_eq!(lines.next(), Some("-1.9375,-1.9375"));
        assert_eq!(text.lines().count(), 33);
    }
}
