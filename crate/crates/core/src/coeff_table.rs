//! Offline tabulation of `psi` over a `(Pe1, Pe2)` grid with fast bilinear
//! lookup, so assembly never pays for the mode sum per element.
//!
//! Tables are persisted in a little-endian binary layout with a magic tag,
//! version and trailing CRC32, making round trips bit-exact across platforms.

use crate::par;
use crate::stabilization::{self, PecletPair, StabilizationError, Truncation, PE_GUARD};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"VMST";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("range [{min}, {max}] is not an integer number of steps of {step}")]
    RangeStepMismatch { min: f64, max: f64, step: f64 },
    #[error("range bound {bound} outside the supported [-{PE_GUARD}, {PE_GUARD}]")]
    RangeOutOfBounds { bound: f64 },
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error(transparent)]
    Stabilization(#[from] StabilizationError),
    #[error("table value at ({pe1}, {pe2}) is not finite and positive")]
    BadValue { pe1: f64, pe2: f64 },
    #[error("symmetry self-check failed at ({pe1}, {pe2}): {lhs} vs {rhs}")]
    SymmetryCheck { pe1: f64, pe2: f64, lhs: f64, rhs: f64 },
    #[error("not a stabilization table (bad magic)")]
    BadMagic,
    #[error("unsupported table version {0}")]
    BadVersion(u32),
    #[error("file truncated or trailing garbage")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rectangular grid of `psi` samples over `(Pe1, Pe2)`.
///
/// `values` is row-major with `Pe2` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct StabTable {
    pub pe1_min: f64,
    pub pe1_max: f64,
    pub pe2_min: f64,
    pub pe2_max: f64,
    pub step: f64,
    pub truncation: Truncation,
    pub n1: usize,
    pub n2: usize,
    values: Vec<f64>,
}

fn axis_count(min: f64, max: f64, step: f64) -> Result<usize, TableError> {
    if step <= 0.0 {
        return Err(TableError::NonPositiveStep(step));
    }
    for bound in [min, max] {
        if bound.abs() > PE_GUARD {
            return Err(TableError::RangeOutOfBounds { bound });
        }
    }
    let cells = (max - min) / step;
    let rounded = cells.round();
    if max <= min || rounded < 1.0 || (cells - rounded).abs() > 1e-9 {
        return Err(TableError::RangeStepMismatch { min, max, step });
    }
    Ok(rounded as usize + 1)
}

/// Evaluates `psi` at every grid node. Nodes are independent and computed in
/// parallel; placement is by index, so contents are deterministic.
pub fn build_table(
    pe1_range: (f64, f64),
    pe2_range: (f64, f64),
    step: f64,
    tr: Truncation,
) -> Result<StabTable, TableError> {
    let n1 = axis_count(pe1_range.0, pe1_range.1, step)?;
    let n2 = axis_count(pe2_range.0, pe2_range.1, step)?;
    let node = |i1: usize, i2: usize| {
        (
            pe1_range.0 + i1 as f64 * step,
            pe2_range.0 + i2 as f64 * step,
        )
    };
    let raw = par::map_indexed(n1 * n2, |idx| {
        let (pe1, pe2) = node(idx / n2, idx % n2);
        stabilization::psi(PecletPair::new(pe1, pe2), tr)
    });
    let mut values = Vec::with_capacity(n1 * n2);
    for (idx, r) in raw.into_iter().enumerate() {
        let v = r?;
        if !(v.is_finite() && v > 0.0) {
            let (pe1, pe2) = node(idx / n2, idx % n2);
            return Err(TableError::BadValue { pe1, pe2 });
        }
        values.push(v);
    }
    let table = StabTable {
        pe1_min: pe1_range.0,
        pe1_max: pe1_range.1,
        pe2_min: pe2_range.0,
        pe2_max: pe2_range.1,
        step,
        truncation: tr,
        n1,
        n2,
        values,
    };
    table.symmetry_self_check()?;
    Ok(table)
}

impl StabTable {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_value(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.n2 + i2]
    }

    /// For grid nodes whose point reflection is also a grid node, checks
    /// `psi(P1, P2) = psi(-P1, -P2)` to `1e-10` relative.
    fn symmetry_self_check(&self) -> Result<(), TableError> {
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let pe1 = self.pe1_min + i1 as f64 * self.step;
                let pe2 = self.pe2_min + i2 as f64 * self.step;
                let m1 = (-pe1 - self.pe1_min) / self.step;
                let m2 = (-pe2 - self.pe2_min) / self.step;
                let (r1, r2) = (m1.round(), m2.round());
                if (m1 - r1).abs() > 1e-9 || (m2 - r2).abs() > 1e-9 {
                    continue;
                }
                if r1 < 0.0 || r2 < 0.0 || r1 as usize >= self.n1 || r2 as usize >= self.n2 {
                    continue;
                }
                let lhs = self.node_value(i1, i2);
                let rhs = self.node_value(r1 as usize, r2 as usize);
                if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(rhs.abs()) {
                    return Err(TableError::SymmetryCheck { pe1, pe2, lhs, rhs });
                }
            }
        }
        Ok(())
    }

    pub fn in_range(&self, pe: PecletPair) -> bool {
        pe.pe1 >= self.pe1_min
            && pe.pe1 <= self.pe1_max
            && pe.pe2 >= self.pe2_min
            && pe.pe2 <= self.pe2_max
    }

    /// Bilinear interpolation on the enclosing cell; grid nodes reproduce
    /// stored values exactly. Outside the table range falls back to direct
    /// `psi` evaluation with the table's truncation.
    pub fn query(&self, pe: PecletPair) -> Result<f64, StabilizationError> {
        if !self.in_range(pe) {
            return stabilization::psi(pe, self.truncation);
        }
        let locate = |v: f64, min: f64, n: usize| {
            let t = (v - min) / self.step;
            let i = (t.floor() as usize).min(n - 2);
            (i, t - i as f64)
        };
        let (i1, t1) = locate(pe.pe1, self.pe1_min, self.n1);
        let (i2, t2) = locate(pe.pe2, self.pe2_min, self.n2);
        let v00 = self.node_value(i1, i2);
        let v01 = self.node_value(i1, i2 + 1);
        let v10 = self.node_value(i1 + 1, i2);
        let v11 = self.node_value(i1 + 1, i2 + 1);
        Ok(v00 * (1.0 - t1) * (1.0 - t2)
            + v01 * (1.0 - t1) * t2
            + v10 * t1 * (1.0 - t2)
            + v11 * t1 * t2)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), TableError> {
        let mut w = BufWriter::new(File::create(path)?);
        let mut hasher = crc32fast::Hasher::new();
        let mut put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<(), TableError> {
            hasher.update(bytes);
            w.write_all(bytes)?;
            Ok(())
        };
        put(&mut w, &MAGIC)?;
        put(&mut w, &VERSION.to_le_bytes())?;
        for f in [self.pe1_min, self.pe1_max, self.pe2_min, self.pe2_max, self.step] {
            put(&mut w, &f.to_le_bytes())?;
        }
        for u in [
            self.truncation.m1,
            self.truncation.m2,
            self.n1 as u32,
            self.n2 as u32,
        ] {
            put(&mut w, &u.to_le_bytes())?;
        }
        for v in &self.values {
            put(&mut w, &v.to_le_bytes())?;
        }
        let crc = hasher.finalize();
        w.write_all(&crc.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, TableError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        // header through n2, before the value block
        const HEAD: usize = 4 + 4 + 5 * 8 + 4 * 4;
        if data.len() < HEAD + 4 {
            return Err(TableError::Truncated);
        }
        let (body, tail) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(TableError::ChecksumMismatch { stored, computed });
        }
        fn take<'a>(body: &'a [u8], pos: &mut usize, n: usize) -> &'a [u8] {
            let s = &body[*pos..*pos + n];
            *pos += n;
            s
        }
        let mut pos = 0usize;
        if take(body, &mut pos, 4) != MAGIC {
            return Err(TableError::BadMagic);
        }
        let version = u32::from_le_bytes(take(body, &mut pos, 4).try_into().unwrap());
        if version != VERSION {
            return Err(TableError::BadVersion(version));
        }
        let f64_at =
            |pos: &mut usize| f64::from_le_bytes(take(body, pos, 8).try_into().unwrap());
        let pe1_min = f64_at(&mut pos);
        let pe1_max = f64_at(&mut pos);
        let pe2_min = f64_at(&mut pos);
        let pe2_max = f64_at(&mut pos);
        let step = f64_at(&mut pos);
        let u32_at =
            |pos: &mut usize| u32::from_le_bytes(take(body, pos, 4).try_into().unwrap());
        let m1 = u32_at(&mut pos);
        let m2 = u32_at(&mut pos);
        let n1 = u32_at(&mut pos) as usize;
        let n2 = u32_at(&mut pos) as usize;
        if body.len() != HEAD + n1 * n2 * 8 {
            return Err(TableError::Truncated);
        }
        let values: Vec<f64> = body[HEAD..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(StabTable {
            pe1_min,
            pe1_max,
            pe2_min,
            pe2_max,
            step,
            truncation: Truncation::new(m1, m2),
            n1,
            n2,
            values,
        })
    }

    /// CSV export, header `pe1,pe2,psi`, one row per grid node.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<(), TableError> {
        writeln!(w, "pe1,pe2,psi")?;
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let pe1 = self.pe1_min + i1 as f64 * self.step;
                let pe2 = self.pe2_min + i2 as f64 * self.step;
                writeln!(w, "{:.16e},{:.16e},{:.16e}", pe1, pe2, self.node_value(i1, i2))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_table(step: f64, tr: Truncation) -> StabTable {
        build_table((-2.0, 2.0), (-2.0, 2.0), step, tr).unwrap()
    }

    #[test]
    fn build_counts_and_center() {
        let tr = Truncation::square(6);
        let t = build_table((-1.0, 1.0), (-1.0, 1.0), 1.0, tr).unwrap();
        assert_eq!((t.n1, t.n2), (3, 3));
        assert_eq!(t.values().len(), 9);
        let direct = stabilization::psi(PecletPair::new(0.0, 0.0), tr).unwrap();
        assert_eq!(t.node_value(1, 1), direct);
    }

    #[test]
    fn build_rejects_bad_ranges() {
        let tr = Truncation::square(2);
        assert!(matches!(
            build_table((-1.0, 1.1), (-1.0, 1.0), 0.25, tr),
            Err(TableError::RangeStepMismatch { .. })
        ));
        assert!(matches!(
            build_table((-1.0, 1.0), (-1.0, 1.0), 0.0, tr),
            Err(TableError::NonPositiveStep(_))
        ));
        assert!(matches!(
            build_table((-61.0, 0.0), (-1.0, 1.0), 1.0, tr),
            Err(TableError::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn node_queries_are_exact() {
        let tr = Truncation::square(8);
        let t = small_table(0.5, tr);
        for i1 in 0..t.n1 {
            for i2 in 0..t.n2 {
                let pe = PecletPair::new(-2.0 + i1 as f64 * 0.5, -2.0 + i2 as f64 * 0.5);
                assert_eq!(t.query(pe).unwrap(), t.node_value(i1, i2));
            }
        }
    }

    #[test]
    fn query_is_the_bilinear_blend() {
        let tr = Truncation::square(4);
        let t = small_table(1.0, tr);
        // hand-blend inside the cell [0,1]x[0,1] at (0.25, 0.75)
        let (i1, i2) = (2, 2); // node (0,0)
        let v00 = t.node_value(i1, i2);
        let v01 = t.node_value(i1, i2 + 1);
        let v10 = t.node_value(i1 + 1, i2);
        let v11 = t.node_value(i1 + 1, i2 + 1);
        let expect = v00 * 0.75 * 0.25 + v01 * 0.75 * 0.75 + v10 * 0.25 * 0.25 + v11 * 0.25 * 0.75;
        let got = t.query(PecletPair::new(0.25, 0.75)).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-14);
    }

    #[test]
    fn out_of_range_falls_back_to_direct_psi() {
        let tr = Truncation::square(8);
        let t = small_table(0.5, tr);
        let pe = PecletPair::new(3.5, -0.25);
        assert_eq!(
            t.query(pe).unwrap(),
            stabilization::psi(pe, tr).unwrap()
        );
        assert!(t.query(PecletPair::new(61.0, 0.0)).is_err());
    }

    #[test]
    fn interpolation_error_and_convergence_order() {
        let tr = Truncation::square(40);
        let coarse = build_table((-4.0, 4.0), (-4.0, 4.0), 0.25, tr).unwrap();
        let fine = build_table((-4.0, 4.0), (-4.0, 4.0), 0.125, tr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut max_c: f64 = 0.0;
        let mut max_f: f64 = 0.0;
        for _ in 0..300 {
            let pe = PecletPair::new(rng.gen_range(-3.9..3.9), rng.gen_range(-3.9..3.9));
            let direct = stabilization::psi(pe, tr).unwrap();
            max_c = max_c.max(((coarse.query(pe).unwrap() - direct) / direct).abs());
            max_f = max_f.max(((fine.query(pe).unwrap() - direct) / direct).abs());
        }
        let factor = max_c / max_f;
        assert!(
            (3.0..=5.0).contains(&factor),
            "bilinear convergence factor {factor} (coarse {max_c:.3e}, fine {max_f:.3e})"
        );
        assert!(max_f < 5e-4, "fine-step interpolation error {max_f:.3e}");
    }

    #[test]
    fn save_load_round_trip_and_corruption() {
        let tr = Truncation::square(6);
        let t = small_table(0.5, tr);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.vmst");
        t.save(&path).unwrap();
        let back = StabTable::load(&path).unwrap();
        assert_eq!(t, back);

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let bad = dir.path().join("bad.vmst");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(
            StabTable::load(&bad),
            Err(TableError::ChecksumMismatch { .. })
        ));

        let short = dir.path().join("short.vmst");
        std::fs::write(&short, &bytes[..10]).unwrap();
        assert!(matches!(StabTable::load(&short), Err(TableError::Truncated)));
    }

    #[test]
    fn csv_export_rows() {
        let tr = Truncation::square(3);
        let t = build_table((-1.0, 1.0), (-1.0, 1.0), 1.0, tr).unwrap();
        let mut buf = Vec::new();
        t.export_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "pe1,pe2,psi");
        assert_eq!(lines.count(), 9);
    }

    #[test]
    fn symmetric_grid_passes_self_check() {
        // build_table already runs the check; also assert the relation here
        let tr = Truncation::square(10);
        let t = small_table(0.5, tr);
        for i1 in 0..t.n1 {
            for i2 in 0..t.n2 {
                let lhs = t.node_value(i1, i2);
                let rhs = t.node_value(t.n1 - 1 - i1, t.n2 - 1 - i2);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn query_throughput() {
        let tr = Truncation::square(4);
        let t = small_table(0.25, tr);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let pts: Vec<PecletPair> = (0..1_000_000)
            .map(|_| PecletPair::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let start = std::time::Instant::now();
        let mut acc = 0.0;
        for pe in &pts {
            acc += t.query(*pe).unwrap();
        }
        let elapsed = start.elapsed();
        assert!(acc.is_finite());
        assert!(
            elapsed.as_secs_f64() < 1.0,
            "1e6 queries took {:?}",
            elapsed
        );
    }

    #[test]
    fn concurrent_queries_match_serial() {
        let tr = Truncation::square(6);
        let t = std::sync::Arc::new(small_table(0.5, tr));
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let pts: Vec<PecletPair> = (0..4000)
            .map(|_| PecletPair::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let serial: Vec<f64> = pts.iter().map(|pe| t.query(*pe).unwrap()).collect();
        let mut handles = Vec::new();
        for chunk in 0..4 {
            let t = t.clone();
            let pts = pts.clone();
            handles.push(std::thread::spawn(move || {
                pts[chunk * 1000..(chunk + 1) * 1000]
                    .iter()
                    .map(|pe| t.query(*pe).unwrap())
                    .collect::<Vec<f64>>()
            }));
        }
        let mut threaded = Vec::new();
        for h in handles {
            threaded.extend(h.join().unwrap());
        }
        assert_eq!(serial, threaded);
    }
}
