//! Field dumps in the `STRATO1` format: one ASCII header line
//! `STRATO1 nx ny nz nfields time`, then `nfields` blocks of little-endian
//! `f64` in z-major, y, x order.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{ScalarField, SlabGrid, VectorField};
use crate::hydrostatics::HydrostaticProfile;
use crate::state::{AnelasticState, PrimitiveState};

pub const MAGIC: &str = "STRATO1";
pub const PRIMITIVE_FIELDS: [&str; 6] = ["rho", "mom1", "mom2", "mom3", "rhoTheta", "rho_tilde"];
pub const ANELASTIC_FIELDS: [&str; 5] = ["v1", "v2", "v3", "T_pert", "Pi"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub grid: SlabGrid,
    pub time: f64,
    pub fields: Vec<ScalarField>,
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        let g = self.grid;
        writeln!(w, "{MAGIC} {} {} {} {} {:e}", g.nx, g.ny, g.nz, self.fields.len(), self.time)?;
        let mut buf = Vec::with_capacity(g.len() * 8);
        for f in &self.fields {
            buf.clear();
            for v in f.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn read_from(r: impl Read) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != MAGIC {
            return Err(CheckpointError::BadHeader(line.trim_end().to_string()));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CheckpointError::BadHeader(line.trim_end().to_string()))
        };
        let (nx, ny, nz, nf) = (num(parts[1])?, num(parts[2])?, num(parts[3])?, num(parts[4])?);
        let time: f64 = parts[5]
            .parse()
            .map_err(|_| CheckpointError::BadHeader(line.trim_end().to_string()))?;
        let grid = SlabGrid::new(nx, ny, nz).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
        let mut bytes = vec![0u8; grid.len() * 8];
        let mut fields = Vec::with_capacity(nf);
        for _ in 0..nf {
            r.read_exact(&mut bytes)?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            fields.push(ScalarField::from_shape_vec(grid.shape(), data).unwrap());
        }
        Ok(Checkpoint { grid, time, fields })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(std::fs::File::open(path)?)
    }

    pub fn from_primitive(s: &PrimitiveState, profile: &HydrostaticProfile) -> Self {
        let [m1, m2, m3] = s.mom.c.clone();
        Checkpoint {
            grid: s.grid(),
            time: s.time,
            fields: vec![s.rho.clone(), m1, m2, m3, s.rho_theta.clone(), profile.rho_tilde_field()],
        }
    }

    pub fn from_anelastic(s: &AnelasticState) -> Self {
        let [v1, v2, v3] = s.v.c.clone();
        Checkpoint {
            grid: SlabGrid {
                nx: s.t_pert.dim().2,
                ny: s.t_pert.dim().1,
                nz: s.t_pert.dim().0,
            },
            time: s.time,
            fields: vec![v1, v2, v3, s.t_pert.clone(), s.pi.clone()],
        }
    }

    /// The auxiliary `rho_tilde` block is optional on read.
    pub fn to_primitive(&self) -> Result<PrimitiveState, CheckpointError> {
        if self.fields.len() != 5 && self.fields.len() != 6 {
            return Err(CheckpointError::FieldCount {
                expected: 6,
                found: self.fields.len(),
            });
        }
        let f = &self.fields;
        Ok(PrimitiveState {
            rho: f[0].clone(),
            mom: VectorField::new(f[1].clone(), f[2].clone(), f[3].clone()),
            rho_theta: f[4].clone(),
            time: self.time,
        })
    }

    pub fn to_anelastic(&self) -> Result<AnelasticState, CheckpointError> {
        if self.fields.len() != 5 {
            return Err(CheckpointError::FieldCount {
                expected: 5,
                found: self.fields.len(),
            });
        }
        let f = &self.fields;
        Ok(AnelasticState {
            v: VectorField::new(f[0].clone(), f[1].clone(), f[2].clone()),
            t_pert: f[3].clone(),
            pi: f[4].clone(),
            time: self.time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydrostatics::solve_hydrostatic;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = SlabGrid::new(4, 6, 4).unwrap();
        let prof = solve_hydrostatic(2.0, 1.0, 1.0, g).unwrap();
        let mut s = PrimitiveState::equilibrium(&prof);
        s.time = 0.1 + 0.2;
        s.mom.c[2] = g.sample(|x, y, z| (x * 7.1).sin() * y.exp() / (z + 1e-3));
        s.rho_theta[[1, 2, 3]] = -0.0;
        let cp = Checkpoint::from_primitive(&s, &prof);
        let mut bytes = Vec::new();
        cp.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.time.to_bits(), s.time.to_bits());
        for (a, b) in cp.fields.iter().zip(&back.fields) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.to_primitive().unwrap(), s);
        assert!(back.to_anelastic().is_err());
    }

    #[test]
    fn header_is_checked() {
        assert!(matches!(
            Checkpoint::read_from("STRATO2 4 4 4 1 0\n".as_bytes()),
            Err(CheckpointError::BadHeader(_))
        ));
        assert!(Checkpoint::read_from("STRATO1 4 4 4 1 0\n".as_bytes()).is_err());
    }
}
