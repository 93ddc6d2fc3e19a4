//! File formats: trajectory CSV, the full-state binary dump, and the
//! reduced-model artifact container.
//!
//! The artifact container is a versioned binary file: an eight-byte magic
//! string, a format version, the mesh signature and configuration hash,
//! scalar metadata, and a list of named sections. Every section header
//! carries the payload kind and dimensions; numeric payloads are
//! little-endian 64-bit floats (or unsigned integers for index lists), so
//! a save/load round trip is bit-exact.

use crate::eim::CollateralBasis;
use crate::error::{Error, Result};
use crate::mesh::PseudoMesh;
use crate::params::{CellConfig, Electrode, ParameterPoint};
use crate::pod::BasisMatrix;
use crate::rom::{RomArtifact, RomTolerances};
use crate::state::Trajectory;
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};
use std::path::Path;

const ARTIFACT_MAGIC: &[u8; 8] = b"CELLROM1";
const ARTIFACT_VERSION: u32 = 1;
const STATE_DUMP_MAGIC: &[u8; 8] = b"CELLSTV1";
const BASIS_MAGIC: &[u8; 8] = b"CELLBAS1";

/// Render a trajectory as CSV with the discharge observables per step:
/// time, electrode states of charge, and the cell voltage in dimensionless
/// and volt units.
pub fn trajectory_csv(traj: &Trajectory, mesh: &PseudoMesh, config: &CellConfig) -> String {
    let mut out = String::from("tau,soc_cathode,soc_anode,e_dimless,e_volts\n");
    for s in &traj.states {
        let soc_cat = s.state_of_charge(mesh, Electrode::Cathode);
        let soc_an = s.state_of_charge(mesh, Electrode::Anode);
        let e = s.cell_voltage_dimless(mesh);
        let ev = s.cell_voltage_volts(mesh, config);
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            s.time, soc_cat, soc_an, e, ev
        ));
    }
    out
}

/// Binary dump of all states of a trajectory. Layout: magic, format
/// version (u32), mesh counts `n_per_region`/`n_micro` (u64), the four
/// component sizes (u64), the state count (u64), then per state the time
/// followed by the concatenated component data, all little-endian f64.
pub fn write_state_dump(
    path: &Path,
    traj: &Trajectory,
    mesh: &PseudoMesh,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(STATE_DUMP_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(mesh.n_per_region as u64).to_le_bytes());
    buf.extend_from_slice(&(mesh.n_micro as u64).to_le_bytes());
    for d in mesh.component_dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(traj.states.len() as u64).to_le_bytes());
    for s in &traj.states {
        buf.extend_from_slice(&s.time.to_le_bytes());
        for c in crate::mesh::Component::ALL {
            for v in s.fields.component(c) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

enum SectionPayload {
    Floats { rows: u64, cols: u64, data: Vec<f64> },
    Indices(Vec<u64>),
}

struct Writer {
    buf: Vec<u8>,
    n_sections: u64,
    sections_at: usize,
}

impl Writer {
    fn new() -> Self {
        Self {
            buf: Vec::new(),
            n_sections: 0,
            sections_at: 0,
        }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn begin_sections(&mut self) {
        self.sections_at = self.buf.len();
        self.u64(0);
    }

    fn section(&mut self, name: &str, payload: SectionPayload) {
        self.n_sections += 1;
        let name = name.as_bytes();
        self.buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(name);
        match payload {
            SectionPayload::Floats { rows, cols, data } => {
                self.buf.push(0);
                self.u64(rows);
                self.u64(cols);
                debug_assert_eq!(data.len() as u64, rows * cols);
                for v in data {
                    self.f64(v);
                }
            }
            SectionPayload::Indices(ix) => {
                self.buf.push(1);
                self.u64(ix.len() as u64);
                self.u64(1);
                for v in ix {
                    self.u64(v);
                }
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let n = self.n_sections;
        self.buf[self.sections_at..self.sections_at + 8].copy_from_slice(&n.to_le_bytes());
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Artifact("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn matrix_section(m: &DMatrix<f64>) -> SectionPayload {
    SectionPayload::Floats {
        rows: m.nrows() as u64,
        cols: m.ncols() as u64,
        data: m.as_slice().to_vec(),
    }
}

fn vector_section(v: &[f64]) -> SectionPayload {
    SectionPayload::Floats {
        rows: v.len() as u64,
        cols: 1,
        data: v.to_vec(),
    }
}

/// Serialize an artifact into the container format.
pub fn artifact_to_bytes(a: &RomArtifact) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(ARTIFACT_MAGIC);
    w.u32(ARTIFACT_VERSION);
    w.u64(a.mesh_n_per_region as u64);
    w.u64(a.mesh_n_micro as u64);
    for v in a.mesh_eta_x {
        w.f64(v);
    }
    w.u64(a.mesh_signature);
    w.u64(a.config_hash);
    w.f64(a.train_dtau);
    w.f64(a.tolerances.eps_rb);
    w.f64(a.tolerances.eps_collateral);
    w.f64(a.tolerances.omega);
    for v in a.point_conditions {
        w.f64(v);
    }
    w.u64(a.train_set.len() as u64);
    for mu in &a.train_set {
        w.f64(mu.c_rate);
        w.f64(mu.d_scale);
        w.f64(mu.l_scale);
    }
    w.begin_sections();
    for k in 0..4 {
        w.section(&format!("rb{k}"), matrix_section(&a.reduced_bases[k].modes));
        w.section(
            &format!("rb{k}_sv"),
            vector_section(&a.reduced_bases[k].singular_values),
        );
        w.section(
            &format!("cb{k}"),
            matrix_section(&a.collateral.bases[k].modes),
        );
        w.section(
            &format!("cb{k}_sv"),
            vector_section(&a.collateral.bases[k].singular_values),
        );
        w.section(
            &format!("pts{k}"),
            SectionPayload::Indices(a.points[k].iter().map(|&p| p as u64).collect()),
        );
        w.section(
            &format!("w{k}"),
            matrix_section(&a.projected_collateral[k]),
        );
        w.section(
            &format!("c0_{k}"),
            vector_section(a.initial_coeffs[k].as_slice()),
        );
    }
    w.finish()
}

/// Parse an artifact from the container format.
pub fn artifact_from_bytes(bytes: &[u8]) -> Result<RomArtifact> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != ARTIFACT_MAGIC {
        return Err(Error::Artifact("bad magic string".into()));
    }
    let version = r.u32()?;
    if version != ARTIFACT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported format version {version}"
        )));
    }
    let mesh_n_per_region = r.u64()? as usize;
    let mesh_n_micro = r.u64()? as usize;
    let mesh_eta_x = [r.f64()?, r.f64()?, r.f64()?];
    let mesh_signature = r.u64()?;
    let config_hash = r.u64()?;
    let train_dtau = r.f64()?;
    let tolerances = RomTolerances {
        eps_rb: r.f64()?,
        eps_collateral: r.f64()?,
        omega: r.f64()?,
    };
    let point_conditions = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let n_train = r.u64()? as usize;
    let mut train_set = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        train_set.push(ParameterPoint::new(r.f64()?, r.f64()?, r.f64()?));
    }

    let n_sections = r.u64()? as usize;
    let mut floats: std::collections::HashMap<String, DMatrix<f64>> = Default::default();
    let mut indices: std::collections::HashMap<String, Vec<u64>> = Default::default();
    for _ in 0..n_sections {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Artifact("non-utf8 section name".into()))?;
        let kind = r.take(1)?[0];
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        match kind {
            0 => {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(r.f64()?);
                }
                floats.insert(name, DMatrix::from_column_slice(rows, cols, &data));
            }
            1 => {
                let mut data = Vec::with_capacity(rows);
                for _ in 0..rows {
                    data.push(r.u64()?);
                }
                indices.insert(name, data);
            }
            k => return Err(Error::Artifact(format!("unknown section kind {k}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Artifact("trailing bytes after last section".into()));
    }

    let take_floats = |map: &mut std::collections::HashMap<String, DMatrix<f64>>,
                       name: String|
     -> Result<DMatrix<f64>> {
        map.remove(&name)
            .ok_or_else(|| Error::Artifact(format!("missing section {name}")))
    };

    let mut reduced_bases = Vec::with_capacity(4);
    let mut collateral = Vec::with_capacity(4);
    let mut points: [Vec<usize>; 4] = Default::default();
    let mut projected = Vec::with_capacity(4);
    let mut initial = Vec::with_capacity(4);
    for k in 0..4 {
        let modes = take_floats(&mut floats, format!("rb{k}"))?;
        let sv = take_floats(&mut floats, format!("rb{k}_sv"))?;
        reduced_bases.push(BasisMatrix {
            modes,
            singular_values: sv.as_slice().to_vec(),
        });
        let modes = take_floats(&mut floats, format!("cb{k}"))?;
        let sv = take_floats(&mut floats, format!("cb{k}_sv"))?;
        collateral.push(BasisMatrix {
            modes,
            singular_values: sv.as_slice().to_vec(),
        });
        points[k] = indices
            .remove(&format!("pts{k}"))
            .ok_or_else(|| Error::Artifact(format!("missing section pts{k}")))?
            .iter()
            .map(|&v| v as usize)
            .collect();
        projected.push(take_floats(&mut floats, format!("w{k}"))?);
        let c0 = take_floats(&mut floats, format!("c0_{k}"))?;
        initial.push(DVector::from_column_slice(c0.as_slice()));
    }

    Ok(RomArtifact {
        reduced_bases: reduced_bases.try_into().expect("four"),
        collateral: CollateralBasis {
            bases: collateral.try_into().expect("four"),
        },
        points,
        projected_collateral: projected.try_into().expect("four"),
        initial_coeffs: initial.try_into().expect("four"),
        mesh_n_per_region,
        mesh_n_micro,
        mesh_eta_x,
        mesh_signature,
        config_hash,
        train_set,
        tolerances,
        point_conditions,
        train_dtau,
    })
}

impl RomArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = artifact_to_bytes(self);
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RomArtifact> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        artifact_from_bytes(&bytes)
    }
}

/// Standalone dump of a single basis in the same section container as the
/// artifact file.
pub fn basis_to_bytes(basis: &BasisMatrix) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(BASIS_MAGIC);
    w.u32(ARTIFACT_VERSION);
    w.begin_sections();
    w.section("modes", matrix_section(&basis.modes));
    w.section("sv", vector_section(&basis.singular_values));
    w.finish()
}

pub fn basis_from_bytes(bytes: &[u8]) -> Result<BasisMatrix> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != BASIS_MAGIC {
        return Err(Error::Artifact("bad magic string".into()));
    }
    if r.u32()? != ARTIFACT_VERSION {
        return Err(Error::Artifact("unsupported format version".into()));
    }
    let n_sections = r.u64()? as usize;
    let mut modes = None;
    let mut sv = None;
    for _ in 0..n_sections {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Artifact("non-utf8 section name".into()))?;
        let kind = r.take(1)?[0];
        if kind != 0 {
            return Err(Error::Artifact(format!("unexpected section kind {kind}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        match name.as_str() {
            "modes" => modes = Some(DMatrix::from_column_slice(rows, cols, &data)),
            "sv" => sv = Some(data),
            other => return Err(Error::Artifact(format!("unknown section {other}"))),
        }
    }
    Ok(BasisMatrix {
        modes: modes.ok_or_else(|| Error::Artifact("missing modes section".into()))?,
        singular_values: sv.ok_or_else(|| Error::Artifact("missing sv section".into()))?,
    })
}
