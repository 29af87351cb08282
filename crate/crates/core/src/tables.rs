//! Versioned, portable table persistence.
//!
//! Tables are stored as canonical JSON: fixed key order, shortest
//! round-trip decimals (every coefficient reloads bit-identically), and a
//! SHA-256 checksum over the numeric payload that is verified on load.
//! The format is documented in `TABLE_FORMAT.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biaxial::{BiaxialBlock, BiaxialClosureTable};
use crate::circle::{CircleClosureTable, TableVariant};
use crate::error::{Error, Result};
use crate::quadrature::{LegendreSeries1D, LegendreSeries2D, TablePiece};
use crate::uniaxial::UniaxialClosureTable;
use crate::BuildInfo;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Circle,
    SphereUniaxial,
    SphereBiaxial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Global,
    Piecewise,
}

impl From<TableVariant> for Variant {
    fn from(v: TableVariant) -> Self {
        match v {
            TableVariant::Global => Variant::Global,
            TableVariant::Piecewise => Variant::Piecewise,
        }
    }
}

impl From<Variant> for TableVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Global => TableVariant::Global,
            Variant::Piecewise => TableVariant::Piecewise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series2DRecord {
    pub n1: usize,
    pub n2: usize,
    pub coeffs: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceRecord {
    /// 1D interval piece (circle and uniaxial tables).
    Interval {
        lo: f64,
        hi: f64,
        n_l: usize,
        coeffs: Vec<f64>,
        residual: f64,
    },
    /// 2D block piece (biaxial tables), with one series per eta.
    Block {
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
        eta1: Series2DRecord,
        eta2: Series2DRecord,
        eta3: Series2DRecord,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub fit_quad_n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub moment_quad_n: Option<usize>,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub precision: String,
    pub built_at_unix: u64,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableFile {
    pub format_version: u32,
    pub domain: Domain,
    pub variant: Variant,
    pub pieces: Vec<PieceRecord>,
    pub metadata: Metadata,
}

fn checksum(domain: Domain, variant: Variant, pieces: &[PieceRecord]) -> String {
    let mut h = Sha256::new();
    h.update([domain as u8, variant as u8]);
    let mut feed = Vec::<u8>::new();
    let put = |feed: &mut Vec<u8>, v: f64| feed.extend_from_slice(&v.to_le_bytes());
    for p in pieces {
        match p {
            PieceRecord::Interval {
                lo,
                hi,
                n_l,
                coeffs,
                residual,
            } => {
                feed.extend_from_slice(&(*n_l as u64).to_le_bytes());
                put(&mut feed, *lo);
                put(&mut feed, *hi);
                for c in coeffs {
                    put(&mut feed, *c);
                }
                put(&mut feed, *residual);
            }
            PieceRecord::Block {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
                eta1,
                eta2,
                eta3,
            } => {
                put(&mut feed, *x_lo);
                put(&mut feed, *x_hi);
                put(&mut feed, *y_lo);
                put(&mut feed, *y_hi);
                for s in [eta1, eta2, eta3] {
                    feed.extend_from_slice(&(s.n1 as u64).to_le_bytes());
                    feed.extend_from_slice(&(s.n2 as u64).to_le_bytes());
                    for c in &s.coeffs {
                        put(&mut feed, *c);
                    }
                    put(&mut feed, s.residual);
                }
            }
        }
    }
    h.update(&feed);
    format!("sha256:{:x}", h.finalize())
}

fn now_unix() -> u64 {
    if let Ok(s) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = s.parse() {
            return v;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl TableFile {
    fn assemble(
        domain: Domain,
        variant: Variant,
        pieces: Vec<PieceRecord>,
        build: &BuildInfo,
    ) -> Self {
        let checksum = checksum(domain, variant, &pieces);
        TableFile {
            format_version: FORMAT_VERSION,
            domain,
            variant,
            pieces,
            metadata: Metadata {
                fit_quad_n: build.fit_quad_n,
                moment_quad_n: build.moment_quad_n,
                newton_tol: build.newton_tol,
                max_newton_iters: build.max_newton_iters,
                precision: "double-double".to_string(),
                built_at_unix: now_unix(),
                checksum,
            },
        }
    }

    pub fn from_circle(t: &CircleClosureTable) -> Self {
        Self::assemble(
            Domain::Circle,
            t.variant.into(),
            pieces_from_1d(&t.pieces),
            &t.build,
        )
    }

    pub fn from_uniaxial(t: &UniaxialClosureTable) -> Self {
        Self::assemble(
            Domain::SphereUniaxial,
            t.variant.into(),
            pieces_from_1d(&t.pieces),
            &t.build,
        )
    }

    pub fn from_biaxial(t: &BiaxialClosureTable) -> Self {
        let pieces = t
            .blocks
            .iter()
            .map(|b| PieceRecord::Block {
                x_lo: b.x_lo,
                x_hi: b.x_hi,
                y_lo: b.y_lo,
                y_hi: b.y_hi,
                eta1: series2d_record(&b.etas[0], b.residuals[0]),
                eta2: series2d_record(&b.etas[1], b.residuals[1]),
                eta3: series2d_record(&b.etas[2], b.residuals[2]),
            })
            .collect();
        Self::assemble(Domain::SphereBiaxial, t.variant.into(), pieces, &t.build)
    }

    fn build_info(&self) -> BuildInfo {
        BuildInfo {
            fit_quad_n: self.metadata.fit_quad_n,
            moment_quad_n: self.metadata.moment_quad_n,
            newton_tol: self.metadata.newton_tol,
            max_newton_iters: self.metadata.max_newton_iters,
        }
    }

    pub fn to_circle(&self) -> Result<CircleClosureTable> {
        if self.domain != Domain::Circle {
            return Err(Error::Table(format!(
                "expected a circle table, found {:?}",
                self.domain
            )));
        }
        let pieces = pieces_to_1d(&self.pieces)?;
        validate_1d_tiling(&pieces, 1.0)?;
        Ok(CircleClosureTable {
            variant: self.variant.into(),
            pieces,
            build: self.build_info(),
        })
    }

    pub fn to_uniaxial(&self) -> Result<UniaxialClosureTable> {
        if self.domain != Domain::SphereUniaxial {
            return Err(Error::Table(format!(
                "expected a uniaxial table, found {:?}",
                self.domain
            )));
        }
        let pieces = pieces_to_1d(&self.pieces)?;
        validate_1d_tiling(&pieces, 2.0)?;
        Ok(UniaxialClosureTable {
            variant: self.variant.into(),
            pieces,
            build: self.build_info(),
        })
    }

    pub fn to_biaxial(&self) -> Result<BiaxialClosureTable> {
        if self.domain != Domain::SphereBiaxial {
            return Err(Error::Table(format!(
                "expected a biaxial table, found {:?}",
                self.domain
            )));
        }
        let mut blocks = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let PieceRecord::Block {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
                eta1,
                eta2,
                eta3,
            } = p
            else {
                return Err(Error::Table("biaxial table with interval pieces".into()));
            };
            blocks.push(BiaxialBlock {
                x_lo: *x_lo,
                x_hi: *x_hi,
                y_lo: *y_lo,
                y_hi: *y_hi,
                etas: [
                    series2d_from_record(eta1)?,
                    series2d_from_record(eta2)?,
                    series2d_from_record(eta3)?,
                ],
                residuals: [eta1.residual, eta2.residual, eta3.residual],
            });
        }
        validate_block_tiling(&blocks)?;
        Ok(BiaxialClosureTable {
            variant: self.variant.into(),
            blocks,
            build: self.build_info(),
        })
    }
}

fn pieces_from_1d(pieces: &[TablePiece]) -> Vec<PieceRecord> {
    pieces
        .iter()
        .map(|p| PieceRecord::Interval {
            lo: p.series.lo,
            hi: p.series.hi,
            n_l: p.series.degree(),
            coeffs: p.series.coeffs.clone(),
            residual: p.residual,
        })
        .collect()
}

fn pieces_to_1d(pieces: &[PieceRecord]) -> Result<Vec<TablePiece>> {
    let mut out = Vec::with_capacity(pieces.len());
    for p in pieces {
        let PieceRecord::Interval {
            lo,
            hi,
            n_l,
            coeffs,
            residual,
        } = p
        else {
            return Err(Error::Table("1D table with block pieces".into()));
        };
        if coeffs.len() != n_l + 1 {
            return Err(Error::Table(format!(
                "piece [{lo}, {hi}]: {} coefficients for n_l = {n_l}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Table("non-finite coefficient".into()));
        }
        out.push(TablePiece {
            series: LegendreSeries1D {
                lo: *lo,
                hi: *hi,
                coeffs: coeffs.clone(),
            },
            residual: *residual,
        });
    }
    Ok(out)
}

fn series2d_record(s: &LegendreSeries2D, residual: f64) -> Series2DRecord {
    Series2DRecord {
        n1: s.n1,
        n2: s.n2,
        coeffs: s.coeffs.clone(),
        residual,
    }
}

fn series2d_from_record(r: &Series2DRecord) -> Result<LegendreSeries2D> {
    if r.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Table("non-finite coefficient".into()));
    }
    LegendreSeries2D::new(r.n1, r.n2, r.coeffs.clone())
        .map_err(|e| Error::Table(format!("bad 2D series shape: {e}")))
}

/// Pieces must tile `[0, span]` exactly (contiguous, increasing, no gaps).
fn validate_1d_tiling(pieces: &[TablePiece], span: f64) -> Result<()> {
    if pieces.is_empty() {
        return Err(Error::Table("table has no pieces".into()));
    }
    if pieces[0].series.lo != 0.0 || pieces.last().unwrap().series.hi != span {
        return Err(Error::Table(format!("pieces do not span [0, {span}]")));
    }
    for w in pieces.windows(2) {
        if w[0].series.hi != w[1].series.lo {
            return Err(Error::Table(format!(
                "gap or overlap between pieces at {} vs {}",
                w[0].series.hi, w[1].series.lo
            )));
        }
    }
    for p in pieces {
        if p.series.hi <= p.series.lo {
            return Err(Error::Table("empty or inverted piece".into()));
        }
    }
    Ok(())
}

/// Blocks must tile the standard square: inside bounds, pairwise disjoint
/// interiors, total area 4.
fn validate_block_tiling(blocks: &[BiaxialBlock]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Table("table has no blocks".into()));
    }
    let mut area = 0.0;
    for b in blocks {
        if b.x_hi <= b.x_lo || b.y_hi <= b.y_lo {
            return Err(Error::Table("empty or inverted block".into()));
        }
        if b.x_lo < -1.0 - 1e-12 || b.x_hi > 1.0 + 1e-12 || b.y_lo < -1.0 - 1e-12 || b.y_hi > 1.0 + 1e-12 {
            return Err(Error::Table("block outside the standard square".into()));
        }
        area += (b.x_hi - b.x_lo) * (b.y_hi - b.y_lo);
    }
    for (i, a) in blocks.iter().enumerate() {
        for b in blocks.iter().skip(i + 1) {
            let dx = a.x_hi.min(b.x_hi) - a.x_lo.max(b.x_lo);
            let dy = a.y_hi.min(b.y_hi) - a.y_lo.max(b.y_lo);
            if dx > 1e-12 && dy > 1e-12 {
                return Err(Error::Table("overlapping blocks".into()));
            }
        }
    }
    if (area - 4.0).abs() > 1e-9 {
        return Err(Error::Table(format!(
            "blocks cover area {area}, expected 4"
        )));
    }
    Ok(())
}

/// Canonical serialization: pretty JSON with fixed key order so identical
/// tables produce byte-identical files.
pub fn save_table(file: &TableFile, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(file)
        .map_err(|e| Error::Table(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Parse, version-gate and checksum-verify a table file.
pub fn load_table(path: &Path) -> Result<TableFile> {
    let text = std::fs::read_to_string(path)?;
    let file: TableFile =
        serde_json::from_str(&text).map_err(|e| Error::Table(format!("parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Table(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let want = checksum(file.domain, file.variant, &file.pieces);
    if want != file.metadata.checksum {
        return Err(Error::Table(format!(
            "checksum mismatch: file says {}, payload hashes to {want}",
            file.metadata.checksum
        )));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{build_table, CircleBuildConfig, TableVariant};

    fn small_circle() -> CircleClosureTable {
        let cfg = CircleBuildConfig {
            variant: TableVariant::Piecewise,
            n_l: Some(10),
            quad_n: Some(28),
            breakpoints: Some(vec![0.0, 0.5, 1.0]),
        };
        build_table(&cfg).unwrap()
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = std::env::temp_dir().join("bingham_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let t = small_circle();
        let f = TableFile::from_circle(&t);
        let p1 = dir.join("a.json");
        let p2 = dir.join("b.json");
        save_table(&f, &p1).unwrap();
        let loaded = load_table(&p1).unwrap();
        save_table(&loaded, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2, "save -> load -> save not byte-identical");
        // materialized table evaluates identically
        let back = loaded.to_circle().unwrap();
        for mu in [0.0, 0.3, 0.77, 0.999] {
            assert_eq!(
                t.eval_eta(mu).unwrap().to_bits(),
                back.eval_eta(mu).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn corruption_detected() {
        let dir = std::env::temp_dir().join("bingham_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let f = TableFile::from_circle(&small_circle());
        let p = dir.join("c.json");
        save_table(&f, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        // flip one digit inside a coefficient
        let idx = text.find("0.5").expect("some digit sequence");
        let mut corrupted = text.clone();
        corrupted.replace_range(idx..idx + 3, "0.6");
        std::fs::write(&p, corrupted).unwrap();
        match load_table(&p) {
            Err(Error::Table(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn version_gate_and_domain_mismatch() {
        let dir = std::env::temp_dir().join("bingham_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let t = small_circle();
        let mut f = TableFile::from_circle(&t);
        f.format_version = 99;
        let p = dir.join("d.json");
        save_table(&f, &p).unwrap();
        assert!(matches!(load_table(&p), Err(Error::Table(_))));
        let f = TableFile::from_circle(&t);
        assert!(f.to_uniaxial().is_err());
        assert!(f.to_biaxial().is_err());
    }

    #[test]
    fn tiling_violation_rejected() {
        let t = small_circle();
        let mut f = TableFile::from_circle(&t);
        if let PieceRecord::Interval { hi, .. } = &mut f.pieces[0] {
            *hi = 0.4; // open a gap
        }
        f.metadata.checksum = checksum(f.domain, f.variant, &f.pieces);
        assert!(f.to_circle().is_err());
    }
}
