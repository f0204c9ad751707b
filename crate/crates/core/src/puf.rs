//! Virtual PUF instances: random complex transfer tensors.
//!
//! A PUF is modeled as an S x m complex matrix `t[s][k]` mapping mirror
//! segment `k` to detector speckle cell `s`. Amplitudes are unit-scale
//! Rayleigh and phases uniform, the fully developed speckle statistics of a
//! strongly scattering sample. The cell count S is what sets the shape of the
//! downstream photon-count distribution, so it is kept an explicit integer
//! rather than a fitted real.

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::Distribution as _;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng;

const MAGIC: &[u8; 5] = b"SPUF1";

/// Shipped decorrelation scale for translation, micrometers.
/// Calibrated so a 30 um translation alone drives inter-key HD to ~0.5.
pub const DEFAULT_ELL_X_UM: f64 = 22.91;

/// Shipped decorrelation scale for rotation, degrees. Same calibration
/// target at 0.5 degrees.
pub const DEFAULT_ELL_THETA_DEG: f64 = 0.3818;

/// An immutable virtual PUF. Safe to share across threads; all operations
/// that need randomness take explicit seeds.
#[derive(Debug, Clone)]
pub struct PufInstance {
    puf_id: String,
    seed: u64,
    segment_count: usize,
    cell_count: usize,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
    // Derived caches: rectangular entries and per-cell row sums. The row sum
    // lets a response be computed from only the lit segments:
    // sum_k t[s][k]*(r_k - rho) = sum_{k lit} t[s][k] - rho * row_total[s].
    transfer: Vec<Complex64>,
    row_total: Vec<Complex64>,
}

impl PufInstance {
    fn from_polar(seed: u64, m: usize, s: usize, amplitude: Vec<f64>, phase: Vec<f64>) -> Self {
        debug_assert_eq!(amplitude.len(), m * s);
        debug_assert_eq!(phase.len(), m * s);
        let transfer: Vec<Complex64> = amplitude
            .iter()
            .zip(&phase)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        let row_total: Vec<Complex64> = (0..s)
            .map(|row| transfer[row * m..(row + 1) * m].iter().sum())
            .collect();
        let mut puf = PufInstance {
            puf_id: String::new(),
            seed,
            segment_count: m,
            cell_count: s,
            amplitude,
            phase,
            transfer,
            row_total,
        };
        puf.puf_id = format!("puf-{}", &hex::encode(Sha256::digest(puf.to_bytes()))[..32]);
        puf
    }

    pub fn id(&self) -> &str {
        &self.puf_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// m: number of mirror segments, equals the challenge length.
    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    /// S: number of independent speckle cells covering the detector.
    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn amplitude(&self, cell: usize, segment: usize) -> f64 {
        self.amplitude[cell * self.segment_count + segment]
    }

    pub fn phase(&self, cell: usize, segment: usize) -> f64 {
        self.phase[cell * self.segment_count + segment]
    }

    pub(crate) fn transfer_row(&self, cell: usize) -> &[Complex64] {
        &self.transfer[cell * self.segment_count..(cell + 1) * self.segment_count]
    }

    /// Copy of this PUF with every transfer amplitude multiplied by
    /// `lambda`: the illumination-power knob. Downstream keys must not
    /// depend on lambda, and the invariance tests exercise exactly this.
    pub fn scaled_amplitudes(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("amplitude scale must be positive"));
        }
        let amplitude = self.amplitude.iter().map(|a| a * lambda).collect();
        Ok(PufInstance::from_polar(
            self.seed,
            self.segment_count,
            self.cell_count,
            amplitude,
            self.phase.clone(),
        ))
    }

    pub(crate) fn row_total(&self, cell: usize) -> Complex64 {
        self.row_total[cell]
    }

    /// Versioned binary serialization: magic `SPUF1`, little-endian u64 seed,
    /// u32 m, u32 S, then S*m (amplitude, phase) f64 pairs, cell-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 8 + 4 + 4 + self.amplitude.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.segment_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.cell_count as u32).to_le_bytes());
        for (a, p) in self.amplitude.iter().zip(&self.phase) {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header_len = 5 + 8 + 4 + 4;
        if bytes.len() < header_len {
            return Err(Error::Format("PUF file truncated".into()));
        }
        if &bytes[..5] != MAGIC {
            return Err(Error::Format("bad PUF file magic".into()));
        }
        let seed = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let m = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let s = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        if m < 2 || m % 2 != 0 {
            return Err(Error::OddSegmentCount(m));
        }
        if s == 0 {
            return Err(Error::ZeroCells);
        }
        let expected = header_len + m * s * 16;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "PUF file length: expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut amplitude = Vec::with_capacity(m * s);
        let mut phase = Vec::with_capacity(m * s);
        let mut off = header_len;
        for _ in 0..m * s {
            let a = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let p = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Format("amplitude out of range".into()));
            }
            if !p.is_finite() || !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&p) {
                return Err(Error::Format("phase out of range".into()));
            }
            amplitude.push(a);
            phase.push(p);
            off += 16;
        }
        Ok(Self::from_polar(seed, m, s, amplitude, phase))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Draws a fresh transfer tensor: amplitudes Rayleigh with unit scale
/// (so E|t|^2 = 2), phases uniform on [-pi, pi).
///
/// The Rayleigh draw is the norm of two unit normals, i.e. the magnitude
/// of a circular complex Gaussian, which is the physical origin of the
/// distribution here.
fn sample_tensor(rng: &mut rng::Rng, entries: usize) -> (Vec<f64>, Vec<f64>) {
    let normal = rand_distr::StandardNormal;
    let mut amplitude = Vec::with_capacity(entries);
    let mut phase = Vec::with_capacity(entries);
    for _ in 0..entries {
        let re: f64 = normal.sample(rng);
        let im: f64 = normal.sample(rng);
        amplitude.push(re.hypot(im));
        phase.push(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    }
    (amplitude, phase)
}

/// Synthesizes a virtual PUF. Deterministic in `seed`.
pub fn synthesize_puf(seed: u64, m: usize, s: usize) -> Result<PufInstance> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::OddSegmentCount(m));
    }
    if s == 0 {
        return Err(Error::ZeroCells);
    }
    let mut rng = rng::seeded(seed);
    let (amplitude, phase) = sample_tensor(&mut rng, m * s);
    Ok(PufInstance::from_polar(seed, m, s, amplitude, phase))
}

/// Physical misalignment between enrollment and verification mountings.
#[derive(Debug, Clone, Copy)]
pub struct MisalignmentParams {
    pub dx_um: f64,
    pub dtheta_deg: f64,
    pub ell_x_um: f64,
    pub ell_theta_deg: f64,
}

impl MisalignmentParams {
    pub fn new(dx_um: f64, dtheta_deg: f64, ell_x_um: f64, ell_theta_deg: f64) -> Result<Self> {
        if !(ell_x_um > 0.0) || !(ell_theta_deg > 0.0) {
            return Err(Error::invalid("decorrelation scales must be positive"));
        }
        if dx_um < 0.0 || dtheta_deg < 0.0 {
            return Err(Error::invalid("displacements must be nonnegative"));
        }
        Ok(MisalignmentParams {
            dx_um,
            dtheta_deg,
            ell_x_um,
            ell_theta_deg,
        })
    }

    /// With the shipped decorrelation scales.
    pub fn with_default_scales(dx_um: f64, dtheta_deg: f64) -> Result<Self> {
        Self::new(dx_um, dtheta_deg, DEFAULT_ELL_X_UM, DEFAULT_ELL_THETA_DEG)
    }

    /// Residual correlation c between the original and the displaced tensor:
    /// a Gaussian kernel in each displacement axis, 1 at zero displacement,
    /// strictly decreasing in both.
    pub fn correlation(&self) -> f64 {
        let ex = self.dx_um / self.ell_x_um;
        let et = self.dtheta_deg / self.ell_theta_deg;
        (-(ex * ex) - et * et).exp()
    }
}

/// Returns the partially decorrelated tensor t' = c*t + sqrt(1-c^2)*t_fresh,
/// with t_fresh an independent draw from `seed`. Unit variance is preserved
/// exactly by construction, so misaligned instances stay comparable to fresh
/// ones everywhere downstream.
pub fn apply_misalignment(
    puf: &PufInstance,
    params: &MisalignmentParams,
    seed: u64,
) -> Result<PufInstance> {
    let c = params.correlation();
    if c >= 1.0 {
        return Ok(puf.clone());
    }
    let mix = (1.0 - c * c).sqrt();
    let mut rng = rng::seeded(seed);
    let entries = puf.segment_count * puf.cell_count;
    let (fresh_amp, fresh_phase) = sample_tensor(&mut rng, entries);
    let mut amplitude = Vec::with_capacity(entries);
    let mut phase = Vec::with_capacity(entries);
    for i in 0..entries {
        let fresh = Complex64::from_polar(fresh_amp[i], fresh_phase[i]);
        let mixed = c * puf.transfer[i] + mix * fresh;
        amplitude.push(mixed.norm());
        phase.push(mixed.arg());
    }
    Ok(PufInstance::from_polar(
        seed,
        puf.segment_count,
        puf.cell_count,
        amplitude,
        phase,
    ))
}

/// Detector-plane geometry used to pick a physically plausible cell count.
#[derive(Debug, Clone, Copy)]
pub struct SpeckleGeometry {
    pub z_mm: f64,
    pub d_mm: f64,
    pub wavelength_nm: f64,
    pub detector_diameter_um: f64,
}

impl SpeckleGeometry {
    pub fn new(z_mm: f64, d_mm: f64, wavelength_nm: f64, detector_diameter_um: f64) -> Result<Self> {
        if !(z_mm > 0.0 && d_mm > 0.0 && wavelength_nm > 0.0 && detector_diameter_um > 0.0) {
            return Err(Error::invalid("geometry values must be positive"));
        }
        Ok(SpeckleGeometry {
            z_mm,
            d_mm,
            wavelength_nm,
            detector_diameter_um,
        })
    }
}

/// Mean speckle diameter on the detector, micrometers: lambda * z / d.
pub fn mean_speckle_size(geom: &SpeckleGeometry) -> f64 {
    geom.wavelength_nm * 1e-3 * geom.z_mm / geom.d_mm
}

/// Number of speckle cells covering a detector of the given diameter:
/// max(1, round((detector / speckle)^2)).
pub fn cell_count_for(detector_diameter_um: f64, speckle_size_um: f64) -> usize {
    let ratio = detector_diameter_um / speckle_size_um;
    (ratio * ratio).round().max(1.0) as usize
}

/// Cell count implied by a full geometry.
pub fn suggested_cell_count(geom: &SpeckleGeometry) -> usize {
    cell_count_for(geom.detector_diameter_um, mean_speckle_size(geom))
}
