//! Versioned stage artifacts: metadata stamps, hull/optimizer/accumulator
//! serialization with exact (bitwise) f64 roundtrips.

use crate::hull::{GridSpec, VoxelHull};
use crate::math::Vec3;
use crate::optim::{AdamState, GradientAccumulator};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const ARTIFACT_VERSION: u32 = 1;

/// Every stage directory carries one of these as `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub version: u32,
    pub config_hash: String,
    /// Iteration the scene was left at (training stages).
    #[serde(default)]
    pub iteration: u64,
    /// Object-region densification threshold captured at the pause.
    #[serde(default)]
    pub tau_g: f64,
    #[serde(default)]
    pub touches: usize,
}

pub fn write_stage_meta(dir: &Path, meta: &StageMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Reads and version-checks a stage's metadata; errors name the missing
/// stage so the operator knows what to run first.
pub fn read_stage_meta(dir: &Path, expected_stage: &str) -> Result<StageMeta> {
    let path = dir.join("meta.json");
    if !path.exists() {
        return Err(Error::StageInput(format!(
            "missing artifact '{}': run the {expected_stage} stage first",
            path.display()
        )));
    }
    let meta: StageMeta = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    if meta.stage != expected_stage {
        return Err(Error::StageInput(format!(
            "artifact at {} is a '{}' stage, expected '{expected_stage}'",
            dir.display(),
            meta.stage
        )));
    }
    if meta.version != ARTIFACT_VERSION {
        return Err(Error::StageInput(format!(
            "artifact version {} at {} unsupported (expected {ARTIFACT_VERSION}); \
             re-run the stage with this build",
            meta.version,
            dir.display()
        )));
    }
    Ok(meta)
}

#[derive(Serialize, Deserialize)]
struct HullJson {
    origin: [f64; 3],
    resolution: f64,
    dims: [usize; 3],
}

/// Hull occupancy: JSON grid spec plus bit-packed occupancy.
pub fn save_hull(dir: &Path, hull: &VoxelHull) -> Result<()> {
    let spec = HullJson {
        origin: [hull.spec.origin.x, hull.spec.origin.y, hull.spec.origin.z],
        resolution: hull.spec.resolution,
        dims: hull.spec.dims,
    };
    std::fs::write(dir.join("hull.json"), serde_json::to_string_pretty(&spec)?)?;
    let mut bits = vec![0u8; hull.occupancy.len().div_ceil(8)];
    for (i, &b) in hull.occupancy.iter().enumerate() {
        if b {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    std::fs::write(dir.join("hull.occ"), bits)?;
    Ok(())
}

pub fn load_hull(dir: &Path) -> Result<VoxelHull> {
    let spec: HullJson = serde_json::from_str(&std::fs::read_to_string(dir.join("hull.json"))?)?;
    let grid = GridSpec {
        origin: Vec3::new(spec.origin[0], spec.origin[1], spec.origin[2]),
        resolution: spec.resolution,
        dims: spec.dims,
    };
    let bits = std::fs::read(dir.join("hull.occ"))?;
    let n = grid.len();
    if bits.len() != n.div_ceil(8) {
        return Err(Error::StageInput(format!(
            "hull occupancy size mismatch at {}",
            dir.display()
        )));
    }
    let occupancy = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    Ok(VoxelHull { spec: grid, occupancy })
}

const STATE_MAGIC: &[u8; 8] = b"VSTATE01";

fn write_f64s(out: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(bytes: &[u8], at: &mut usize, n: usize) -> Result<Vec<f64>> {
    if bytes.len() < *at + n * 8 {
        return Err(Error::StageInput("optimizer state truncated".into()));
    }
    let out = (0..n)
        .map(|i| f64::from_le_bytes(bytes[*at + i * 8..*at + i * 8 + 8].try_into().unwrap()))
        .collect();
    *at += n * 8;
    Ok(out)
}

/// Optimizer + accumulator snapshot plus the paused gradient window means
/// (per-Gaussian, captured for touch selection); bit-exact across
/// save/load so a resumed run continues the same trajectory.
pub fn save_train_state(
    path: &Path,
    adam: &AdamState,
    accum: &GradientAccumulator,
    window_means: &[f64],
) -> Result<()> {
    assert_eq!(window_means.len(), adam.len());
    let n = adam.len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(STATE_MAGIC)?;
    out.write_all(&(n as u64).to_le_bytes())?;
    out.write_all(&adam.t.to_le_bytes())?;
    let flat3 = |v: &Vec<[f64; 3]>| v.iter().flatten().copied().collect::<Vec<f64>>();
    let flat4 = |v: &Vec<[f64; 4]>| v.iter().flatten().copied().collect::<Vec<f64>>();
    write_f64s(&mut out, &flat3(&adam.m_center))?;
    write_f64s(&mut out, &flat3(&adam.v_center))?;
    write_f64s(&mut out, &flat4(&adam.m_rotation))?;
    write_f64s(&mut out, &flat4(&adam.v_rotation))?;
    write_f64s(&mut out, &flat3(&adam.m_scale))?;
    write_f64s(&mut out, &flat3(&adam.v_scale))?;
    write_f64s(&mut out, &adam.m_opacity)?;
    write_f64s(&mut out, &adam.v_opacity)?;
    write_f64s(&mut out, &flat3(&adam.m_color))?;
    write_f64s(&mut out, &flat3(&adam.v_color))?;
    write_f64s(&mut out, &accum.sum)?;
    for c in &accum.count {
        out.write_all(&c.to_le_bytes())?;
    }
    write_f64s(&mut out, window_means)?;
    out.flush()?;
    Ok(())
}

pub fn load_train_state(path: &Path) -> Result<(AdamState, GradientAccumulator, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 24 || &bytes[..8] != STATE_MAGIC {
        return Err(Error::StageInput(format!("bad optimizer state at {}", path.display())));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let t = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let mut at = 24usize;
    let un3 = |v: Vec<f64>| v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>();
    let un4 = |v: Vec<f64>| v.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect::<Vec<_>>();
    let mut adam = AdamState { t, ..AdamState::default() };
    adam.m_center = un3(read_f64s(&bytes, &mut at, n * 3)?);
    adam.v_center = un3(read_f64s(&bytes, &mut at, n * 3)?);
    adam.m_rotation = un4(read_f64s(&bytes, &mut at, n * 4)?);
    adam.v_rotation = un4(read_f64s(&bytes, &mut at, n * 4)?);
    adam.m_scale = un3(read_f64s(&bytes, &mut at, n * 3)?);
    adam.v_scale = un3(read_f64s(&bytes, &mut at, n * 3)?);
    adam.m_opacity = read_f64s(&bytes, &mut at, n)?;
    adam.v_opacity = read_f64s(&bytes, &mut at, n)?;
    adam.m_color = un3(read_f64s(&bytes, &mut at, n * 3)?);
    adam.v_color = un3(read_f64s(&bytes, &mut at, n * 3)?);
    let sum = read_f64s(&bytes, &mut at, n)?;
    if bytes.len() < at + n * 4 {
        return Err(Error::StageInput("optimizer state truncated".into()));
    }
    let count = (0..n)
        .map(|i| u32::from_le_bytes(bytes[at + i * 4..at + i * 4 + 4].try_into().unwrap()))
        .collect();
    at += n * 4;
    let window_means = read_f64s(&bytes, &mut at, n)?;
    Ok((adam, GradientAccumulator { sum, count }, window_means))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::GridSpec;

    #[test]
    fn hull_roundtrip() {
        let dir = crate::test_dir("hull-artifact");
        let spec = GridSpec {
            origin: Vec3::new(0.1, -0.2, 0.3),
            resolution: 0.005,
            dims: [13, 9, 11],
        };
        let occupancy: Vec<bool> = (0..spec.len()).map(|i| i % 7 == 0 || i % 3 == 1).collect();
        let hull = VoxelHull { spec, occupancy };
        save_hull(&dir, &hull).unwrap();
        let back = load_hull(&dir).unwrap();
        assert_eq!(back.spec, hull.spec);
        assert_eq!(back.occupancy, hull.occupancy);
    }

    #[test]
    fn train_state_roundtrip_is_bit_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let n = 17;
        let mut adam = AdamState::new(n);
        adam.t = 123;
        for i in 0..n {
            for c in 0..3 {
                adam.m_center[i][c] = rng.gen::<f64>() * 1e-3;
                adam.v_scale[i][c] = rng.gen::<f64>();
            }
            adam.m_rotation[i][3] = rng.gen();
            adam.v_opacity[i] = rng.gen();
        }
        let mut accum = GradientAccumulator::new(n);
        for i in 0..n {
            accum.sum[i] = rng.gen();
            accum.count[i] = rng.gen_range(0..9);
        }
        let means: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let dir = crate::test_dir("state-artifact");
        let path = dir.join("state.bin");
        save_train_state(&path, &adam, &accum, &means).unwrap();
        let (a2, acc2, m2) = load_train_state(&path).unwrap();
        assert_eq!(m2, means);
        assert_eq!(a2.t, adam.t);
        assert_eq!(a2.m_center, adam.m_center);
        assert_eq!(a2.v_scale, adam.v_scale);
        assert_eq!(a2.m_rotation, adam.m_rotation);
        assert_eq!(a2.v_opacity, adam.v_opacity);
        assert_eq!(acc2.sum, accum.sum);
        assert_eq!(acc2.count, accum.count);
    }

    #[test]
    fn stage_meta_guards() {
        let dir = crate::test_dir("meta-artifact");
        // Missing artifact names the required stage.
        let err = read_stage_meta(&dir.join("nope"), "train").unwrap_err();
        assert!(err.to_string().contains("train"));

        let meta = StageMeta {
            stage: "train".into(),
            version: ARTIFACT_VERSION,
            config_hash: "abc".into(),
            iteration: 10,
            tau_g: 0.5,
            touches: 0,
        };
        write_stage_meta(&dir, &meta).unwrap();
        assert!(read_stage_meta(&dir, "train").is_ok());
        // Wrong stage type.
        assert!(read_stage_meta(&dir, "carve").is_err());
        // Version mismatch refuses with a migration hint.
        let bad = StageMeta { version: 99, ..meta };
        write_stage_meta(&dir, &bad).unwrap();
        let err = read_stage_meta(&dir, "train").unwrap_err();
        assert!(err.to_string().contains("re-run"));
    }
}
