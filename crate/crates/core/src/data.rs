//! Parametric multi-domain toy dataset generation, on-disk persistence, and
//! PK mini-batch composition.
//!
//! Identities are Gaussian clusters around latent centroids; cameras add a
//! per-camera offset; a domain shift (orthogonal rotation, per-coordinate
//! scale, offset) is applied on top. Everything is deterministic per seed.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::linalg::{gaussian, random_orthogonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Synthetic,
    Source,
    Target,
    Synth2Src,
    Src2Tgt,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainTag::Synthetic => "SYNTHETIC",
            DomainTag::Source => "SOURCE",
            DomainTag::Target => "TARGET",
            DomainTag::Synth2Src => "SYNTH2SRC",
            DomainTag::Src2Tgt => "SRC2TGT",
        };
        f.write_str(s)
    }
}

impl FromStr for DomainTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SYNTHETIC" => Ok(DomainTag::Synthetic),
            "SOURCE" => Ok(DomainTag::Source),
            "TARGET" => Ok(DomainTag::Target),
            "SYNTH2SRC" => Ok(DomainTag::Synth2Src),
            "SRC2TGT" => Ok(DomainTag::Src2Tgt),
            other => Err(Error::Config(format!("unknown domain tag `{other}`"))),
        }
    }
}

/// One raw input vector with identity (None = unlabeled) and camera id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Array1<f64>,
    pub identity: Option<u32>,
    pub camera: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub samples: Vec<Sample>,
    pub num_identities: usize,
    pub num_cameras: usize,
    pub domain: DomainTag,
    pub dim: usize,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy with all identity labels removed (training-side view of the target).
    pub fn strip_labels(&self) -> DomainDataset {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.identity = None;
        }
        out
    }
}

/// Domain shift applied after cluster construction: `x' = R (scale . x) + offset`.
/// `rotation_seed == 0` means no rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTransform {
    pub rotation_seed: u64,
    pub scale: Array1<f64>,
    pub offset: Array1<f64>,
}

impl DomainTransform {
    pub fn identity(dim: usize) -> Self {
        DomainTransform {
            rotation_seed: 0,
            scale: Array1::ones(dim),
            offset: Array1::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub num_cameras: usize,
    pub input_dim: usize,
    /// Within-identity noise scale (must be > 0).
    pub identity_spread: f64,
    pub camera_shift_scale: f64,
    pub transform: DomainTransform,
    pub rng_seed: u64,
    pub domain: DomainTag,
}

impl DomainSpec {
    fn validate(&self) -> Result<()> {
        if self.num_identities == 0
            || self.samples_per_identity == 0
            || self.num_cameras == 0
            || self.input_dim == 0
        {
            return Err(Error::Domain("spec counts must be positive".into()));
        }
        if self.identity_spread <= 0.0 {
            return Err(Error::Domain("identity_spread must be > 0".into()));
        }
        if self.camera_shift_scale < 0.0 {
            return Err(Error::Domain("camera_shift_scale must be >= 0".into()));
        }
        if self.transform.scale.len() != self.input_dim
            || self.transform.offset.len() != self.input_dim
        {
            return Err(Error::Shape("transform vectors must match input_dim".into()));
        }
        if self.transform.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Domain("transform scale entries must be > 0".into()));
        }
        Ok(())
    }
}

/// One latent centroid per identity, `samples_per_identity` noisy copies per
/// identity per camera with additive per-camera offsets, then the domain
/// transform on every sample.
pub fn generate_domain(spec: &DomainSpec) -> Result<DomainDataset> {
    spec.validate()?;
    let dim = spec.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let centroids: Vec<Array1<f64>> = (0..spec.num_identities)
        .map(|_| (0..dim).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let camera_offsets: Vec<Array1<f64>> = (0..spec.num_cameras)
        .map(|_| {
            (0..dim)
                .map(|_| spec.camera_shift_scale * gaussian(&mut rng))
                .collect()
        })
        .collect();
    let rotation: Option<Array2<f64>> = if spec.transform.rotation_seed != 0 {
        let mut rot_rng = ChaCha8Rng::seed_from_u64(spec.transform.rotation_seed);
        Some(random_orthogonal(dim, &mut rot_rng))
    } else {
        None
    };

    let mut samples =
        Vec::with_capacity(spec.num_identities * spec.num_cameras * spec.samples_per_identity);
    for (id, centroid) in centroids.iter().enumerate() {
        for (cam, cam_off) in camera_offsets.iter().enumerate() {
            for _ in 0..spec.samples_per_identity {
                let noise: Array1<f64> =
                    (0..dim).map(|_| spec.identity_spread * gaussian(&mut rng)).collect();
                let base = centroid + cam_off + &noise;
                let scaled = &base * &spec.transform.scale;
                let x = match &rotation {
                    Some(r) => r.dot(&scaled) + &spec.transform.offset,
                    None => scaled + &spec.transform.offset,
                };
                samples.push(Sample {
                    x,
                    identity: Some(id as u32),
                    camera: cam as u32,
                });
            }
        }
    }
    Ok(DomainDataset {
        samples,
        num_identities: spec.num_identities,
        num_cameras: spec.num_cameras,
        domain: spec.domain,
        dim,
    })
}

/// Prints a float with 17 significant digits, enough to round-trip f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `meta.txt` and `samples.csv` under `dir`.
pub fn save_dataset(ds: &DomainDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = format!(
        "dim={}\nnum_identities={}\nnum_cameras={}\ndomain={}\ncount={}\n",
        ds.dim,
        ds.num_identities,
        ds.num_cameras,
        ds.domain,
        ds.samples.len()
    );
    fs::write(dir.join("meta.txt"), meta)?;

    let mut csv = String::from("identity,camera");
    for i in 0..ds.dim {
        csv.push_str(&format!(",f{i}"));
    }
    csv.push('\n');
    for s in &ds.samples {
        let id = match s.identity {
            Some(v) => v as i64,
            None => -1,
        };
        csv.push_str(&format!("{id},{}", s.camera));
        for v in s.x.iter() {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push('\n');
    }
    fs::write(dir.join("samples.csv"), csv)?;
    Ok(())
}

fn meta_get<'a>(map: &'a [(String, String)], key: &str) -> Result<&'a str> {
    map.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Integrity(format!("meta.txt missing key `{key}`")))
}

/// Loads a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<DomainDataset> {
    let meta_raw = fs::read_to_string(dir.join("meta.txt"))?;
    let mut meta = Vec::new();
    for (lineno, line) in meta_raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::Parse {
            line: lineno + 1,
            msg: format!("expected key=value in meta.txt, got `{line}`"),
        })?;
        meta.push((k.trim().to_string(), v.trim().to_string()));
    }
    let dim: usize = parse_meta(&meta, "dim")?;
    let num_identities: usize = parse_meta(&meta, "num_identities")?;
    let num_cameras: usize = parse_meta(&meta, "num_cameras")?;
    let count: usize = parse_meta(&meta, "count")?;
    let domain: DomainTag = meta_get(&meta, "domain")?.parse()?;

    let csv = fs::read_to_string(dir.join("samples.csv"))?;
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "samples.csv is empty".into(),
    })?;
    let expected_header = {
        let mut h = String::from("identity,camera");
        for i in 0..dim {
            h.push_str(&format!(",f{i}"));
        }
        h
    };
    if header.trim() != expected_header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }

    let mut samples = Vec::with_capacity(count);
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Integrity(format!(
                "row {} has {} feature values, expected {}",
                lineno + 1,
                fields.len().saturating_sub(2),
                dim
            )));
        }
        let id_raw: i64 = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad identity `{}`", fields[0]),
        })?;
        let identity = if id_raw < 0 {
            None
        } else {
            if (id_raw as usize) >= num_identities {
                return Err(Error::Integrity(format!(
                    "row {}: identity {} out of range [0, {})",
                    lineno + 1,
                    id_raw,
                    num_identities
                )));
            }
            Some(id_raw as u32)
        };
        let camera: u32 = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad camera `{}`", fields[1]),
        })?;
        if camera as usize >= num_cameras {
            return Err(Error::Integrity(format!(
                "row {}: camera {} out of range [0, {})",
                lineno + 1,
                camera,
                num_cameras
            )));
        }
        let mut x = Array1::<f64>::zeros(dim);
        for (i, field) in fields[2..].iter().enumerate() {
            x[i] = field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad feature value `{field}`"),
            })?;
        }
        samples.push(Sample { x, identity, camera });
    }
    if samples.len() != count {
        return Err(Error::Integrity(format!(
            "meta.txt declares count={} but samples.csv has {} rows",
            count,
            samples.len()
        )));
    }
    Ok(DomainDataset {
        samples,
        num_identities,
        num_cameras,
        domain,
        dim,
    })
}

fn parse_meta<T: FromStr>(meta: &[(String, String)], key: &str) -> Result<T> {
    let raw = meta_get(meta, key)?;
    raw.parse()
        .map_err(|_| Error::Integrity(format!("meta.txt key `{key}` has bad value `{raw}`")))
}

/// Draws P distinct classes and K samples per class; classes with fewer than
/// K members are sampled with replacement. Output length is exactly P*K.
pub fn pk_batch(labels: &[u32], p: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if p == 0 || k == 0 {
        return Err(Error::Domain("pk_batch: P and K must be positive".into()));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < p {
        return Err(Error::Sampling(format!(
            "pk_batch: need {} classes but only {} exist",
            p,
            classes.len()
        )));
    }
    classes.shuffle(rng);
    classes.truncate(p);
    classes.sort_unstable();

    let mut batch = Vec::with_capacity(p * k);
    for class in classes {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() >= k {
            let mut pool = members;
            pool.shuffle(rng);
            batch.extend_from_slice(&pool[..k]);
        } else {
            for _ in 0..k {
                batch.push(members[rng.random_range(0..members.len())]);
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small_spec() -> DomainSpec {
        DomainSpec {
            num_identities: 32,
            samples_per_identity: 8,
            num_cameras: 2,
            input_dim: 4,
            identity_spread: 0.1,
            camera_shift_scale: 0.05,
            transform: DomainTransform::identity(4),
            rng_seed: 42,
            domain: DomainTag::Source,
        }
    }

    #[test]
    fn generate_count_matches_combinatorics() {
        let ds = generate_domain(&small_spec()).unwrap();
        assert_eq!(ds.len(), 32 * 8 * 2);
    }

    #[test]
    fn noiseless_limit_collapses_identities() {
        let mut spec = small_spec();
        spec.identity_spread = 1e-12;
        spec.camera_shift_scale = 0.0;
        let ds = generate_domain(&spec).unwrap();
        let first: BTreeMap<u32, &Array1<f64>> = ds
            .samples
            .iter()
            .map(|s| (s.identity.unwrap(), &s.x))
            .collect();
        for s in &ds.samples {
            let anchor = first[&s.identity.unwrap()];
            for (a, b) in s.x.iter().zip(anchor.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seed_changes_values_not_schema() {
        let a = generate_domain(&small_spec()).unwrap();
        let mut spec = small_spec();
        spec.rng_seed = 43;
        let b = generate_domain(&spec).unwrap();
        assert_eq!(a.len(), b.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.identity, sb.identity);
            assert_eq!(sa.camera, sb.camera);
        }
        assert!(a.samples.iter().zip(&b.samples).any(|(sa, sb)| sa.x != sb.x));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_domain(&small_spec()).unwrap();
        let b = generate_domain(&small_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_identity_under_every_camera() {
        let ds = generate_domain(&small_spec()).unwrap();
        for id in 0..32u32 {
            for cam in 0..2u32 {
                assert!(ds
                    .samples
                    .iter()
                    .any(|s| s.identity == Some(id) && s.camera == cam));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let ds = generate_domain(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn short_row_is_integrity_error_naming_row() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("meta.txt"),
            "dim=4\nnum_identities=1\nnum_cameras=1\ndomain=SOURCE\ncount=1\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("samples.csv"),
            "identity,camera,f0,f1,f2,f3\n0,0,1.0,2.0,3.0\n",
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("expected integrity error, got {other}"),
        }
    }

    #[test]
    fn hand_written_two_sample_file_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("meta.txt"),
            "dim=2\nnum_identities=2\nnum_cameras=1\ndomain=TARGET\ncount=2\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("samples.csv"),
            "identity,camera,f0,f1\n0,0,1.5,-2.5\n-1,0,0.25,0.75\n",
        )
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0].identity, Some(0));
        assert_eq!(ds.samples[0].x.to_vec(), vec![1.5, -2.5]);
        assert_eq!(ds.samples[1].identity, None);
        assert_eq!(ds.samples[1].x.to_vec(), vec![0.25, 0.75]);
    }

    #[test]
    fn count_mismatch_is_integrity_error() {
        let ds = generate_domain(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let meta = fs::read_to_string(dir.path().join("meta.txt"))
            .unwrap()
            .replace("count=512", "count=511");
        fs::write(dir.path().join("meta.txt"), meta).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn pk_minimal_batch() {
        let labels = vec![3u32, 5, 3, 7];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = pk_batch(&labels, 1, 1, &mut rng).unwrap();
        assert_eq!(batch.len(), 1);
    }

    #[test]
    fn pk_16x4_has_each_class_four_times() {
        let labels: Vec<u32> = (0..20u32).flat_map(|c| std::iter::repeat_n(c, 10)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = pk_batch(&labels, 16, 4, &mut rng).unwrap();
        assert_eq!(batch.len(), 64);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &i in &batch {
            *counts.entry(labels[i]).or_default() += 1;
        }
        assert_eq!(counts.len(), 16);
        assert!(counts.values().all(|&c| c == 4));
    }

    #[test]
    fn pk_small_class_samples_with_replacement() {
        // Class 1 has 2 members; K=4 must repeat them.
        let labels = vec![0u32, 0, 0, 0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = pk_batch(&labels, 2, 4, &mut rng).unwrap();
        let ones: Vec<usize> = batch.iter().copied().filter(|&i| labels[i] == 1).collect();
        assert_eq!(ones.len(), 4);
        assert!(ones.iter().all(|&i| i == 4 || i == 5));
    }

    #[test]
    fn pk_too_few_classes_errors() {
        let labels = vec![0u32, 0, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            pk_batch(&labels, 3, 2, &mut rng),
            Err(Error::Sampling(_))
        ));
    }
}
