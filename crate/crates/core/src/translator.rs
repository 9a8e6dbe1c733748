//! Identity-preserving affine domain translation behind a stable fit/translate
//! interface.
//!
//! Fitting matches first and second moments: samples are expressed in the
//! source's principal axes, rescaled by the per-axis standard-deviation ratio,
//! and re-expressed in the destination's principal axes. The fitted transform
//! therefore reproduces the destination mean and covariance exactly on the
//! fitting data. When the resulting map is expressible as a plain
//! rotate-after-scale (`basis` = identity), it is canonicalized to that form.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::data::{DomainDataset, DomainTag, Sample};
use crate::error::{Error, Result};
use crate::numerics::linalg::{eigh, gaussian};

/// Affine translator: `x' = rotation . (scale * (basis . x)) + offset`.
///
/// `basis` and `rotation` are orthogonal, `scale` entries strictly positive,
/// so the map is always invertible. `basis` defaults to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorParams {
    pub basis: Array2<f64>,
    pub scale: Array1<f64>,
    pub rotation: Array2<f64>,
    pub offset: Array1<f64>,
}

impl TranslatorParams {
    pub fn identity(dim: usize) -> Self {
        TranslatorParams {
            basis: Array2::eye(dim),
            scale: Array1::ones(dim),
            rotation: Array2::eye(dim),
            offset: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Applies the forward map to one vector.
    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        let in_basis = self.basis.dot(x);
        self.rotation.dot(&(&in_basis * &self.scale)) + &self.offset
    }

    /// Applies the inverse map (well-defined: orthogonal factors, positive scale).
    pub fn apply_inverse(&self, y: &Array1<f64>) -> Array1<f64> {
        let unrotated = self.rotation.t().dot(&(y - &self.offset));
        self.basis.t().dot(&(&unrotated / &self.scale))
    }
}

fn mean_and_cov(samples: &[Array1<f64>]) -> (Array1<f64>, Array2<f64>) {
    let dim = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = Array1::<f64>::zeros(dim);
    for s in samples {
        mean += s;
    }
    mean /= n;
    let mut cov = Array2::<f64>::zeros((dim, dim));
    for s in samples {
        let d = s - &mean;
        for i in 0..dim {
            for j in i..dim {
                cov[[i, j]] += d[i] * d[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[[i, j]] /= n;
            cov[[j, i]] = cov[[i, j]];
        }
    }
    (mean, cov)
}

/// Fits a moment-matching translator from `src` samples to `dst` samples.
pub fn fit_translator(src: &[Array1<f64>], dst: &[Array1<f64>]) -> Result<TranslatorParams> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::Contract("fit_translator: empty sample set".into()));
    }
    let dim = src[0].len();
    if dst[0].len() != dim
        || src.iter().any(|s| s.len() != dim)
        || dst.iter().any(|s| s.len() != dim)
    {
        return Err(Error::Shape("fit_translator: dimension mismatch".into()));
    }
    let (mu_src, cov_src) = mean_and_cov(src);
    let (mu_dst, cov_dst) = mean_and_cov(dst);
    for i in 0..dim {
        if cov_src[[i, i]] < 1e-15 {
            return Err(Error::Degenerate(format!(
                "fit_translator: zero variance in src coordinate {i}"
            )));
        }
    }
    let (lam_src, u_src) = eigh(&cov_src)?;
    let (lam_dst, u_dst) = eigh(&cov_dst)?;
    let ratio: Array1<f64> = lam_src
        .iter()
        .zip(lam_dst.iter())
        .map(|(&ls, &ld)| (ld.max(1e-18) / ls.max(1e-18)).sqrt())
        .collect();

    // Polar factors of A = U_dst diag(ratio) U_src^T:
    //   R = U_dst U_src^T,   P = U_src diag(ratio) U_src^T (symmetric positive).
    // When P is diagonal the plain rotate-after-scale form represents A.
    let rotation_polar = u_dst.dot(&u_src.t());
    let mut p = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += u_src[[i, k]] * ratio[k] * u_src[[j, k]];
            }
            p[[i, j]] = s;
        }
    }
    let max_scale = ratio.iter().cloned().fold(f64::MIN, f64::max);
    let mut off_diag: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                off_diag = off_diag.max(p[[i, j]].abs());
            }
        }
    }
    let params = if off_diag < 1e-9 * max_scale.max(1.0) {
        let scale: Array1<f64> = (0..dim).map(|i| p[[i, i]]).collect();
        let offset = &mu_dst - &rotation_polar.dot(&(&scale * &mu_src));
        TranslatorParams {
            basis: Array2::eye(dim),
            scale,
            rotation: rotation_polar,
            offset,
        }
    } else {
        let basis: Array2<f64> = u_src.t().to_owned();
        let offset = &mu_dst - &u_dst.dot(&(&ratio * &basis.dot(&mu_src)));
        TranslatorParams {
            basis,
            scale: ratio,
            rotation: u_dst,
            offset,
        }
    };
    Ok(params)
}

/// Style-transfers one sample; identity label and camera are copied unchanged.
pub fn translate(params: &TranslatorParams, s: &Sample, new_tag: DomainTag) -> Sample {
    let _ = new_tag; // tag lives on the dataset; kept for call-site clarity
    Sample {
        x: params.apply(&s.x),
        identity: s.identity,
        camera: s.camera,
    }
}

/// Maps [`translate`] over a whole dataset; the output count equals the input count.
pub fn translate_dataset(
    params: &TranslatorParams,
    ds: &DomainDataset,
    new_tag: DomainTag,
) -> DomainDataset {
    DomainDataset {
        samples: ds
            .samples
            .iter()
            .map(|s| translate(params, s, new_tag))
            .collect(),
        num_identities: ds.num_identities,
        num_cameras: ds.num_cameras,
        domain: new_tag,
        dim: ds.dim,
    }
}

/// Emulates an imperfect (GAN-like) translator by perturbing the fitted
/// parameters with seeded noise of relative magnitude `noise`.
pub fn degrade_translator(params: &mut TranslatorParams, noise: f64, rng: &mut ChaCha8Rng) {
    if noise <= 0.0 {
        return;
    }
    for s in params.scale.iter_mut() {
        *s *= (1.0 + noise * gaussian(rng)).max(0.05);
    }
    let offset_mag = params
        .offset
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for o in params.offset.iter_mut() {
        *o += noise * offset_mag * gaussian(rng);
    }
}

/// Writes the translator in the same key=value + CSV-row text style as datasets.
pub fn save_translator(params: &TranslatorParams, path: &Path) -> Result<()> {
    let dim = params.dim();
    let mut out = format!("dim={dim}\n");
    out.push_str(&format!("scale={}\n", csv_row(&params.scale)));
    out.push_str(&format!("offset={}\n", csv_row(&params.offset)));
    for i in 0..dim {
        out.push_str(&format!("rotation{i}={}\n", csv_row(&params.rotation.row(i).to_owned())));
    }
    for i in 0..dim {
        out.push_str(&format!("basis{i}={}\n", csv_row(&params.basis.row(i).to_owned())));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_translator(path: &Path) -> Result<TranslatorParams> {
    let raw = fs::read_to_string(path)?;
    let mut kv = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::Parse {
            line: lineno + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        kv.push((k.to_string(), v.to_string(), lineno + 1));
    }
    let get = |key: &str| -> Result<(&str, usize)> {
        kv.iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| Error::Integrity(format!("translator file missing key `{key}`")))
    };
    let dim: usize = {
        let (v, l) = get("dim")?;
        v.parse().map_err(|_| Error::Parse {
            line: l,
            msg: format!("bad dim `{v}`"),
        })?
    };
    let parse_vec = |key: &str| -> Result<Array1<f64>> {
        let (v, l) = get(key)?;
        let vals: std::result::Result<Vec<f64>, _> =
            v.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|_| Error::Parse {
            line: l,
            msg: format!("bad float in `{key}`"),
        })?;
        if vals.len() != dim {
            return Err(Error::Integrity(format!(
                "`{key}` has {} values, expected {dim}",
                vals.len()
            )));
        }
        Ok(Array1::from(vals))
    };
    let scale = parse_vec("scale")?;
    let offset = parse_vec("offset")?;
    let mut rotation = Array2::<f64>::zeros((dim, dim));
    let mut basis = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        rotation.row_mut(i).assign(&parse_vec(&format!("rotation{i}"))?);
        basis.row_mut(i).assign(&parse_vec(&format!("basis{i}"))?);
    }
    Ok(TranslatorParams {
        basis,
        scale,
        rotation,
        offset,
    })
}

fn csv_row(v: &Array1<f64>) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}
