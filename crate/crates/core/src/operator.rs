//! Cosine-basis representation of the symmetrized surface operator `V T̃ V`.
//!
//! Rows and columns are indexed by the cosine modes `m, n = 1..=N`; the
//! constant mode is dropped because every entry in its row and column
//! vanishes.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub const DEFAULT_TRUNCATION: usize = 2000;
pub const DEFAULT_MAX_TRUNCATION: usize = 8000;

const CACHE_MAGIC: &[u8; 4] = b"VTVM";
const CACHE_VERSION: u32 = 1;
const CACHE_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    /// Largest truncation accepted before refusing to allocate.
    pub max_n: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            max_n: DEFAULT_MAX_TRUNCATION,
        }
    }
}

/// Dense symmetric `N × N` matrix of `V T̃ V` in the cosine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    n_trunc: usize,
    /// Row-major; entry `(i, j)` couples modes `i + 1` and `j + 1`.
    entries: Vec<f64>,
    params: ModelParams,
}

/// Raw inner products `⟨ψ, cos mθ⟩` for `m = 1..=N`, with `ψ = V T̃(1)`.
///
/// The projection on the constant mode is zero and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiProjection {
    pub coords: Vec<f64>,
}

impl OperatorMatrix {
    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Entry coupling cosine modes `m` and `n` (both 1-based).
    pub fn entry(&self, m: usize, n: usize) -> f64 {
        assert!((1..=self.n_trunc).contains(&m) && (1..=self.n_trunc).contains(&n));
        self.entries[(m - 1) * self.n_trunc + (n - 1)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let n = self.n_trunc;
        &self.entries[(m - 1) * n..m * n]
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_trunc);
        self.entries
            .chunks_exact(self.n_trunc)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Frobenius norm, an upper bound on the spectral norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub(crate) fn to_faer(&self) -> faer::Mat<f64> {
        let n = self.n_trunc;
        faer::Mat::from_fn(n, n, |i, j| self.entries[i * n + j])
    }

    /// Writes the matrix as a little-endian binary cache file.
    ///
    /// Layout: `"VTVM"`, version `u32`, `N` `u32`, a reserved zero `u32`,
    /// then `N²` row-major `f64` values.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = u32::try_from(self.n_trunc)
            .map_err(|_| Error::Format("truncation does not fit in u32".into()))?;
        let mut out = Vec::with_capacity(CACHE_HEADER_LEN + 8 * self.entries.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for x in &self.entries {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Reads a cache file written for `params`.
    ///
    /// The file does not record the parameters, so the diagonal is
    /// reassembled and compared bitwise to reject a cache built for a
    /// different parameter set.
    pub fn read_cache(path: impl AsRef<Path>, params: &ModelParams) -> Result<Self> {
        let params = params.validate()?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < CACHE_HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
            return Err(Error::Format("missing VTVM header".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        if word(1) != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported version {}", word(1))));
        }
        let n = word(2) as usize;
        if bytes.len() != CACHE_HEADER_LEN + 8 * n * n {
            return Err(Error::Format(format!(
                "expected {} bytes for N = {n}, found {}",
                CACHE_HEADER_LEN + 8 * n * n,
                bytes.len()
            )));
        }
        let entries: Vec<f64> = bytes[CACHE_HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let kernel = Kernel::new(&params, n);
        for m in 1..=n {
            if entries[(m - 1) * n + (m - 1)].to_bits() != kernel.entry(m, m).to_bits() {
                return Err(Error::Format(
                    "cache was assembled for different parameters".into(),
                ));
            }
        }
        Ok(Self {
            n_trunc: n,
            entries,
            params,
        })
    }
}

/// `(1 − a)^n` for `n = 0..=len`, by repeated multiplication with
/// subnormal results flushed to zero.
fn retention_powers(a: f64, len: usize) -> Vec<f64> {
    let base = 1.0 - a;
    let mut out = Vec::with_capacity(len + 1);
    let mut q = 1.0;
    for _ in 0..=len {
        out.push(q);
        q *= base;
        if q < f64::MIN_POSITIVE {
            q = 0.0;
        }
    }
    out
}

/// Precomputed factors shared by every entry.
struct Kernel {
    free_arc: f64,
    point_target: bool,
    /// `√(1 − (1 − a)^n)`, index `n`.
    v: Vec<f64>,
    /// `sin(kε)`, index `k = 0..=2N`.
    sines: Vec<f64>,
}

impl Kernel {
    fn new(p: &ModelParams, n: usize) -> Self {
        let v = retention_powers(p.a, n)
            .into_iter()
            .map(|q| (1.0 - q).sqrt())
            .collect();
        let sines = (0..=2 * n).map(|k| (k as f64 * p.epsilon).sin()).collect();
        Self {
            free_arc: p.free_arc(),
            point_target: p.epsilon == 0.0,
            v,
            sines,
        }
    }

    /// Entry for 1-based modes; symmetric because the arguments are ordered
    /// before any arithmetic.
    fn entry(&self, m: usize, n: usize) -> f64 {
        let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
        if self.free_arc == 0.0 {
            // The whole circle is absorbing and T̃ vanishes.
            return 0.0;
        }
        let scale = self.v[lo] * self.v[hi] / PI;
        if lo == hi {
            let k = lo as f64;
            let bracket = if self.point_target {
                PI
            } else {
                self.free_arc + self.sines[2 * lo] / (2.0 * k)
            };
            return scale * bracket / (k * k);
        }
        if self.point_target {
            return 0.0;
        }
        let (lo_f, hi_f) = (lo as f64, hi as f64);
        let diff = hi - lo;
        let sum = hi + lo;
        let parity = if sum % 2 == 0 { 1.0 } else { -1.0 };
        let bracket = self.sines[diff] / diff as f64 - self.sines[sum] / sum as f64;
        -scale * parity * bracket / (lo_f * hi_f)
    }
}

/// Assembles the truncated `N × N` matrix of `V T̃ V`.
pub fn assemble_vtv(p: &ModelParams, n_trunc: usize) -> Result<OperatorMatrix> {
    assemble_vtv_with(p, n_trunc, AssemblyOptions::default())
}

pub fn assemble_vtv_with(
    p: &ModelParams,
    n_trunc: usize,
    opts: AssemblyOptions,
) -> Result<OperatorMatrix> {
    let params = p.validate()?;
    if n_trunc == 0 {
        return Err(Error::Unsupported("truncation must be at least 1".into()));
    }
    if n_trunc > opts.max_n {
        return Err(Error::Resource {
            requested: n_trunc,
            cap: opts.max_n,
        });
    }
    let kernel = Kernel::new(&params, n_trunc);
    let mut entries = vec![0.0; n_trunc * n_trunc];
    entries
        .par_chunks_mut(n_trunc)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = kernel.entry(i + 1, j + 1);
            }
        });
    Ok(OperatorMatrix {
        n_trunc,
        entries,
        params,
    })
}

/// Inner products `⟨V T̃(1), cos mθ⟩` for `m = 1..=N`.
pub fn psi_projection(p: &ModelParams, n_trunc: usize) -> Result<PsiProjection> {
    let p = p.validate()?;
    if n_trunc == 0 {
        return Err(Error::Unsupported("truncation must be at least 1".into()));
    }
    let free_arc = p.free_arc();
    if free_arc == 0.0 {
        return Ok(PsiProjection {
            coords: vec![0.0; n_trunc],
        });
    }
    let powers = retention_powers(p.a, n_trunc);
    let coords = (1..=n_trunc)
        .map(|m| {
            let mf = m as f64;
            let phase = mf * p.epsilon;
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            (1.0 - powers[m]).sqrt() * sign / (mf * mf)
                * (free_arc * phase.cos() + phase.sin() / mf)
        })
        .collect();
    Ok(PsiProjection { coords })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn diagonal_nondecreasing_in_a(a1 in 0.001f64..1.0, a2 in 0.001f64..1.0, eps in 0.0f64..3.0) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let m_lo = assemble_vtv(&ModelParams::new(lo, eps, 1.0, 1.0, 0.0).unwrap(), 16).unwrap();
            let m_hi = assemble_vtv(&ModelParams::new(hi, eps, 1.0, 1.0, 0.0).unwrap(), 16).unwrap();
            for i in 1..=16 {
                prop_assert!(m_hi.entry(i, i) >= m_lo.entry(i, i));
            }
        }

        #[test]
        fn assembly_is_bitwise_symmetric(a in 0.001f64..1.0, eps in 0.0f64..3.14, n in 1usize..40) {
            let m = assemble_vtv(&ModelParams::new(a, eps, 1.0, 1.0, 0.0).unwrap(), n).unwrap();
            for i in 1..=n {
                for j in 1..=n {
                    prop_assert_eq!(m.entry(i, j).to_bits(), m.entry(j, i).to_bits());
                }
            }
        }
    }
}
