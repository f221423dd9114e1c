//! Reporting and caching helpers for the acceptance run.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use escape_spectral::{assemble_vtv_with, decompose, ModelParams, Result, SpectralData};
use escape_spectral::operator::AssemblyOptions;

/// Outcome of one criterion: a one-line detail either way.
pub type Outcome = std::result::Result<String, String>;

#[derive(Default)]
pub struct Report {
    results: Vec<(String, bool)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, label: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail, ok) = match outcome {
            Ok(d) => ("PASS", d, true),
            Err(d) => ("FAIL", d, false),
        };
        println!("{tag} [{label}] {detail} ({secs:.1} s)");
        self.results.push((label.to_string(), ok));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.results
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Prints the tally and exits non-zero if anything failed.
    pub fn finish(self) -> ! {
        let failed = self.failures();
        println!(
            "{} of {} criteria passed",
            self.results.len() - failed.len(),
            self.results.len()
        );
        if failed.is_empty() {
            std::process::exit(0);
        }
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

/// Decompositions keyed by `(a, ε, N)`; only eigenvalues and weights are kept,
/// so the cache stays small even for large truncations.
#[derive(Default)]
pub struct SpectraCache {
    map: HashMap<(u64, u64, usize), Arc<SpectralData>>,
}

impl SpectraCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// `D1 = D2 = 1`; the spectrum does not depend on either.
    pub fn get(&mut self, a: f64, eps: f64, n: usize) -> Result<Arc<SpectralData>> {
        let key = (a.to_bits(), eps.to_bits(), n);
        if let Some(s) = self.map.get(&key) {
            return Ok(Arc::clone(s));
        }
        let p = ModelParams::new(a, eps, 1.0, 1.0, 0.0)?;
        let m = assemble_vtv_with(&p, n, AssemblyOptions { max_n: n.max(8000) })?;
        let s = Arc::new(decompose(&m)?);
        drop(m);
        self.map.insert(key, Arc::clone(&s));
        Ok(s)
    }
}

/// A copy of `s` with different diffusion coefficients; the spectrum only
/// depends on `a` and `ε`.
pub fn with_coefficients(s: &SpectralData, d1: f64, d2: f64) -> SpectralData {
    let mut out = s.clone();
    out.params.d1 = d1;
    out.params.d2 = d2;
    out
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (l0 + (l1 - l0) * k as f64 / (count - 1) as f64).exp())
        .collect()
}
