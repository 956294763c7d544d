//! Path ensembles on the current rayon pool.
//!
//! Paths are independent and keyed by their index, results come back in index
//! order, and every reduction afterwards is a plain sequential loop, so the
//! output does not depend on the number of workers.

use rayon::prelude::*;
use shelab_core::Error;

use crate::LabError;

#[derive(Debug)]
pub struct Ensemble<T> {
    /// `(path_index, result)` in increasing path order.
    pub results: Vec<(u64, T)>,
    /// Paths that produced a non-finite value.
    pub blown: Vec<u64>,
}

impl<T> Ensemble<T> {
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.results.iter().map(|(_, v)| v)
    }
}

/// Runs `f(path_index)` for every path. Blow-ups are excluded and counted;
/// more than `quota * paths` of them, or any other error, fails the ensemble.
pub fn run_paths<T, F>(paths: usize, quota: f64, f: F) -> Result<Ensemble<T>, LabError>
where
    T: Send,
    F: Fn(u64) -> shelab_core::Result<T> + Sync,
{
    let raw: Vec<(u64, shelab_core::Result<T>)> = (0..paths as u64).into_par_iter().map(|p| (p, f(p))).collect();
    let mut results = Vec::with_capacity(paths);
    let mut blown = Vec::new();
    for (p, r) in raw {
        match r {
            Ok(v) => results.push((p, v)),
            Err(Error::BlowUp { step, cell, .. }) => {
                log::warn!("path {p} blew up at step {step}, cell {cell}; excluded");
                blown.push(p);
            }
            Err(e) => return Err(LabError::Numerical(format!("path {p}: {e}"))),
        }
    }
    if results.is_empty() || blown.len() as f64 > quota * paths as f64 {
        return Err(LabError::Numerical(format!(
            "{} of {paths} paths blew up, above the exclusion quota {quota}",
            blown.len()
        )));
    }
    Ok(Ensemble { results, blown })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_quota() {
        let e = run_paths(50, 0.1, |p| Ok(p * p)).unwrap();
        assert!(e.results.iter().enumerate().all(|(i, (p, v))| *p == i as u64 && *v == p * p));

        let blow = |p: u64| if p % 4 == 0 { Err(Error::BlowUp { path: Some(p), step: 1, cell: 0 }) } else { Ok(p) };
        let e = run_paths(20, 0.25, blow).unwrap();
        assert_eq!(e.blown, vec![0, 4, 8, 12, 16]);
        assert!(matches!(run_paths(20, 0.2, blow), Err(LabError::Numerical(_))));
    }
}
