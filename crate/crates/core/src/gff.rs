//! Exact samplers of the zero-boundary Gaussian free field.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{Network, WeightedGraph};
use crate::potential::{Domain, PotentialSolve};
use crate::rng::{Purpose, SampleKey};
use crate::Error;

/// One realisation of the field over all vertices of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub domain_tag: u64,
    pub values: Vec<f64>,
    pub seed: u64,
    pub sample_index: u64,
}

impl FieldSample {
    #[inline]
    pub fn at(&self, x: usize) -> f64 {
        self.values[x]
    }
}

/// Draws the field for `key`. Each call with the same key returns the same
/// sample; distinct sample indices give independent samples.
pub fn sample<N: Network>(domain: &Domain<N>, key: SampleKey) -> FieldSample {
    let mut rng = key.rng(Purpose::Field, 0);
    let mut z: Vec<f64> = (0..domain.interior_len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    FieldSample {
        domain_tag: domain.net.tag(),
        values: domain.correlate(&mut z),
        seed: key.seed,
        sample_index: key.sample,
    }
}

/// Samples the field on `domain` conditionally on its values on `set`.
///
/// Returns the harmonic extension of the data plus an independent
/// zero-boundary field on the domain with `set` added to the boundary.
pub fn conditional_resample(
    domain: &Domain<WeightedGraph>,
    set: &[usize],
    values: &[f64],
    key: SampleKey,
) -> Result<FieldSample, Error> {
    if set.is_empty() {
        return Ok(sample(domain, key));
    }
    if set.len() != values.len() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Set(
            "boundary data must be finite and match the set".into(),
        ));
    }
    let g = &domain.net;
    if let Some(&x) = set.iter().find(|&&x| x >= g.n() || g.is_boundary(x)) {
        return Err(Error::Set(format!("vertex {x} is not interior")));
    }
    let mean = domain.harmonic_extension(set, values)?;
    let mut boundary = g.boundary_flags().to_vec();
    for &x in set {
        boundary[x] = true;
    }
    let edges: Vec<_> = g.edges().collect();
    let reduced = WeightedGraph::from_edges(g.n(), &edges, boundary, g.origin())?;
    let inner = Domain::direct(reduced)?;
    let mut rng = key.rng(Purpose::Resample, 0);
    let mut z: Vec<f64> = (0..inner.interior_len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let fluct = inner.correlate(&mut z);
    Ok(FieldSample {
        domain_tag: g.tag(),
        values: mean.iter().zip(&fluct).map(|(m, f)| m + f).collect(),
        seed: key.seed,
        sample_index: key.sample,
    })
}

/// `M_K = sum_x e_K(x) phi_x`.
pub fn cluster_functional_m(field: &FieldSample, solve: &PotentialSolve) -> Result<f64, Error> {
    if field.domain_tag != solve.domain_tag {
        return Err(Error::DomainMismatch);
    }
    Ok(solve.e.iter().map(|&(x, e)| e * field.values[x]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, BoxLattice, LatticeSpec};
    use crate::stats::MeanVar;

    #[test]
    fn same_key_same_field() {
        let d = Domain::spectral(BoxLattice::new(3, 3));
        let a = sample(&d, SampleKey::new(1, 5));
        let b = sample(&d, SampleKey::new(1, 5));
        let c = sample(&d, SampleKey::new(1, 6));
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert!(a
            .values
            .iter()
            .enumerate()
            .all(|(x, &v)| !d.net.is_boundary(x) || v == 0.0));
    }

    #[test]
    fn neighbour_covariance_matches_green() {
        let d = Domain::spectral(BoxLattice::new(3, 3));
        let o = d.net.origin();
        let e = o + 1;
        let mut acc = MeanVar::default();
        let mut mean0 = MeanVar::default();
        for i in 0..20_000 {
            let f = sample(&d, SampleKey::new(2, i));
            acc.push(f.at(o) * f.at(e));
            mean0.push(f.at(o));
        }
        assert!((acc.mean() - d.green(o, e)).abs() < 4.0 * acc.stderr());
        assert!(mean0.mean().abs() < 4.0 * mean0.stderr());
    }

    #[test]
    fn functional_m_of_singleton() {
        let d = Domain::spectral(BoxLattice::new(3, 3));
        let o = d.net.origin();
        let ps = d.equilibrium_measure(&[o]).unwrap();
        let f = sample(&d, SampleKey::new(3, 0));
        let m = cluster_functional_m(&f, &ps).unwrap();
        assert!((m - f.at(o) / d.green(o, o)).abs() < 1e-10);
        let other = Domain::spectral(BoxLattice::new(3, 4));
        let f2 = sample(&other, SampleKey::new(3, 0));
        assert!(matches!(
            cluster_functional_m(&f2, &ps),
            Err(Error::DomainMismatch)
        ));
    }

    #[test]
    fn conditional_mean_is_scaled_hitting_potential() {
        let g = build_lattice(&LatticeSpec::unit(3, 3, 2)).unwrap();
        let d = Domain::direct(g).unwrap();
        let o = d.net.origin();
        let h = d.hitting_potential(&[o]).unwrap();
        let ext = d.harmonic_extension(&[o], &[2.5]).unwrap();
        for (a, b) in ext.iter().zip(&h) {
            assert!((a - 2.5 * b).abs() < 1e-10);
        }
        let f = conditional_resample(&d, &[o], &[2.5], SampleKey::new(4, 0)).unwrap();
        assert_eq!(f.at(o), 2.5);
    }
}
