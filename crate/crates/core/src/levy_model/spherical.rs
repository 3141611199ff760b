use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// One point mass of a spherical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub direction: Vec<f64>,
    pub weight: f64,
}

/// Finite measure on the unit sphere giving the angular part of a Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub enum SphericalMeasure {
    Atoms(Vec<Atom>),
    /// Rotation-invariant measure with the given total mass.
    Uniform { total_mass: f64 },
}

const UNIT_TOL: f64 = 1e-12;

/// Surface area of the unit sphere in `R^dim`.
pub fn sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// `E |<e, theta>|^alpha` for `theta` uniform on the unit sphere of `R^dim`.
pub fn uniform_abs_moment(dim: usize, alpha: f64) -> f64 {
    let d = dim as f64;
    gamma(d / 2.0) * gamma((alpha + 1.0) / 2.0)
        / (std::f64::consts::PI.sqrt() * gamma((d + alpha) / 2.0))
}

impl SphericalMeasure {
    pub fn atoms<I>(atoms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        SphericalMeasure::Atoms(
            atoms
                .into_iter()
                .map(|(direction, weight)| Atom { direction, weight })
                .collect(),
        )
    }

    /// Normalized surface measure (total mass = area of the sphere).
    pub fn uniform_surface(dim: usize) -> Self {
        SphericalMeasure::Uniform {
            total_mass: sphere_area(dim),
        }
    }

    /// `sum_i w (delta_{e_i} + delta_{-e_i})`.
    pub fn coordinate_axes(dim: usize, weight: f64) -> Self {
        let mut atoms = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = sign;
                atoms.push(Atom {
                    direction: e,
                    weight,
                });
            }
        }
        SphericalMeasure::Atoms(atoms)
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SphericalMeasure::Atoms(a) => a.iter().map(|a| a.weight).sum(),
            SphericalMeasure::Uniform { total_mass } => *total_mass,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            SphericalMeasure::Atoms(a) => SphericalMeasure::Atoms(
                a.iter()
                    .map(|a| Atom {
                        direction: a.direction.clone(),
                        weight: a.weight * factor,
                    })
                    .collect(),
            ),
            SphericalMeasure::Uniform { total_mass } => SphericalMeasure::Uniform {
                total_mass: total_mass * factor,
            },
        }
    }

    /// Checks atom normalization and weights. Does not check span or symmetry.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SphericalMeasure::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::model("spherical measure has no atoms"));
                }
                for (i, a) in atoms.iter().enumerate() {
                    if a.direction.len() != dim {
                        return Err(Error::model(format!(
                            "atom {i} has dimension {} (expected {dim})",
                            a.direction.len()
                        )));
                    }
                    let norm = a.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !((norm - 1.0).abs() <= UNIT_TOL) {
                        return Err(Error::model(format!(
                            "atom {i} is not a unit vector (norm {norm})"
                        )));
                    }
                    if !(a.weight > 0.0 && a.weight.is_finite()) {
                        return Err(Error::model(format!(
                            "atom {i} has non-positive weight {}",
                            a.weight
                        )));
                    }
                }
                Ok(())
            }
            SphericalMeasure::Uniform { total_mass } => {
                if *total_mass > 0.0 && total_mass.is_finite() {
                    Ok(())
                } else {
                    Err(Error::model("uniform spherical measure needs positive mass"))
                }
            }
        }
    }

    /// `int theta theta^T mu(d theta)`.
    pub fn second_moment(&self, dim: usize) -> DMatrix<f64> {
        match self {
            SphericalMeasure::Atoms(atoms) => {
                let mut m = DMatrix::zeros(dim, dim);
                for a in atoms {
                    for i in 0..dim {
                        for j in 0..dim {
                            m[(i, j)] += a.weight * a.direction[i] * a.direction[j];
                        }
                    }
                }
                m
            }
            SphericalMeasure::Uniform { total_mass } => {
                DMatrix::identity(dim, dim) * (total_mass / dim as f64)
            }
        }
    }

    /// True when the support is not contained in a proper linear subspace.
    pub fn spans(&self, dim: usize) -> bool {
        let m = self.second_moment(dim);
        let trace = m.trace();
        if !(trace > 0.0) {
            return false;
        }
        let eig = SymmetricEigen::new(m);
        eig.eigenvalues.iter().all(|&v| v > 1e-12 * trace)
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            SphericalMeasure::Uniform { .. } => true,
            SphericalMeasure::Atoms(atoms) => {
                let total = self.total_mass();
                let mass_along = |dir: &[f64], sign: f64| -> f64 {
                    atoms
                        .iter()
                        .filter(|b| {
                            dir.iter()
                                .zip(&b.direction)
                                .all(|(x, y)| (x - sign * y).abs() <= 1e-10)
                        })
                        .map(|b| b.weight)
                        .sum()
                };
                atoms.iter().all(|a| {
                    (mass_along(&a.direction, 1.0) - mass_along(&a.direction, -1.0)).abs()
                        <= 1e-10 * total
                })
            }
        }
    }

    /// In one dimension the sphere is `{-1, 1}`; rewrite `Uniform` as atoms there.
    pub(crate) fn resolved(&self, dim: usize) -> Self {
        match self {
            SphericalMeasure::Uniform { total_mass } if dim == 1 => SphericalMeasure::atoms([
                (vec![1.0], total_mass / 2.0),
                (vec![-1.0], total_mass / 2.0),
            ]),
            other => other.clone(),
        }
    }

    /// Groups atoms into antipodal pairs `(direction, weight of each side)`.
    /// Assumes the measure is symmetric.
    pub(crate) fn antipodal_pairs(&self) -> Vec<(Vec<f64>, f64)> {
        let SphericalMeasure::Atoms(atoms) = self else {
            return Vec::new();
        };
        let mut used = vec![false; atoms.len()];
        let mut pairs = Vec::new();
        for i in 0..atoms.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut weight = atoms[i].weight;
            let mut mirror = 0.0;
            for j in (i + 1)..atoms.len() {
                if used[j] {
                    continue;
                }
                let same = atoms[i]
                    .direction
                    .iter()
                    .zip(&atoms[j].direction)
                    .all(|(x, y)| (x - y).abs() <= 1e-10);
                let opposite = atoms[i]
                    .direction
                    .iter()
                    .zip(&atoms[j].direction)
                    .all(|(x, y)| (x + y).abs() <= 1e-10);
                if same {
                    weight += atoms[j].weight;
                    used[j] = true;
                } else if opposite {
                    mirror += atoms[j].weight;
                    used[j] = true;
                }
            }
            pairs.push((atoms[i].direction.clone(), 0.5 * (weight + mirror)));
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_constants() {
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((uniform_abs_moment(1, 1.3) - 1.0).abs() < 1e-12);
        // E|cos phi|^2 on the circle is 1/2
        assert!((uniform_abs_moment(2, 2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_measure_does_not_span() {
        let m = SphericalMeasure::atoms([(vec![1.0, 0.0], 1.0)]);
        assert!(m.validate(2).is_ok());
        assert!(!m.spans(2));
        assert!(!m.is_symmetric());
        assert!(SphericalMeasure::coordinate_axes(2, 1.0).spans(2));
        assert!(SphericalMeasure::coordinate_axes(3, 0.5).is_symmetric());
    }

    #[test]
    fn non_unit_atom_rejected() {
        let m = SphericalMeasure::atoms([(vec![1.0, 1e-4], 1.0)]);
        assert!(matches!(m.validate(2), Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn antipodal_pairs_merge_duplicates() {
        let m = SphericalMeasure::coordinate_axes(2, 0.25);
        let pairs = m.antipodal_pairs();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|(_, w)| (*w - 0.25).abs() < 1e-15));
    }
}
