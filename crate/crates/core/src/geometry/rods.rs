//! Filling a boundary curve with rods on a square lattice, with seeded
//! random hole removal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BoundaryCurve, Scatterer, Vec2};
use crate::error::{Error, Result};

/// Places rods on a square lattice aligned with the curve's center.
///
/// A lattice point becomes a rod when it lies strictly inside the curve
/// with clearance at least max(lattice_pitch / 2, 2 * rod_radius) to the
/// boundary — the first bound keeps neighbouring cells whole, the second
/// guarantees the cluster containment invariant (one rod radius of margin
/// around the disk). Then round(hole_fraction * count) rods, but never
/// all of them, are removed at positions drawn from a ChaCha8 stream
/// seeded with `seed`; the survivors keep row-major lattice order, so the
/// output is fully deterministic.
pub fn fill_with_rods(
    curve: &BoundaryCurve,
    lattice_pitch: f64,
    rod_radius: f64,
    permittivity: f64,
    hole_fraction: f64,
    seed: u64,
) -> Result<Vec<Scatterer>> {
    if !lattice_pitch.is_finite() || lattice_pitch <= 0.0 {
        return Err(Error::Config(format!(
            "lattice_pitch must be positive, got {lattice_pitch}"
        )));
    }
    if !rod_radius.is_finite() || rod_radius <= 0.0 {
        return Err(Error::Config(format!(
            "rod_radius must be positive, got {rod_radius}"
        )));
    }
    if lattice_pitch <= 2.0 * rod_radius {
        return Err(Error::Config(format!(
            "lattice_pitch {lattice_pitch} must exceed the rod diameter {}",
            2.0 * rod_radius
        )));
    }
    if !(0.0..1.0).contains(&hole_fraction) {
        return Err(Error::Config(format!(
            "hole_fraction must lie in [0, 1), got {hole_fraction}"
        )));
    }
    if !permittivity.is_finite() || permittivity < 1.0 {
        return Err(Error::Domain(format!(
            "relative permittivity must be >= 1, got {permittivity}"
        )));
    }

    let margin = (0.5 * lattice_pitch).max(2.0 * rod_radius);
    let center = curve.center();

    // Bounding box of the curve in lattice indices relative to the center.
    let max_extent = curve.mean_radius() + curve.lobe_amplitude();
    let span = (max_extent / lattice_pitch).ceil() as i64 + 1;

    let mut rods = Vec::new();
    for j in -span..=span {
        for i in -span..=span {
            let p = center + Vec2::new(i as f64 * lattice_pitch, j as f64 * lattice_pitch);
            if curve.inside_dense(p) && curve.distance_to_boundary(p) >= margin {
                rods.push(Scatterer {
                    position: p,
                    radius: rod_radius,
                    permittivity,
                });
            }
        }
    }

    if rods.is_empty() {
        return Err(Error::Degenerate(format!(
            "no lattice point of pitch {lattice_pitch} fits inside the curve \
             with margin {margin}"
        )));
    }

    // Remove round(hole_fraction * count) rods (capped so at least one
    // survives) by a partial Fisher-Yates draw over the index list.
    let n = rods.len();
    let n_remove = ((hole_fraction * n as f64).round() as usize).min(n - 1);
    if n_remove > 0 {
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n_remove {
            let pick = rng.gen_range(i..n);
            indices.swap(i, pick);
        }
        let mut keep = vec![true; n];
        for &removed in &indices[..n_remove] {
            keep[removed] = false;
        }
        let mut kept = Vec::with_capacity(n - n_remove);
        for (rod, keep_it) in rods.into_iter().zip(keep) {
            if keep_it {
                kept.push(rod);
            }
        }
        rods = kept;
    }

    Ok(rods)
}
