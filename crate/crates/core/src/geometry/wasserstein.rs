use crate::error::{Error, Result};
use crate::par::Exec;

use super::flow::{DensityFlow, ProbabilityVector};
use super::grid::TorusGrid;
use super::transport::{d1_distance_lp, grid_transport};

/// Wasserstein-1 distance under the wrapped-L1 ground cost.
///
/// On the circle this is `min_c h * sum_i |D_i - c|`, where `D` is the
/// cumulative mass difference and the optimal shift `c` is its median.
/// Two-dimensional grids go through the transport linear program.
pub fn d1_distance(mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<f64> {
    mu.grid().check_same(nu.grid())?;
    match mu.grid().dim() {
        1 => Ok(circle_d1(mu.grid(), mu.as_slice(), nu.as_slice())),
        _ => d1_distance_lp(mu, nu),
    }
}

/// Same as [`d1_distance`] on raw density slices known to share `grid`.
pub(crate) fn d1_slices(grid: &TorusGrid, a: &[f64], b: &[f64]) -> f64 {
    match grid.dim() {
        1 => circle_d1(grid, a, b),
        _ => grid_transport(grid, a, b),
    }
}

fn circle_d1(grid: &TorusGrid, mu: &[f64], nu: &[f64]) -> f64 {
    let h = grid.h();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = mu
        .iter()
        .zip(nu)
        .map(|(a, b)| {
            acc += (a - b) * h;
            acc
        })
        .collect();
    let mut sorted = cdf.clone();
    sorted.sort_by(f64::total_cmp);
    let shift = sorted[sorted.len() / 2];
    cdf.iter_mut().for_each(|d| *d = (*d - shift).abs());
    h * cdf.iter().sum::<f64>()
}

/// `max_t d1(a(t), b(t))`.
pub fn sup_t_d1(a: &DensityFlow, b: &DensityFlow) -> Result<f64> {
    sup_t_d1_with(Exec::default(), a, b)
}

pub fn sup_t_d1_with(exec: Exec, a: &DensityFlow, b: &DensityFlow) -> Result<f64> {
    Ok(per_slice_d1_with(exec, a, b)?.into_iter().fold(0.0, f64::max))
}

/// `d1(a(t_k), b(t_k))` for every time node.
pub fn per_slice_d1_with(exec: Exec, a: &DensityFlow, b: &DensityFlow) -> Result<Vec<f64>> {
    a.grid().check_same(b.grid())?;
    a.time().check_same(b.time())?;
    if a.grid().dim() > 1 && a.grid().cells() > super::transport::LP_CELL_CAP {
        return Err(Error::Capacity { cells: a.grid().cells(), cap: super::transport::LP_CELL_CAP });
    }
    let grid = *a.grid();
    Ok(exec.map(a.time().nodes(), |k| d1_slices(&grid, a.slice(k), b.slice(k))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pv(grid: TorusGrid, rng: &mut ChaCha8Rng) -> ProbabilityVector {
        let w = (0..grid.cells()).map(|_| rng.random::<f64>().powi(3)).collect();
        ProbabilityVector::normalized(grid, w).unwrap()
    }

    #[test]
    fn identity_and_antipodes() {
        let g = TorusGrid::line(16).unwrap();
        let m = ProbabilityVector::from_fn(g, |x| 2.0 + (6.0 * x[0]).sin()).unwrap();
        assert_eq!(d1_distance(&m, &m).unwrap(), 0.0);
        let a = ProbabilityVector::delta(g, 0).unwrap();
        let b = ProbabilityVector::delta(g, 8).unwrap();
        assert!((d1_distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let c = ProbabilityVector::delta(g, 15).unwrap();
        assert!((d1_distance(&a, &c).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_a_dimension_error() {
        let a = ProbabilityVector::uniform(TorusGrid::line(8).unwrap());
        let b = ProbabilityVector::uniform(TorusGrid::line(9).unwrap());
        assert!(matches!(d1_distance(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let g = TorusGrid::line(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (a, b, c) = (random_pv(g, &mut rng), random_pv(g, &mut rng), random_pv(g, &mut rng));
            let ab = d1_distance(&a, &b).unwrap();
            let ba = d1_distance(&b, &a).unwrap();
            let bc = d1_distance(&b, &c).unwrap();
            let ac = d1_distance(&a, &c).unwrap();
            assert!((ab - ba).abs() <= 1e-15);
            assert!(ac <= ab + bc + 1e-12);
            assert!(ab <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn one_d_formula_matches_the_flow_program() {
        let g = TorusGrid::line(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let (a, b) = (random_pv(g, &mut rng), random_pv(g, &mut rng));
            let exact = d1_distance(&a, &b).unwrap();
            let lp = d1_distance_lp(&a, &b).unwrap();
            assert!((exact - lp).abs() < 1e-9, "{exact} vs {lp}");
        }
    }

    #[test]
    fn sup_over_time() {
        let g = TorusGrid::line(8).unwrap();
        let t = TimeGrid::new(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<_> = (0..3).map(|_| random_pv(g, &mut rng)).collect();
        let a = DensityFlow::from_slices(t, &s).unwrap();
        assert_eq!(sup_t_d1(&a, &a).unwrap(), 0.0);
        let mut s2 = s.clone();
        s2[2] = random_pv(g, &mut rng);
        let b = DensityFlow::from_slices(t, &s2).unwrap();
        let expected = d1_distance(&s[2], &s2[2]).unwrap();
        assert_eq!(sup_t_d1(&a, &b).unwrap(), expected);
    }
}
