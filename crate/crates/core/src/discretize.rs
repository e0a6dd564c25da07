//! Staggered-grid discretization of the weighted Laplacian
//! `Δφ = φ'' + hφ' = (Aφ')'/A` on `(0, D)` and of the fourth-order operator
//! `B = Δ_h² − αΔ_h + β`.
//!
//! Unknowns live at cell midpoints `t_j = (j + ½)·dt` with quadrature weights
//! `w_j = A(t_j)·dt`; fluxes live on edges with weights `A(j·dt)`. Both end
//! edges carry weight zero, which is the whole boundary closure.

use std::sync::OnceLock;

use crate::banded::{sym_tridiagonal_lowest, BandLu, BandMatrix};
use crate::error::{invalid, Error, Result};
use crate::geometry::{FoliationProfile, PaneitzCoefficients};

pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone)]
pub struct Grid {
    pub profile: String,
    pub length: f64,
    pub cells: usize,
    pub dt: f64,
    /// Cell midpoints.
    pub t: Vec<f64>,
    /// Quadrature weights `A(t_j)·dt`.
    pub weights: Vec<f64>,
    /// Edge weights `A(j·dt)`, `j = 0..=cells`, zero at both ends.
    pub edge_weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted inner product `Σ u_j v_j w_j`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    /// `Σ |u_j|^p w_j`.
    pub fn power_sum(&self, u: &[f64], p: f64) -> f64 {
        u.iter()
            .zip(&self.weights)
            .map(|(a, w)| a.abs().powf(p) * w)
            .sum()
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.cells {
            return Err(Error::DimensionMismatch {
                expected: self.cells,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Samples `f` at the midpoints.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.t.iter().map(|&t| f(t)).collect()
    }
}

pub fn build_grid(p: &FoliationProfile, cells: usize) -> Result<Grid> {
    if cells < MIN_CELLS {
        return Err(invalid(format!("grid needs at least {MIN_CELLS} cells, got {cells}")));
    }
    let dt = p.length / cells as f64;
    let t: Vec<f64> = (0..cells).map(|j| (j as f64 + 0.5) * dt).collect();
    let weights: Vec<f64> = t.iter().map(|&tj| p.volume(tj) * dt).collect();
    if let Some(j) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidProfile(format!(
            "non-positive quadrature weight {} at t = {}",
            weights[j], t[j]
        )));
    }
    let mut edge_weights: Vec<f64> = (0..=cells).map(|j| p.volume(j as f64 * dt)).collect();
    edge_weights[0] = 0.0;
    edge_weights[cells] = 0.0;
    Ok(Grid {
        profile: p.name.clone(),
        length: p.length,
        cells,
        dt,
        t,
        weights,
        edge_weights,
    })
}

/// Tridiagonal matrix of `Δ_h` in flux form.
pub fn assemble_laplacian(g: &Grid) -> BandMatrix {
    let n = g.cells;
    let mut lap = BandMatrix::zeros(n, 1, 1);
    for j in 0..n {
        let scale = 1.0 / (g.weights[j] * g.dt);
        let left = g.edge_weights[j] * scale;
        let right = g.edge_weights[j + 1] * scale;
        if j > 0 {
            lap.set(j, j - 1, left);
        }
        if j + 1 < n {
            lap.set(j, j + 1, right);
        }
        lap.set(j, j, -(left + right));
    }
    lap
}

/// Applies `Δ_h` through edge fluxes; exact zero on constants.
pub fn apply_laplacian(g: &Grid, u: &[f64]) -> Vec<f64> {
    let n = g.cells;
    let inv_dt = 1.0 / g.dt;
    let mut out = vec![0.0; n];
    let mut flux_left = 0.0;
    for j in 0..n {
        let flux_right = if j + 1 < n {
            g.edge_weights[j + 1] * (u[j + 1] - u[j]) * inv_dt
        } else {
            0.0
        };
        out[j] = (flux_right - flux_left) / g.weights[j];
        flux_left = flux_right;
    }
    out
}

/// Discrete Dirichlet energy `−⟨Δ_h u, u⟩_w = Σ A(j·dt)(u_j − u_{j−1})²/dt`.
pub fn dirichlet_energy(g: &Grid, u: &[f64]) -> f64 {
    (1..g.cells)
        .map(|j| {
            let d = u[j] - u[j - 1];
            g.edge_weights[j] * d * d
        })
        .sum::<f64>()
        / g.dt
}

#[derive(Debug)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub coeffs: PaneitzCoefficients,
    pub lap: BandMatrix,
    /// `lap² − α·lap + β·I`, pentadiagonal.
    pub paneitz: BandMatrix,
    factor: OnceLock<std::result::Result<BandLu, String>>,
}

impl Clone for DiscreteOperator {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs,
            lap: self.lap.clone(),
            paneitz: self.paneitz.clone(),
            factor: OnceLock::new(),
        }
    }
}

pub fn assemble_paneitz(g: Grid, c: PaneitzCoefficients) -> Result<DiscreteOperator> {
    if !(c.alpha > 0.0 && c.beta > 0.0) {
        return Err(invalid(format!(
            "coefficients must be positive, got alpha = {}, beta = {}",
            c.alpha, c.beta
        )));
    }
    let lap = assemble_laplacian(&g);
    let mut paneitz = lap.mul(&lap).combine(1.0, &lap, -c.alpha);
    paneitz.shift(c.beta);
    Ok(DiscreteOperator {
        grid: g,
        coeffs: c,
        lap,
        paneitz,
        factor: OnceLock::new(),
    })
}

impl DiscreteOperator {
    /// Builds grid and operator in one go.
    pub fn new(p: &FoliationProfile, cells: usize, c: PaneitzCoefficients) -> Result<Self> {
        assemble_paneitz(build_grid(p, cells)?, c)
    }

    pub fn len(&self) -> usize {
        self.grid.cells
    }

    pub fn is_empty(&self) -> bool {
        self.grid.cells == 0
    }

    pub fn q(&self) -> f64 {
        self.coeffs.q
    }

    pub fn apply_lap(&self, u: &[f64]) -> Vec<f64> {
        apply_laplacian(&self.grid, u)
    }

    /// `B u` evaluated as `Δ_h(Δ_h u) − αΔ_h u + βu` in flux form.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let lu = self.apply_lap(u);
        let llu = self.apply_lap(&lu);
        let (a, b) = (self.coeffs.alpha, self.coeffs.beta);
        llu.iter()
            .zip(&lu)
            .zip(u)
            .map(|((x, y), z)| x - a * y + b * z)
            .collect()
    }

    /// `⟨Bu, u⟩_w = ‖Δ_h u‖²_w + α·E_dir(u) + β‖u‖²_w`.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let lu = self.apply_lap(u);
        let g = &self.grid;
        g.dot(&lu, &lu) + self.coeffs.alpha * dirichlet_energy(g, u) + self.coeffs.beta * g.dot(u, u)
    }

    pub fn norm_b(&self, u: &[f64]) -> f64 {
        self.quadratic_form(u).max(0.0).sqrt()
    }

    fn factorization(&self) -> Result<&BandLu> {
        self.factor
            .get_or_init(|| self.paneitz.lu().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| invalid(format!("fourth-order operator is singular: {e}")))
    }

    /// Solves `B x = y` (banded LU plus one refinement sweep).
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.grid.check(y)?;
        let lu = self.factorization()?;
        let mut x = lu.solve(y);
        let bx = self.apply(&x);
        let mut r: Vec<f64> = y.iter().zip(&bx).map(|(a, b)| a - b).collect();
        lu.solve_in_place(&mut r);
        x.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        Ok(x)
    }

    /// Two-stage solve `(−Δ_h + c1)z = y`, `(−Δ_h + c2)x = z`; `None` when `α² < 4β`.
    pub fn solve_factored(&self, y: &[f64]) -> Result<Option<Vec<f64>>> {
        self.grid.check(y)?;
        let (Some(c1), Some(c2)) = (self.coeffs.c1, self.coeffs.c2) else {
            return Ok(None);
        };
        let stage = |c: f64, rhs: &[f64]| -> Result<Vec<f64>> {
            let mut m = self.lap.combine(-1.0, &self.lap, 0.0);
            m.shift(c);
            let lu = m.lu().map_err(|e| invalid(e.to_string()))?;
            Ok(lu.solve(rhs))
        };
        let z = stage(c1, y)?;
        Ok(Some(stage(c2, &z)?))
    }

    /// `(−lap + c1)(−lap + c2)` assembled, for comparison with `paneitz`.
    pub fn factored_product(&self) -> Option<BandMatrix> {
        let (c1, c2) = (self.coeffs.c1?, self.coeffs.c2?);
        let mut f1 = self.lap.combine(-1.0, &self.lap, 0.0);
        f1.shift(c1);
        let mut f2 = self.lap.combine(-1.0, &self.lap, 0.0);
        f2.shift(c2);
        Some(f1.mul(&f2))
    }
}

/// Leading eigenpairs of `−Δ_h`, orthonormal in `⟨·,·⟩_w`.
#[derive(Debug, Clone)]
pub struct Eigenbasis {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Eigenbasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// Removes the components along the first `m` basis vectors (w-orthogonal projection).
    pub fn project_out(&self, u: &mut [f64], m: usize) {
        for e in self.vectors.iter().take(m) {
            let c = self.dot(u, e);
            u.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
    }

    /// Largest `|⟨u, e_i⟩_w| / ‖u‖_w` over the first `m` vectors.
    pub fn leakage(&self, u: &[f64], m: usize) -> f64 {
        let nrm = self.dot(u, u).sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        self.vectors
            .iter()
            .take(m)
            .map(|e| self.dot(u, e).abs() / nrm)
            .fold(0.0, f64::max)
    }
}

pub fn eigenbasis(g: &Grid, m: usize) -> Result<Eigenbasis> {
    let n = g.cells;
    if m == 0 || m > n {
        return Err(invalid(format!("eigenbasis size {m} outside 1..={n}")));
    }
    // Similarity by diag(w)^{1/2} makes −Δ_h symmetric tridiagonal.
    let diag: Vec<f64> = (0..n)
        .map(|j| (g.edge_weights[j] + g.edge_weights[j + 1]) / (g.weights[j] * g.dt))
        .collect();
    let off: Vec<f64> = (0..n - 1)
        .map(|j| -g.edge_weights[j + 1] / (g.dt * (g.weights[j] * g.weights[j + 1]).sqrt()))
        .collect();
    let (values, sym_vectors) = sym_tridiagonal_lowest(&diag, &off, m)?;
    let vectors = sym_vectors
        .into_iter()
        .map(|y| {
            let mut v: Vec<f64> = y.iter().zip(&g.weights).map(|(a, w)| a / w.sqrt()).collect();
            let lead = v.iter().copied().find(|a| a.abs() > 0.0).unwrap_or(1.0);
            if lead < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
            v
        })
        .collect();
    Ok(Eigenbasis {
        values,
        vectors,
        weights: g.weights.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin_profile;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn sphere5() -> FoliationProfile {
        builtin_profile("sphere_point", 5, None).unwrap()
    }

    fn einstein_op(cells: usize) -> DiscreteOperator {
        let c = PaneitzCoefficients::new(5.5, 6.5625, 3.0).unwrap();
        DiscreteOperator::new(&sphere5(), cells, c).unwrap()
    }

    fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let g = build_grid(&sphere5(), 1000).unwrap();
        let exact = 3.0 * PI / 8.0;
        assert!((g.total_weight() - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn grid_shape() {
        let s = builtin_profile("sphere_subsphere", 6, Some(2)).unwrap();
        let g = build_grid(&s, 16).unwrap();
        assert_eq!(g.weights.len(), 16);
        assert!(g.weights.iter().all(|w| *w > 0.0));
        assert_eq!(g.edge_weights[0], 0.0);
        assert_eq!(g.edge_weights[16], 0.0);
        assert!(build_grid(&s, 8).is_err());
    }

    #[test]
    fn constants_in_kernel() {
        let op = einstein_op(400);
        let ones = vec![1.0; 400];
        let flux = op.apply_lap(&ones);
        assert!(flux.iter().all(|v| *v == 0.0));
        let via_matrix = op.lap.apply(&ones);
        let bound = 1e-14 * op.lap.max_abs();
        assert!(via_matrix.iter().all(|v| v.abs() < bound));
        let b1 = op.apply(&ones);
        assert!(b1.iter().all(|v| *v == op.coeffs.beta));
    }

    #[test]
    fn flux_form_agrees_with_matrix() {
        let op = einstein_op(200);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = random_vec(200, &mut rng);
        let a = op.apply_lap(&u);
        let b = op.lap.apply(&u);
        let scale = op.lap.max_abs();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * scale);
        }
        let a = op.apply(&u);
        let b = op.paneitz.apply(&u);
        let scale = op.paneitz.max_abs();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn laplacian_symmetric_and_nonpositive() {
        let op = einstein_op(300);
        let g = &op.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let u = random_vec(300, &mut rng);
            let v = random_vec(300, &mut rng);
            let lu = op.apply_lap(&u);
            let lv = op.apply_lap(&v);
            let asym = (g.dot(&lu, &v) - g.dot(&u, &lv)).abs() / (g.norm(&u) * g.norm(&v));
            worst = worst.max(asym / op.lap.max_abs());
            assert!(g.dot(&lu, &u) <= 0.0);
            let e = dirichlet_energy(g, &u);
            assert!((e + g.dot(&lu, &u)).abs() <= 1e-10 * e);
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn quadratic_form_identity_and_coercivity() {
        let op = einstein_op(256);
        let g = &op.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u = random_vec(256, &mut rng);
            let direct = g.dot(&op.apply(&u), &u);
            let form = op.quadratic_form(&u);
            assert!((direct - form).abs() <= 1e-9 * form, "{direct} vs {form}");
            assert!(form >= op.coeffs.beta * g.dot(&u, &u));
        }
    }

    #[test]
    fn factorization_identity() {
        let op = einstein_op(200);
        let f = op.factored_product().unwrap();
        let scale = op.paneitz.max_abs();
        for i in 0..200usize {
            for j in i.saturating_sub(2)..(i + 3).min(200) {
                assert!((f.get(i, j) - op.paneitz.get(i, j)).abs() < 1e-12 * scale);
            }
        }
        let non = DiscreteOperator::new(&sphere5(), 32, PaneitzCoefficients::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        assert!(non.factored_product().is_none());
        assert!(non.solve_factored(&vec![1.0; 32]).unwrap().is_none());
    }

    #[test]
    fn direct_and_two_stage_solves_agree() {
        let op = einstein_op(200);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let y = random_vec(200, &mut rng);
            let x = op.solve(&y).unwrap();
            let z = op.solve_factored(&y).unwrap().unwrap();
            let g = &op.grid;
            let diff: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
            assert!(g.norm(&diff) < 1e-10 * g.norm(&x), "{}", g.norm(&diff) / g.norm(&x));
        }
    }

    #[test]
    fn consistency_is_second_order() {
        let p = sphere5();
        let errs: Vec<f64> = [200, 400, 800]
            .iter()
            .map(|&n| {
                let g = build_grid(&p, n).unwrap();
                let phi = g.sample(|t| (PI * t / p.length).cos());
                let lap = apply_laplacian(&g, &phi);
                let k = PI / p.length;
                g.t.iter()
                    .zip(&lap)
                    .filter(|(t, _)| **t > 0.1 * p.length && **t < 0.9 * p.length)
                    .map(|(&t, l)| {
                        let exact = -k * k * (k * t).cos() - p.mean_curvature(t) * k * (k * t).sin();
                        (l - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn eigenbasis_kernel_and_orthonormality() {
        let g = build_grid(&sphere5(), 400).unwrap();
        let basis = eigenbasis(&g, 6).unwrap();
        assert!(basis.values[0].abs() < 1e-8, "{}", basis.values[0]);
        let c = 1.0 / g.total_weight().sqrt();
        let diff: Vec<f64> = basis.vectors[0].iter().map(|v| v - c).collect();
        assert!(g.norm(&diff) < 1e-10);
        for i in 0..6 {
            for j in 0..6 {
                let d = g.dot(&basis.vectors[i], &basis.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10, "({i},{j}) {d}");
            }
        }
        assert!(eigenbasis(&g, 0).is_err());
        assert!(eigenbasis(&g, 401).is_err());
    }

    #[test]
    fn spherical_harmonic_eigenvalues() {
        let g = build_grid(&sphere5(), 1000).unwrap();
        let basis = eigenbasis(&g, 3).unwrap();
        assert!((basis.values[1] - 5.0).abs() < 1e-3, "{}", basis.values[1]);
        assert!((basis.values[2] - 12.0).abs() < 5e-3, "{}", basis.values[2]);
        // Rayleigh quotient of the computed vector reproduces its eigenvalue
        let e = &basis.vectors[1];
        let rq = dirichlet_energy(&g, e) / g.dot(e, e);
        assert!((rq - basis.values[1]).abs() < 1e-8 * basis.values[1]);
    }

    #[test]
    fn paneitz_spectrum_bounded_below_by_beta() {
        let op = einstein_op(300);
        let basis = eigenbasis(&op.grid, 10).unwrap();
        for (lam, v) in basis.values.iter().zip(&basis.vectors) {
            let mu = op.quadratic_form(v);
            let want = lam * lam + op.coeffs.alpha * lam + op.coeffs.beta;
            assert!((mu - want).abs() < 1e-7 * want);
            assert!(mu >= op.coeffs.beta - 1e-9);
        }
    }
}
