//! Convex Hamiltonians, the `H / (1 + eps sqrt(H))` regularization, and
//! sampled certification of the structural inequalities used by the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{KmfgError, Result};
use crate::phase_grid::{Coord, Field, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianSpec {
    /// `H = 0`.
    Zero,
    /// `H(p) = a |p|^2`.
    Quadratic { a: f64 },
    /// `H(p) = sqrt(1 + |p|^2) - 1`, Lipschitz with constant 1.
    SmoothLipschitz,
    /// `H(p) = |p|`; the subgradient at 0 is taken to be 0.
    Norm,
    /// `H_eps = H / (1 + eps H^{1/2})`.
    Regularized {
        base: Box<HamiltonianSpec>,
        epsilon: f64,
    },
}

fn norm2(p: &Coord) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

impl HamiltonianSpec {
    pub fn quadratic() -> Self {
        HamiltonianSpec::Quadratic { a: 1.0 }
    }

    pub fn half_quadratic() -> Self {
        HamiltonianSpec::Quadratic { a: 0.5 }
    }

    pub fn regularized(base: HamiltonianSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(KmfgError::InvalidArgument(format!(
                "regularization parameter must be positive, got {epsilon}"
            )));
        }
        Ok(HamiltonianSpec::Regularized {
            base: Box::new(base),
            epsilon,
        })
    }

    pub fn eval(&self, p: &Coord) -> f64 {
        match self {
            HamiltonianSpec::Zero => 0.0,
            HamiltonianSpec::Quadratic { a } => a * norm2(p),
            HamiltonianSpec::SmoothLipschitz => {
                // sqrt(1+s) - 1 = s / (sqrt(1+s) + 1) without cancellation
                let s = norm2(p);
                s / ((1.0 + s).sqrt() + 1.0)
            }
            HamiltonianSpec::Norm => norm2(p).sqrt(),
            HamiltonianSpec::Regularized { base, epsilon } => {
                let h = base.eval(p);
                h / (1.0 + epsilon * h.sqrt())
            }
        }
    }

    pub fn grad(&self, p: &Coord) -> Coord {
        match self {
            HamiltonianSpec::Zero => [0.0, 0.0],
            HamiltonianSpec::Quadratic { a } => [2.0 * a * p[0], 2.0 * a * p[1]],
            HamiltonianSpec::SmoothLipschitz => {
                let r = (1.0 + norm2(p)).sqrt();
                [p[0] / r, p[1] / r]
            }
            HamiltonianSpec::Norm => {
                let r = norm2(p).sqrt();
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [p[0] / r, p[1] / r]
                }
            }
            HamiltonianSpec::Regularized { base, epsilon } => {
                let h = base.eval(p);
                let g = base.grad(p);
                let root = h.sqrt();
                let denom = 1.0 + epsilon * root;
                let factor = (1.0 + 0.5 * epsilon * root) / (denom * denom);
                [g[0] * factor, g[1] * factor]
            }
        }
    }

    /// `H_p(p) . p - H(p)`.
    pub fn legendre_excess(&self, p: &Coord) -> f64 {
        let g = self.grad(p);
        g[0] * p[0] + g[1] * p[1] - self.eval(p)
    }

    /// Global Lipschitz constant, `None` when `H` grows faster than linearly.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        match self {
            HamiltonianSpec::Zero => Some(0.0),
            HamiltonianSpec::Quadratic { .. } => None,
            HamiltonianSpec::SmoothLipschitz | HamiltonianSpec::Norm => Some(1.0),
            HamiltonianSpec::Regularized { base, epsilon } => match base.as_ref() {
                HamiltonianSpec::Quadratic { a } => Some(a.sqrt() / epsilon),
                other => other.lipschitz_constant(),
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            HamiltonianSpec::Zero => true,
            HamiltonianSpec::Quadratic { a } => *a == 0.0,
            HamiltonianSpec::Regularized { base, .. } => base.is_zero(),
            _ => false,
        }
    }

    /// Default structure constants `(c, C, K)` where `K` bounds `|H_p|^2 <= K H`.
    pub fn default_constants(&self) -> StructureConstants {
        match self {
            HamiltonianSpec::Quadratic { a } => StructureConstants {
                c: 1.0,
                big_c: 2.0 * a,
                grad_sq: 4.0 * a,
            },
            HamiltonianSpec::Regularized { base, .. } => base.default_constants(),
            _ => StructureConstants {
                c: 1.0,
                big_c: 2.0,
                grad_sq: 4.0,
            },
        }
    }
}

/// `H(p)` evaluated cellwise on a gradient field.
pub fn hamiltonian_field(h: &HamiltonianSpec, p: &VectorField) -> Field {
    let grid = p.grid();
    let vals = (0..grid.len()).map(|c| h.eval(&p.at_cell(c))).collect();
    Field::from_values(grid, vals).expect("finite gradient gives finite H")
}

/// `H_p(p).p - H(p)` evaluated cellwise on a gradient field.
pub fn legendre_excess_field(h: &HamiltonianSpec, p: &VectorField) -> Field {
    let grid = p.grid();
    let vals = (0..grid.len()).map(|c| h.legendre_excess(&p.at_cell(c))).collect();
    Field::from_values(grid, vals).expect("finite gradient gives finite excess")
}

/// Constants of the quadratic-class assumptions:
/// `0 <= H <= C|p|^2`, `H_p.p - H >= c H`, `|H_p| <= C|p|`, and the derived
/// `|H_p|^2 <= K H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConstants {
    pub c: f64,
    pub big_c: f64,
    pub grad_sq: f64,
}

/// Worst-case margins (rhs - lhs, so `>= 0` means the inequality held) over
/// a sample set.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    /// `min H`.
    pub nonnegative: f64,
    /// `min (C|p|^2 - H)`.
    pub quadratic_growth: f64,
    /// `min (H_p.p - H - c H)`; for the regularized kind this is the
    /// statement form `H_p^eps . p - H(p) - c H(p)` and is reported only.
    pub excess_lower: f64,
    /// `min (C|p| - |H_p|)`.
    pub gradient_growth: f64,
    /// `min (K H - |H_p|^2)`.
    pub gradient_square: f64,
    /// Regularized only: `min (H - H_eps)`.
    pub below_base: Option<f64>,
    /// Regularized only: `min (H_p^eps . p - H_eps - H_eps)`.
    pub excess_regularized: Option<f64>,
    /// Regularized only: `min (C/eps - |H_p^eps|)`.
    pub lipschitz_bound: Option<f64>,
    /// Regularized only: smallest observed ratio `excess / H_eps` over `H_eps > 0`.
    pub excess_ratio: Option<f64>,
}

/// Margins above `-ROUNDING_TOL` count as satisfied; equality cases such as
/// `|H_p|^2 = 4H` for `|p|^2` otherwise fail on rounding alone.
pub const ROUNDING_TOL: f64 = 1e-10;

impl StructureReport {
    /// Names of the certified inequalities whose margin is below
    /// `-ROUNDING_TOL`. The
    /// statement-form `excess_lower` of a regularized Hamiltonian is excluded.
    pub fn violations(&self, regularized: bool) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut check = |name, m: f64| {
            if m < -ROUNDING_TOL {
                out.push(name);
            }
        };
        check("nonnegative", self.nonnegative);
        check("quadratic_growth", self.quadratic_growth);
        if !regularized {
            check("excess_lower", self.excess_lower);
            check("gradient_growth", self.gradient_growth);
        }
        check("gradient_square", self.gradient_square);
        for (name, m) in [
            ("below_base", self.below_base),
            ("excess_regularized", self.excess_regularized),
            ("lipschitz_bound", self.lipschitz_bound),
        ] {
            if let Some(m) = m {
                check(name, m);
            }
        }
        out
    }
}

pub fn check_structure(
    h: &HamiltonianSpec,
    samples: &[Coord],
    k: &StructureConstants,
) -> Result<StructureReport> {
    if samples.is_empty() {
        return Err(KmfgError::InvalidArgument("no sample points".into()));
    }
    let (base, eps) = match h {
        HamiltonianSpec::Regularized { base, epsilon } => (base.as_ref(), Some(*epsilon)),
        other => (other, None),
    };
    let mut r = StructureReport {
        samples: samples.len(),
        nonnegative: f64::INFINITY,
        quadratic_growth: f64::INFINITY,
        excess_lower: f64::INFINITY,
        gradient_growth: f64::INFINITY,
        gradient_square: f64::INFINITY,
        ..Default::default()
    };
    let mut below = f64::INFINITY;
    let mut excess_reg = f64::INFINITY;
    let mut lip = f64::INFINITY;
    let mut ratio = f64::INFINITY;
    for p in samples {
        let hp = h.eval(p);
        let g = h.grad(p);
        let gnorm = norm2(&g).sqrt();
        let pn2 = norm2(p);
        r.nonnegative = r.nonnegative.min(hp);
        r.quadratic_growth = r.quadratic_growth.min(k.big_c * pn2 - hp);
        r.gradient_square = r.gradient_square.min(k.grad_sq * hp - gnorm * gnorm);
        match eps {
            None => {
                r.excess_lower = r.excess_lower.min(h.legendre_excess(p) - k.c * hp);
                r.gradient_growth = r.gradient_growth.min(k.big_c * pn2.sqrt() - gnorm);
            }
            Some(e) => {
                let hb = base.eval(p);
                let gp = g[0] * p[0] + g[1] * p[1];
                r.excess_lower = r.excess_lower.min(gp - hb - k.c * hb);
                r.gradient_growth = r.gradient_growth.min(k.big_c * pn2.sqrt() - gnorm);
                below = below.min(hb - hp);
                let excess = h.legendre_excess(p);
                excess_reg = excess_reg.min(excess - hp);
                lip = lip.min(k.big_c / e - gnorm);
                if hp > 0.0 {
                    ratio = ratio.min(excess / hp);
                }
            }
        }
    }
    if eps.is_some() {
        r.below_base = Some(below);
        r.excess_regularized = Some(excess_reg);
        r.lipschitz_bound = Some(lip);
        r.excess_ratio = Some(ratio);
    }
    Ok(r)
}

/// Uniform `n x n` sample lattice over `[-half_width, half_width]^2`
/// (or `n` points on the line when `d = 1`).
pub fn sample_lattice(d: usize, half_width: f64, n: usize) -> Vec<Coord> {
    let step = if n > 1 {
        2.0 * half_width / (n - 1) as f64
    } else {
        0.0
    };
    let coord = |i: usize| -half_width + i as f64 * step;
    match d {
        1 => (0..n).map(|i| [coord(i), 0.0]).collect(),
        _ => (0..n)
            .flat_map(|i| (0..n).map(move |j| [coord(i), coord(j)]))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    Zero,
    Quadratic,
    HalfQuadratic,
    Lipschitz,
    Norm,
}

/// Manifest form: `{"kind": "quadratic", "epsilon": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub kind: HamiltonianKind,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl HamiltonianConfig {
    pub fn base_spec(&self) -> HamiltonianSpec {
        match self.kind {
            HamiltonianKind::Zero => HamiltonianSpec::Zero,
            HamiltonianKind::Quadratic => HamiltonianSpec::quadratic(),
            HamiltonianKind::HalfQuadratic => HamiltonianSpec::half_quadratic(),
            HamiltonianKind::Lipschitz => HamiltonianSpec::SmoothLipschitz,
            HamiltonianKind::Norm => HamiltonianSpec::Norm,
        }
    }

    pub fn to_spec(&self) -> Result<HamiltonianSpec> {
        match self.epsilon {
            Some(e) => HamiltonianSpec::regularized(self.base_spec(), e),
            None => Ok(self.base_spec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_grad(h: &HamiltonianSpec, p: &Coord, step: f64) -> Coord {
        let mut g = [0.0; 2];
        for a in 0..2 {
            let mut pp = *p;
            let mut pm = *p;
            pp[a] += step;
            pm[a] -= step;
            g[a] = (h.eval(&pp) - h.eval(&pm)) / (2.0 * step);
        }
        g
    }

    #[test]
    fn quadratic_values() {
        let h = HamiltonianSpec::quadratic();
        assert_eq!(h.eval(&[0.0, 0.0]), 0.0);
        assert_eq!(h.eval(&[3.0, 4.0]), 25.0);
        assert_eq!(h.grad(&[2.0, 0.0]), [4.0, 0.0]);
        assert_eq!(h.legendre_excess(&[2.0, 0.0]), 4.0);
    }

    #[test]
    fn regularized_hand_values() {
        let h = HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), 1.0).unwrap();
        assert_relative_eq!(h.eval(&[1.0, 0.0]), 0.5, epsilon = 1e-15);
        let g = h.grad(&[1.0, 0.0]);
        assert_relative_eq!(g[0], 0.75, epsilon = 1e-15);
        assert_eq!(g[1], 0.0);
        assert_relative_eq!(h.legendre_excess(&[1.0, 0.0]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn regularized_quadratic_excess_identity() {
        // for H = |p|^2: excess of H_eps equals H_eps / (1 + eps |p|)
        let eps = 0.5;
        let h = HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), eps).unwrap();
        for s in [0.1, 1.0, 3.0, 10.0] {
            let p = [s, 0.0];
            assert_relative_eq!(
                h.legendre_excess(&p),
                h.eval(&p) / (1.0 + eps * s),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn excess_vanishes_at_origin() {
        for h in [
            HamiltonianSpec::quadratic(),
            HamiltonianSpec::SmoothLipschitz,
            HamiltonianSpec::Norm,
            HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), 0.3).unwrap(),
        ] {
            assert_eq!(h.legendre_excess(&[0.0, 0.0]), 0.0);
        }
    }

    #[test]
    fn structure_of_quadratic() {
        let samples = sample_lattice(2, 5.0, 41);
        let h = HamiltonianSpec::quadratic();
        let k = StructureConstants {
            c: 1.0,
            big_c: 2.0,
            grad_sq: 4.0,
        };
        let r = check_structure(&h, &samples, &k).unwrap();
        assert!(r.violations(false).is_empty(), "{r:?}");
        let he = HamiltonianSpec::regularized(h, 0.5).unwrap();
        let r = check_structure(&he, &samples, &k).unwrap();
        assert!(r.below_base.unwrap() >= 0.0);
        assert!(r.lipschitz_bound.unwrap() >= 0.0);
        assert!(r.gradient_square >= -ROUNDING_TOL);
        assert!(check_structure(&he, &[], &k).is_err());
    }

    #[test]
    fn norm_hamiltonian_fails_excess_bound() {
        let samples = sample_lattice(2, 5.0, 21);
        let k = StructureConstants {
            c: 1.0,
            big_c: 2.0,
            grad_sq: 4.0,
        };
        let r = check_structure(&HamiltonianSpec::Norm, &samples, &k).unwrap();
        assert!(r.excess_lower < 0.0);
        // margin is -H at the corner sample
        assert_relative_eq!(r.excess_lower, -(50.0_f64).sqrt(), max_relative = 1e-12);
        assert!(r.violations(false).contains(&"excess_lower"));
    }

    #[test]
    fn config_round_trip() {
        let c: HamiltonianConfig =
            serde_json::from_str(r#"{"kind": "quadratic", "epsilon": 0.25}"#).unwrap();
        assert_eq!(
            c.to_spec().unwrap(),
            HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), 0.25).unwrap()
        );
        assert!(serde_json::from_str::<HamiltonianConfig>(r#"{"kind": "cubic"}"#).is_err());
    }

    fn any_h() -> impl Strategy<Value = HamiltonianSpec> {
        prop_oneof![
            Just(HamiltonianSpec::quadratic()),
            Just(HamiltonianSpec::half_quadratic()),
            Just(HamiltonianSpec::SmoothLipschitz),
            (0.05f64..2.0).prop_map(|e| HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), e).unwrap()),
            (0.05f64..2.0).prop_map(|e| HamiltonianSpec::regularized(HamiltonianSpec::SmoothLipschitz, e).unwrap()),
        ]
    }

    // regularizing a Lipschitz base gives sqrt growth, which is not convex
    fn convex_h() -> impl Strategy<Value = HamiltonianSpec> {
        prop_oneof![
            Just(HamiltonianSpec::quadratic()),
            Just(HamiltonianSpec::half_quadratic()),
            Just(HamiltonianSpec::SmoothLipschitz),
            Just(HamiltonianSpec::Norm),
            (0.05f64..2.0).prop_map(|e| HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), e).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gradient_matches_central_differences(h in any_h(), x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let p = [x, y];
            let g = h.grad(&p);
            let fd = fd_grad(&h, &p, 1e-5);
            let scale = (g[0].abs() + g[1].abs()).max(1e-3);
            prop_assert!((g[0] - fd[0]).abs() + (g[1] - fd[1]).abs() <= 1e-4 * scale);
        }

        #[test]
        fn regularization_is_monotone_in_eps(x in -6.0f64..6.0, y in -6.0f64..6.0, e1 in 0.01f64..2.0, de in 0.0f64..2.0) {
            let p = [x, y];
            let base = HamiltonianSpec::quadratic();
            let h1 = HamiltonianSpec::regularized(base.clone(), e1).unwrap();
            let h2 = HamiltonianSpec::regularized(base.clone(), e1 + de).unwrap();
            prop_assert!(h1.eval(&p) >= h2.eval(&p));
            prop_assert!(h1.eval(&p) <= base.eval(&p));
        }

        #[test]
        fn regularized_gradient_bounded(x in -20.0f64..20.0, y in -20.0f64..20.0, e in 0.01f64..2.0) {
            let p = [x, y];
            let c = 2.0;
            let h = HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), e).unwrap();
            let g = h.grad(&p);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let pn = (x * x + y * y).sqrt();
            prop_assert!(gn <= (c * pn).min(c / e) * (1.0 + 1e-12));
        }

        #[test]
        fn excess_nonnegative(h in convex_h(), x in -10.0f64..10.0, y in -10.0f64..10.0) {
            prop_assert!(h.legendre_excess(&[x, y]) >= -1e-12);
        }
    }
}
