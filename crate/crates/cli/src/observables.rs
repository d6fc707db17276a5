//! What each engine can report, and the dimension of every quantity.

use serde::Serialize;

use declab_core::UnitSystem;

/// Exponents of mass, length and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dim {
    pub mass: i8,
    pub length: i8,
    pub time: i8,
}

pub const fn dim(mass: i8, length: i8, time: i8) -> Dim {
    Dim { mass, length, time }
}

pub const ONE: Dim = dim(0, 0, 0);
pub const TIME: Dim = dim(0, 0, 1);
pub const RATE: Dim = dim(0, 0, -1);

impl Dim {
    /// Multiplier taking an engine-unit value to CGS.
    pub fn cgs_factor(&self, u: &UnitSystem) -> f64 {
        u.scale_mass.powi(self.mass as i32) * u.scale_length.powi(self.length as i32) * u.scale_time.powi(self.time as i32)
    }

    /// `g*cm^2/s`-style label; "1" when dimensionless.
    pub fn cgs_label(&self) -> String {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (sym, e) in [("g", self.mass), ("cm", self.length), ("s", self.time)] {
            let part = |k: i8| if k == 1 { sym.to_string() } else { format!("{sym}^{k}") };
            if e > 0 {
                num.push(part(e));
            } else if e < 0 {
                den.push(part(-e));
            }
        }
        let n = if num.is_empty() { "1".to_string() } else { num.join("*") };
        match den.len() {
            0 => n,
            1 => format!("{n}/{}", den[0]),
            _ => format!("{n}/({})", den.join("*")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// One value per output time.
    Series,
    /// One value per sweep point.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observable {
    pub name: &'static str,
    pub kind: Kind,
    pub dim: Dim,
}

const fn series(name: &'static str, dim: Dim) -> Observable {
    Observable { name, kind: Kind::Series, dim }
}

const fn scalar(name: &'static str, dim: Dim) -> Observable {
    Observable { name, kind: Kind::Scalar, dim }
}

const Q: Dim = dim(0, 1, 0);
const P: Dim = dim(1, 1, -1);
const Q2: Dim = dim(0, 2, 0);
const QP: Dim = dim(1, 2, -1);
const P2: Dim = dim(2, 2, -2);
const ENERGY: Dim = dim(1, 2, -2);

pub const LINDBLAD: &[Observable] = &[
    series("Q", Q),
    series("P", P),
    series("Q2", Q2),
    series("QP", QP),
    series("P2", P2),
    series("K", ENERGY),
    series("purity", ONE),
    series("S_l", ONE),
    series("S_s", ONE),
    series("trace_error", ONE),
    series("min_eigenvalue", ONE),
];

pub const ITO: &[Observable] = &[
    series("Q", Q),
    series("P", P),
    series("Q2", Q2),
    series("QP", QP),
    series("P2", P2),
    series("K", ENERGY),
    series("purity", ONE),
    series("norm_sqr", ONE),
    series("norm_sqr_stderr", ONE),
];

pub const GRID: &[Observable] = &[
    series("trace", ONE),
    series("purity", ONE),
    series("mean_Q", Q),
    series("var_Q", Q2),
    series("boundary_mass", ONE),
    series("hermiticity_error", dim(0, -1, 0)),
    scalar("zeta_fit", RATE),
    scalar("zeta_fit_stderr", RATE),
    scalar("zeta_oracle", RATE),
];

pub const ORACLES: &[Observable] = &[
    series("Q", Q),
    series("P", P),
    series("Q2", Q2),
    series("QP", QP),
    series("P2", P2),
    series("K", ENERGY),
    series("S_l", ONE),
    scalar("nbar", ONE),
    scalar("thermal_factor", ONE),
    scalar("D", dim(0, -2, -1)),
    scalar("K_eq", ENERGY),
    scalar("tau_D", TIME),
    scalar("tau_D_low_frequency", TIME),
    scalar("zeta", RATE),
    scalar("Lambda_est", RATE),
    scalar("lambda_CM_inv", TIME),
];

pub const GRWP: &[Observable] = &[
    scalar("lambda_micro", RATE),
    scalar("lambda_CM", RATE),
    scalar("lambda_CM_inv", TIME),
    scalar("delta_i", dim(0, -5, 0)),
    scalar("heating_rate", dim(1, 2, -3)),
];

pub const INTEGRAL: &[Observable] = &[
    scalar("p", ONE),
    scalar("xi", ONE),
    scalar("I_residue", ONE),
    scalar("I_quadrature", ONE),
    scalar("I_approx", ONE),
    scalar("rel_difference", ONE),
];

pub fn find(list: &[Observable], name: &str) -> Option<Observable> {
    list.iter().copied().find(|o| o.name == name)
}
