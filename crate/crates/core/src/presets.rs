//! Ready-made scenarios.
//!
//! The `unicycle` preset is the four-state benchmark
//!
//! ```text
//! ẋ₁ = x₂ + 2x₂x₃ + 2x₂x₄u₂    ẋ₂ = x₃ + x₄u₂
//! ẋ₃ = u₁                      ẋ₄ = (1 + x₃)u₂
//! ```
//!
//! with the precompensator `u₁ = μ₁`, `u₂ = w`, `ẇ = μ₂`, which makes the
//! extended system static feedback linearizable in
//! `z = (x₁ − x₂², x₂, x₃ + x₄w, x₄, (1 + x₃)w)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ad::{ConstField, FieldRef};
use crate::geometry::ChartGuard;
use crate::integrator::Controller;
use crate::sampling::sample_chart;
use crate::smooth_map;
use crate::systems::{
    extend, ControlAffineSystem, DynamicCompensator, ExtendedSystem, LinearizingData,
};
use crate::{Error, Result};

smooth_map!(pub UnicycleDrift(4 => 4) |x| {
    let zero = x[0] * 0.0;
    vec![x[1] + x[1] * x[2] * 2.0, x[2], zero, zero]
});

smooth_map!(pub UnicycleInputs(4 => 8) |x| {
    let zero = x[0] * 0.0;
    vec![
        zero, zero, zero + 1.0, zero,
        x[1] * x[3] * 2.0, x[3], zero, x[2] + 1.0,
    ]
});

smooth_map!(pub UnicycleAlpha(5 => 2) |xi| { vec![xi[0] * 0.0, xi[4]] });

smooth_map!(pub UnicyclePhi(5 => 5) |xi| {
    let (x1, x2, x3, x4, w) = (xi[0], xi[1], xi[2], xi[3], xi[4]);
    vec![x1 - x2 * x2, x2, x3 + x4 * w, x4, (x3 + 1.0) * w]
});

smooth_map!(pub UnicyclePhiInverse(5 => 5) |z| {
    let (z1, z2, z3, z4, z5) = (z[0], z[1], z[2], z[3], z[4]);
    let b = z3 + 1.0;
    let w = z5 * 2.0 / (b + (b * b - z4 * z5 * 4.0).sqrt());
    vec![z1 + z2 * z2, z2, z3 - z4 * w, z4, w]
});

smooth_map!(pub UnicycleFeedbackAlpha(5 => 2) |xi| {
    let (x3, x4, w) = (xi[2], xi[3], xi[4]);
    let det = x3 + 1.0 - w * x4;
    let c = -((x3 + 1.0) * w * w);
    vec![(x3 + 1.0) * c / det, -(w * c) / det]
});

smooth_map!(pub UnicycleFeedbackBeta(5 => 4) |xi| {
    let (x3, x4, w) = (xi[2], xi[3], xi[4]);
    let det = x3 + 1.0 - w * x4;
    vec![(x3 + 1.0) / det, -w / det, -x4 / det, det.recip()]
});

/// `1 + x₃ − w·x₄`; the linearizing feedback is singular where it vanishes.
pub fn unicycle_margin(xi: &[f64]) -> f64 {
    1.0 + xi[2] - xi[4] * xi[3]
}

pub fn unicycle_chart() -> ChartGuard {
    ChartGuard::new("1 + x3 - w*x4 > 0", unicycle_margin)
}

/// A complete scenario: system, compensator, linearizing data, initial
/// condition, feedback gains and default discretization settings.
#[derive(Clone, Debug)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub system: ControlAffineSystem,
    pub compensator: DynamicCompensator,
    pub extended: ExtendedSystem,
    pub lin: LinearizingData,
    pub xi0: Vec<f64>,
    /// `v = −gains·z`, one row per input.
    pub gains: DMatrix<f64>,
    pub h: f64,
    pub horizon: f64,
}

pub const PRESET_NAMES: [&str; 1] = ["unicycle"];

pub fn unicycle_preset() -> ScenarioPreset {
    let system = ControlAffineSystem::new(Arc::new(UnicycleDrift), Arc::new(UnicycleInputs), 2)
        .expect("preset dimensions");
    let compensator = DynamicCompensator::new(
        1,
        Arc::new(UnicycleAlpha),
        Arc::new(ConstField::new(5, vec![1.0, 0.0, 0.0, 0.0])),
        Arc::new(ConstField::zeros(5, 1)),
        Arc::new(ConstField::new(5, vec![0.0, 1.0])),
    );
    let extended = extend(&system, &compensator).expect("preset dimensions");
    let mut a = DMatrix::zeros(5, 5);
    a[(0, 1)] = 1.0;
    a[(1, 2)] = 1.0;
    a[(3, 4)] = 1.0;
    let mut b = DMatrix::zeros(5, 2);
    b[(2, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    let phi: FieldRef = Arc::new(UnicyclePhi);
    let lin = LinearizingData::new(
        phi,
        Some(Arc::new(UnicyclePhiInverse)),
        Arc::new(UnicycleFeedbackAlpha),
        Arc::new(UnicycleFeedbackBeta),
        a,
        b,
        unicycle_chart(),
    )
    .expect("preset dimensions");
    let gains = DMatrix::from_row_slice(
        2,
        5,
        &[10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 10.0],
    );
    ScenarioPreset {
        name: "unicycle",
        xi0: extended.initial_state(&[0.5, 0.2, 0.1, 0.2]),
        system,
        compensator,
        extended,
        lin,
        gains,
        h: 1e-2,
        horizon: 10.0,
    }
}

pub fn preset_by_name(name: &str) -> Result<ScenarioPreset> {
    match name {
        "unicycle" => Ok(unicycle_preset()),
        other => Err(Error::InvalidInput(format!(
            "unknown preset `{other}` (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl ScenarioPreset {
    /// `A − B·gains`, the closed loop in linear coordinates.
    pub fn closed_loop_matrix(&self) -> DMatrix<f64> {
        self.lin.a() - self.lin.b() * &self.gains
    }

    pub fn closed_loop_is_hurwitz(&self) -> bool {
        self.closed_loop_matrix()
            .complex_eigenvalues()
            .iter()
            .all(|l| l.re < 0.0)
    }

    /// Seeded points of the unit box inside the chart.
    pub fn chart_points(&self, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
        sample_chart(seed, count, self.extended.dim(), self.lin.guard())
    }
}

/// `v = −gains·z`, `μ = α̃(ξ) + β̃(ξ)v` with `z = Φ(ξ)`.
#[derive(Clone, Debug)]
pub struct StabilizingController {
    lin: LinearizingData,
    gains: DMatrix<f64>,
    last_v: Option<Vec<f64>>,
}

impl StabilizingController {
    pub fn new(lin: LinearizingData, gains: DMatrix<f64>) -> Result<Self> {
        if gains.nrows() != lin.m() {
            return Err(Error::dim("gain rows", lin.m(), gains.nrows()));
        }
        if gains.ncols() != lin.dim() {
            return Err(Error::dim("gain columns", lin.dim(), gains.ncols()));
        }
        Ok(Self {
            lin,
            gains,
            last_v: None,
        })
    }

    /// `v = −gains·z`.
    pub fn new_control(&self, z: &[f64]) -> Vec<f64> {
        (-(&self.gains * DVector::from_column_slice(z))).as_slice().to_vec()
    }

    /// The `v` used for the most recent control.
    pub fn last_v(&self) -> Option<&[f64]> {
        self.last_v.as_deref()
    }
}

impl Controller for StabilizingController {
    fn control(&mut self, _k: usize, xi: &[f64]) -> Result<Vec<f64>> {
        let v = self.new_control(&self.lin.transform(xi));
        let mu = self.lin.feedback(xi, &v)?;
        self.last_v = Some(v);
        Ok(mu)
    }

    fn law(&self, xi: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.lin.feedback(xi, &self.new_control(&self.lin.transform(xi))))
    }
}

pub fn stabilizing_controller(preset: &ScenarioPreset, gains: Option<&DMatrix<f64>>) -> Result<StabilizingController> {
    StabilizingController::new(preset.lin.clone(), gains.unwrap_or(&preset.gains).clone())
}
