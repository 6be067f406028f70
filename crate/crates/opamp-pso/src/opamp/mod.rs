//! The two-stage Miller-compensated op-amp sizing problem.
//!
//! Circuit: NMOS differential pair M1/M2 with PMOS current-mirror load
//! M3/M4, biased by the M5/M8 mirror; PMOS common-source second stage M6
//! with NMOS current-source load M7; compensation capacitor Cc across the
//! second stage. Matched pairs share a width: W1=W2, W3=W4, W5=W8.
//!
//! The survivability backend here is a long-channel square-law model with
//! channel-length modulation, standing in for a foundry-model simulation.
//! It reproduces the optimization mechanics, not 65 nm silicon; see
//! [`TechParams`] for the illustrative device parameters.

pub mod ac;
pub mod checks;
pub mod dc;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::problem::{Bounds, Problem, Survival};

pub use ac::{check_saturation, input_noise_psd, slew_and_power, small_signal, SmallSignal};
pub use checks::{spec_violations, Metrics};
pub use dc::{drain_current, solve_operating_point, DeviceState, OperatingPoint};

/// Default lower bound on the bias current when deriving search bounds.
pub const IBIAS_FLOOR: f64 = 1e-6;

/// Number of current branches charged to the power budget when bounding
/// ibias: mirror reference, first stage, second stage.
pub const POWER_BRANCHES: f64 = 3.0;

/// The six decision variables: five transistor widths (meters) and the bias
/// current (amperes). Matched pairs share a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub w12: f64,
    pub w34: f64,
    pub w58: f64,
    pub w6: f64,
    pub w7: f64,
    pub ibias: f64,
}

impl DesignVector {
    /// Position ordering is fixed as `[w12, w34, w58, w6, w7, ibias]`.
    pub fn to_position(self) -> Vec<f64> {
        vec![self.w12, self.w34, self.w58, self.w6, self.w7, self.ibias]
    }

    pub fn from_position(position: &[f64]) -> Self {
        assert_eq!(position.len(), 6, "design vector has 6 dimensions");
        Self {
            w12: position[0],
            w34: position[1],
            w58: position[2],
            w6: position[3],
            w7: position[4],
            ibias: position[5],
        }
    }

    /// The published optimum sizing, used as a cross-check fixture.
    pub fn reference_optimum() -> Self {
        Self {
            w12: 266e-9,
            w34: 783e-9,
            w58: 126e-9,
            w6: 1115e-9,
            w7: 191e-9,
            ibias: 29.7e-6,
        }
    }
}

/// Technology and model parameters for the square-law backend.
///
/// `vdd`, `channel_length`, and `cc_ratio` follow the design setup (1.1 V
/// supply, 60 nm length, Cc = 0.3 CL). The remaining device parameters are
/// illustrative textbook-scale values, not a foundry model; override them
/// as needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechParams {
    pub vdd: f64,
    pub channel_length: f64,
    /// NMOS transconductance parameter mu_n * Cox, A/V^2.
    pub mu_n_cox: f64,
    pub mu_p_cox: f64,
    pub vth_n: f64,
    /// PMOS threshold, negative by convention.
    pub vth_p: f64,
    pub lambda_n: f64,
    pub lambda_p: f64,
    /// Thermal-noise excess factor gamma.
    pub gamma_noise: f64,
    /// Cc = cc_ratio * C_L.
    pub cc_ratio: f64,
    pub temperature: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        Self {
            vdd: 1.1,
            channel_length: 60e-9,
            mu_n_cox: 100e-6,
            mu_p_cox: 400e-6,
            vth_n: 0.3,
            vth_p: -0.3,
            // Short-channel-scale output conductance. The textbook 0.25/V
            // value gives intrinsic gains so high that the gain, bandwidth,
            // and power constraints below cannot be met simultaneously; at
            // 2.5/V the constraint set has a usable feasible volume.
            lambda_n: 2.5,
            lambda_p: 2.5,
            gamma_noise: 1.0,
            cc_ratio: 0.3,
            temperature: 300.0,
        }
    }
}

impl TechParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.vdd > 0.0) {
            return Err(ConfigError::new("vdd", "must be positive"));
        }
        if !(self.channel_length > 0.0) {
            return Err(ConfigError::new("channel_length", "must be positive"));
        }
        if !(self.mu_n_cox > 0.0) || !(self.mu_p_cox > 0.0) {
            return Err(ConfigError::new(
                "mu_n_cox",
                "transconductance parameters must be positive",
            ));
        }
        if self.lambda_n < 0.0 || self.lambda_p < 0.0 {
            return Err(ConfigError::new(
                "lambda_n",
                "channel-length modulation must be >= 0",
            ));
        }
        if !(self.cc_ratio > 0.0 && self.cc_ratio <= 1.0) {
            return Err(ConfigError::new("cc_ratio", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn cc(&self, c_load: f64) -> f64 {
        self.cc_ratio * c_load
    }
}

/// The design-specification constraint set. Defaults are the op-amp spec
/// table: gain >= 20 dB, power <= 400 uW, SR >= 100 V/us, f3dB >= 10 MHz,
/// UGB >= 100 MHz, PM >= 60 deg, ICMR 0.6..1.0 V, noise <= 60 nV/rtHz at
/// 1 MHz, area <= 1 um^2, W/L in 2..200, CL = 200 fF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecTable {
    pub av_min: f64,
    pub p_max: f64,
    pub sr_min: f64,
    pub f3db_min: f64,
    pub ugb_min: f64,
    pub pm_min: f64,
    pub vcm_low: f64,
    pub vcm_high: f64,
    pub noise_max: f64,
    /// Frequency at which the noise spec applies; recorded in reports.
    pub noise_freq: f64,
    pub area_max: f64,
    pub wl_ratio_min: f64,
    pub wl_ratio_max: f64,
    pub c_load: f64,
}

impl Default for SpecTable {
    fn default() -> Self {
        Self {
            av_min: 20.0,
            p_max: 400e-6,
            sr_min: 100e6,
            f3db_min: 10e6,
            ugb_min: 100e6,
            pm_min: 60.0,
            vcm_low: 0.6,
            vcm_high: 1.0,
            noise_max: 60e-9,
            noise_freq: 1e6,
            area_max: 1e-12,
            wl_ratio_min: 2.0,
            wl_ratio_max: 200.0,
            c_load: 200e-15,
        }
    }
}

impl SpecTable {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.vcm_low < self.vcm_high) {
            return Err(ConfigError::new("vcm_low", "must be < vcm_high"));
        }
        if !(self.wl_ratio_min >= 1.0) {
            return Err(ConfigError::new("wl_ratio_min", "must be >= 1"));
        }
        if !(self.c_load > 0.0) {
            return Err(ConfigError::new("c_load", "must be positive"));
        }
        Ok(())
    }
}

/// Per-transistor saturation flags at one common-mode voltage. Order is
/// M1..M8; a flag is true iff |V_DS| >= |V_ov| (boundary counts as
/// saturated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationCheck {
    pub vcm: f64,
    pub flags: [bool; 8],
}

impl SaturationCheck {
    pub fn all_saturated(&self) -> bool {
        self.flags.iter().all(|f| *f)
    }
}

/// Everything the survivability backend measured for one candidate design.
/// `pass` is true iff `violations` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub av_db: f64,
    pub f3db: f64,
    pub ugb: f64,
    pub phase_margin: f64,
    pub slew_rate: f64,
    pub power: f64,
    pub noise_psd: f64,
    /// Frequency the noise spec was checked at.
    pub noise_freq: f64,
    pub area: f64,
    pub saturation: Vec<SaturationCheck>,
    pub pass: bool,
    pub violations: Vec<String>,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            av_db: self.av_db,
            f3db: self.f3db,
            ugb: self.ugb,
            phase_margin: self.phase_margin,
            slew_rate: self.slew_rate,
            power: self.power,
            noise_psd: self.noise_psd,
            area: self.area,
        }
    }
}

/// Total gate area `sum(W_i * L_i)` over all 8 transistors, expanding the
/// matched pairs: `(2*w12 + 2*w34 + 2*w58 + w6 + w7) * L`.
pub fn area_fitness(dv: &DesignVector, tech: &TechParams) -> f64 {
    (2.0 * (dv.w12 + dv.w34 + dv.w58) + dv.w6 + dv.w7) * tech.channel_length
}

/// Search bounds from the specification table: width bounds from the W/L
/// range, ibias upper bound from the power budget split across the three
/// current branches, lower bound from `IBIAS_FLOOR`.
pub fn derive_bounds(specs: &SpecTable, tech: &TechParams) -> Result<Bounds, ConfigError> {
    let w_lo = specs.wl_ratio_min * tech.channel_length;
    let w_hi = specs.wl_ratio_max * tech.channel_length;
    let i_hi = specs.p_max / (POWER_BRANCHES * tech.vdd);
    if !(w_lo < w_hi) || !(IBIAS_FLOOR < i_hi) {
        return Err(ConfigError::new(
            "specs",
            format!(
                "infeasible specification: width bounds [{w_lo:e}, {w_hi:e}], \
                 ibias bounds [{IBIAS_FLOOR:e}, {i_hi:e}]"
            ),
        ));
    }
    Bounds::new(
        vec![w_lo, w_lo, w_lo, w_lo, w_lo, IBIAS_FLOOR],
        vec![w_hi, w_hi, w_hi, w_hi, w_hi, i_hi],
    )
}

/// Run the full survivability pipeline for one design: operating point at
/// both ICMR endpoints, saturation checks at both, AC/noise/slew/power at
/// the midpoint, then every spec comparison. Solver failures become named
/// violations; this never panics on a bad design.
pub fn evaluate(dv: &DesignVector, specs: &SpecTable, tech: &TechParams) -> EvalReport {
    let mut violations = Vec::new();
    let mut saturation = Vec::new();

    let area = area_fitness(dv, tech);

    match derive_bounds(specs, tech) {
        Ok(bounds) => {
            let names = ["w12", "w34", "w58", "w6", "w7", "ibias"];
            let pos = dv.to_position();
            for ((x, name), (lo, hi)) in pos
                .iter()
                .zip(names)
                .zip(bounds.lower().iter().zip(bounds.upper()))
            {
                if *x < *lo || *x > *hi {
                    violations.push(format!("bounds:{name}"));
                }
            }
        }
        Err(e) => violations.push(format!("infeasible-specification: {e}")),
    }

    let vcm_mid = 0.5 * (specs.vcm_low + specs.vcm_high);
    let mut solve_at =
        |vcm: f64, label: &str| match solve_operating_point(dv, tech, vcm, specs.c_load) {
            Ok(op) => Some(op),
            Err(e) => {
                violations.push(format!("{e}@{label}"));
                None
            }
        };

    let op_low = solve_at(specs.vcm_low, "vcm_low");
    let op_high = solve_at(specs.vcm_high, "vcm_high");
    let op_mid = solve_at(vcm_mid, "vcm_mid");

    for (op, label) in [(&op_low, "vcm_low"), (&op_high, "vcm_high")] {
        if let Some(op) = op {
            let check = SaturationCheck {
                vcm: op.vcm,
                flags: check_saturation(op),
            };
            if !check.all_saturated() {
                violations.push(format!("saturation@{label}"));
            }
            saturation.push(check);
        }
    }

    let (mut av_db, mut f3db, mut ugb, mut pm, mut sr, mut power, mut noise) = (
        f64::NAN,
        f64::NAN,
        f64::NAN,
        f64::NAN,
        f64::NAN,
        f64::NAN,
        f64::NAN,
    );
    if let Some(op) = &op_mid {
        let ss = ac::small_signal_metrics(op, tech, specs.c_load);
        av_db = ss.av_db;
        f3db = ss.f3db;
        ugb = ss.ugb;
        pm = ss.phase_margin;
        let (s, p) = slew_and_power(op, tech, specs.c_load);
        sr = s;
        power = p;
        noise = input_noise_psd(op, tech, specs.noise_freq);
    }

    let metrics = Metrics {
        av_db,
        f3db,
        ugb,
        phase_margin: pm,
        slew_rate: sr,
        power,
        noise_psd: noise,
        area,
    };
    violations.extend(spec_violations(&metrics, specs));

    EvalReport {
        av_db,
        f3db,
        ugb,
        phase_margin: pm,
        slew_rate: sr,
        power,
        noise_psd: noise,
        noise_freq: specs.noise_freq,
        area,
        saturation,
        pass: violations.is_empty(),
        violations,
    }
}

/// The op-amp sizing task adapted to the engine's problem interface:
/// fitness is gate area, survive is the full evaluation pipeline, bounds
/// come from the specification table.
#[derive(Debug, Clone)]
pub struct OpampProblem {
    specs: SpecTable,
    tech: TechParams,
    bounds: Bounds,
}

impl OpampProblem {
    pub fn new(specs: SpecTable, tech: TechParams) -> Result<Self, ConfigError> {
        specs.validate()?;
        tech.validate()?;
        let bounds = derive_bounds(&specs, &tech)?;
        Ok(Self {
            specs,
            tech,
            bounds,
        })
    }

    pub fn specs(&self) -> &SpecTable {
        &self.specs
    }

    pub fn tech(&self) -> &TechParams {
        &self.tech
    }

    pub fn evaluate(&self, dv: &DesignVector) -> EvalReport {
        evaluate(dv, &self.specs, &self.tech)
    }
}

impl Problem for OpampProblem {
    fn fitness(&self, position: &[f64]) -> f64 {
        area_fitness(&DesignVector::from_position(position), &self.tech)
    }

    fn survive(&self, position: &[f64]) -> Survival {
        let dv = DesignVector::from_position(position);
        // Cheap width-only rejections first: the bulk of uniform draws fail
        // the area budget and must not pay for a DC solve. Then the two ICMR
        // endpoint solves, which reject most of the remainder, before the
        // full report.
        if area_fitness(&dv, &self.tech) > self.specs.area_max {
            return Survival::fail(vec!["area".into()]);
        }
        if !self.bounds.contains(position) {
            return Survival::fail(vec!["bounds".into()]);
        }
        for (vcm, label) in [
            (self.specs.vcm_low, "vcm_low"),
            (self.specs.vcm_high, "vcm_high"),
        ] {
            match solve_operating_point(&dv, &self.tech, vcm, self.specs.c_load) {
                Ok(op) => {
                    if !check_saturation(&op).iter().all(|&ok| ok) {
                        return Survival::fail(vec![format!("saturation@{label}")]);
                    }
                }
                Err(e) => return Survival::fail(vec![format!("{e}@{label}")]),
            }
        }
        let report = self.evaluate(&dv);
        if report.pass {
            Survival::pass()
        } else {
            Survival::fail(report.violations)
        }
    }

    fn bounds(&self) -> Bounds {
        self.bounds.clone()
    }
}
