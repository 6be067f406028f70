//! AC, noise, slew, and power metrics derived from a solved operating
//! point, using the Miller-compensated two-stage small-signal model.

use std::f64::consts::PI;

use crate::error::SolverError;

use super::dc::OperatingPoint;
use super::TechParams;

pub const BOLTZMANN: f64 = 1.380649e-23;

/// First-stage + second-stage AC summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignal {
    pub av_db: f64,
    pub f3db: f64,
    pub ugb: f64,
    pub phase_margin: f64,
}

/// Per-transistor saturation flags, M1..M8. A device counts as saturated
/// when |V_DS| >= |V_ov|, boundary inclusive.
pub fn check_saturation(op: &OperatingPoint) -> [bool; 8] {
    let mut flags = [false; 8];
    for (flag, dev) in flags.iter_mut().zip(&op.devices) {
        *flag = dev.vds.abs() >= dev.vov.abs();
    }
    flags
}

/// Small-signal metrics without the stability gate; phase margin may come
/// out non-positive for a bad design.
pub(crate) fn small_signal_metrics(
    op: &OperatingPoint,
    tech: &TechParams,
    c_load: f64,
) -> SmallSignal {
    let gm1 = op.device(1).gm;
    let gds2 = op.device(2).gds;
    let gds4 = op.device(4).gds;
    let gm6 = op.device(6).gm;
    let gds6 = op.device(6).gds;
    let gds7 = op.device(7).gds;
    let cc = tech.cc(c_load);

    let av_lin = (gm1 / (gds2 + gds4)) * (gm6 / (gds6 + gds7));
    let av_db = 20.0 * av_lin.log10();
    let ugb = gm1 / (2.0 * PI * cc);
    // Non-dominant pole at the output and the right-half-plane zero from
    // feedforward through Cc.
    let p2 = gm6 / (2.0 * PI * c_load);
    let z = gm6 / (2.0 * PI * cc);
    let phase_margin = 90.0 - (ugb / p2).atan().to_degrees() - (ugb / z).atan().to_degrees();
    let f3db = ugb / av_lin;

    SmallSignal {
        av_db,
        f3db,
        ugb,
        phase_margin,
    }
}

/// Voltage gain, bandwidths, and phase margin. Errors with `Unstable` when
/// the phase margin is non-positive.
pub fn small_signal(
    op: &OperatingPoint,
    tech: &TechParams,
    c_load: f64,
) -> Result<SmallSignal, SolverError> {
    let ss = small_signal_metrics(op, tech, c_load);
    if ss.phase_margin <= 0.0 {
        return Err(SolverError::Unstable(ss.phase_margin));
    }
    Ok(ss)
}

/// Slew rate (whichever stage limits first) and static power.
pub fn slew_and_power(op: &OperatingPoint, tech: &TechParams, c_load: f64) -> (f64, f64) {
    let i5 = op.device(5).id;
    let i6 = op.device(6).id;
    let i8 = op.device(8).id;
    let cc = tech.cc(c_load);
    let slew_rate = (i5 / cc).min(i6 / c_load);
    let power = tech.vdd * (i8 + i5 + i6);
    (slew_rate, power)
}

/// Thermal-only input-referred noise density of the first stage,
/// `sqrt(2 * 4kT * gamma / gm1 * (1 + gm3/gm1))`, in V/sqrt(Hz). The model
/// is frequency-independent; the spec frequency is recorded by the caller.
pub fn input_noise_psd(op: &OperatingPoint, tech: &TechParams, _freq: f64) -> f64 {
    let gm1 = op.device(1).gm;
    let gm3 = op.device(3).gm;
    (2.0 * 4.0 * BOLTZMANN * tech.temperature * tech.gamma_noise / gm1 * (1.0 + gm3 / gm1)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opamp::dc::DeviceState;

    fn op_with(
        gm1: f64,
        gds2: f64,
        gds4: f64,
        gm6: f64,
        gds6: f64,
        gds7: f64,
        gm3: f64,
    ) -> OperatingPoint {
        let d = |gm: f64, gds: f64| DeviceState {
            id: 10e-6,
            vgs: 0.5,
            vds: 0.5,
            vov: 0.15,
            gm,
            gds,
        };
        OperatingPoint {
            devices: [
                d(gm1, 1e-6),
                d(gm1, gds2),
                d(gm3, 1e-6),
                d(gm3, gds4),
                d(1e-3, 1e-6),
                d(gm6, gds6),
                d(1e-3, gds7),
                d(1e-3, 1e-6),
            ],
            v_bias: 0.5,
            v_tail: 0.2,
            v1: 0.6,
            v2: 0.6,
            v_out: 0.55,
            vcm: 0.8,
            kcl_residual_max: 0.0,
        }
    }

    #[test]
    fn ugb_hand_value() {
        // gm1 = 377 uS, Cc = 60 fF -> 1.0 GHz
        let op = op_with(377e-6, 1e-6, 1e-6, 5e-3, 1e-6, 1e-6, 377e-6);
        let tech = TechParams::default();
        let ss = small_signal_metrics(&op, &tech, 200e-15);
        let expected = 377e-6 / (2.0 * PI * 60e-15);
        assert!((ss.ugb - expected).abs() < 1e-6 * expected);
        assert!((ss.ugb - 1.0e9).abs() < 1e7);
    }

    #[test]
    fn two_stage_gain_hand_value() {
        // 100u/1u * 1m/10u = 100 * 100 = 80 dB
        let op = op_with(100e-6, 0.5e-6, 0.5e-6, 1e-3, 5e-6, 5e-6, 100e-6);
        let tech = TechParams::default();
        let ss = small_signal_metrics(&op, &tech, 200e-15);
        assert!((ss.av_db - 80.0).abs() < 1e-9);
    }

    #[test]
    fn huge_gm6_pushes_pm_to_90() {
        let op = op_with(100e-6, 1e-6, 1e-6, 1e3, 1e-6, 1e-6, 100e-6);
        let tech = TechParams::default();
        let ss = small_signal_metrics(&op, &tech, 200e-15);
        assert!(ss.phase_margin > 89.99, "pm {}", ss.phase_margin);
    }

    #[test]
    fn small_signal_flags_instability() {
        // gm6 far below gm1 drags the second pole below the UGB.
        let op = op_with(1e-3, 1e-6, 1e-6, 1e-6, 1e-7, 1e-7, 1e-3);
        let tech = TechParams::default();
        assert!(matches!(
            small_signal(&op, &tech, 200e-15),
            Err(SolverError::Unstable(_))
        ));
    }

    #[test]
    fn saturation_boundary_is_inclusive() {
        let mut op = op_with(1e-4, 1e-6, 1e-6, 1e-3, 1e-6, 1e-6, 1e-4);
        op.devices[0].vds = 0.15; // exactly vov
        assert!(check_saturation(&op)[0]);
        op.devices[0].vds = 0.0;
        assert!(!check_saturation(&op)[0]);
    }

    #[test]
    fn slew_uses_limiting_stage() {
        let mut op = op_with(1e-4, 1e-6, 1e-6, 1e-3, 1e-6, 1e-6, 1e-4);
        let tech = TechParams::default();
        // I5 = 29.7 uA, second stage generous -> 495 V/us from Cc.
        op.devices[4].id = 29.7e-6;
        op.devices[5].id = 200e-6;
        let (sr, _) = slew_and_power(&op, &tech, 200e-15);
        assert!((sr - 495e6).abs() < 1e-3);
        // Second stage limiting: I6/CL < I5/Cc.
        op.devices[5].id = 10e-6;
        let (sr, _) = slew_and_power(&op, &tech, 200e-15);
        assert!((sr - 10e-6 / 200e-15).abs() < 1e-3);
    }

    #[test]
    fn power_hand_value() {
        let mut op = op_with(1e-4, 1e-6, 1e-6, 1e-3, 1e-6, 1e-6, 1e-4);
        let tech = TechParams::default();
        op.devices[4].id = 30e-6;
        op.devices[7].id = 30e-6;
        op.devices[5].id = 40e-6;
        let (_, p) = slew_and_power(&op, &tech, 200e-15);
        assert!((p - 110e-6).abs() < 1e-15);
    }

    #[test]
    fn noise_hand_value_and_scaling() {
        let op = op_with(1e-3, 1e-6, 1e-6, 1e-3, 1e-6, 1e-6, 1e-3);
        let tech = TechParams::default();
        let psd = input_noise_psd(&op, &tech, 1e6);
        let expected = (2.0 * 4.0 * BOLTZMANN * 300.0 * 1.0 / 1e-3 * 2.0).sqrt();
        assert!((psd - expected).abs() < 1e-15);
        assert!((psd - 8.14e-9).abs() < 2e-11, "psd {psd}");

        // Doubling gm1 with gm3/gm1 fixed scales the PSD by 1/sqrt(2).
        let op2 = op_with(2e-3, 1e-6, 1e-6, 1e-3, 1e-6, 1e-6, 2e-3);
        let psd2 = input_noise_psd(&op2, &tech, 1e6);
        assert!((psd2 - psd / 2f64.sqrt()).abs() < 1e-15);
    }
}
