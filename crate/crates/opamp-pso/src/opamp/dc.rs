//! Square-law DC operating-point solver for the two-stage op-amp.
//!
//! Saturation current follows `Id = 1/2 mu Cox (W/L) Vov^2 (1 + lambda Vds)`
//! with the triode region filled in so node equations stay continuous and
//! monotone. The bias diode is solved first, then the first stage by nested
//! bisection (tail node outside, the two drain nodes inside), then the
//! output node. Every bisection runs until the KCL residual is below 1 pA.
//!
//! PMOS devices are handled source-referenced: `vgs`/`vds`/`vov` are stored
//! as positive magnitudes for all eight transistors.

use crate::error::SolverError;

use super::{DesignVector, TechParams};

/// Absolute KCL residual tolerance, amperes.
pub const KCL_TOLERANCE: f64 = 1e-12;

const MAX_BISECTIONS: usize = 200;

/// Small-signal and bias quantities for one device (magnitudes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    pub id: f64,
    pub vgs: f64,
    pub vds: f64,
    pub vov: f64,
    pub gm: f64,
    pub gds: f64,
}

/// Solved bias point. `devices` is ordered M1..M8.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub devices: [DeviceState; 8],
    /// Gate voltage of the M5/M8 bias mirror.
    pub v_bias: f64,
    /// Source node of the differential pair.
    pub v_tail: f64,
    /// Drain of M1 (diode side of the mirror load).
    pub v1: f64,
    /// Drain of M2 (first-stage output).
    pub v2: f64,
    pub v_out: f64,
    pub vcm: f64,
    /// Largest node-current residual left by the solver.
    pub kcl_residual_max: f64,
}

impl OperatingPoint {
    pub fn device(&self, index_1based: usize) -> &DeviceState {
        &self.devices[index_1based - 1]
    }
}

/// Drain current for source-referenced magnitudes. Zero below threshold or
/// for non-positive Vds; triode below Vov, saturation with channel-length
/// modulation above.
pub fn drain_current(kp: f64, w_over_l: f64, vth: f64, lambda: f64, vgs: f64, vds: f64) -> f64 {
    let vov = vgs - vth;
    if vov <= 0.0 || vds <= 0.0 {
        return 0.0;
    }
    let beta = kp * w_over_l;
    if vds < vov {
        beta * (vov * vds - 0.5 * vds * vds) * (1.0 + lambda * vds)
    } else {
        0.5 * beta * vov * vov * (1.0 + lambda * vds)
    }
}

/// Bisection for a non-decreasing residual with `f(lo) <= 0 <= f(hi)`.
fn bisect<F: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, f: F) -> (f64, f64) {
    let mut x = 0.5 * (lo + hi);
    let mut fx = f(x);
    for _ in 0..MAX_BISECTIONS {
        if fx.abs() < 0.1 * KCL_TOLERANCE || (hi - lo) < f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        x = 0.5 * (lo + hi);
        fx = f(x);
    }
    (x, fx)
}

struct Devices {
    // NMOS: M1/M2 (w12), M5/M8 (w58), M7 (w7)
    // PMOS: M3/M4 (w34), M6 (w6)
    kn: f64,
    kp: f64,
    wl12: f64,
    wl34: f64,
    wl58: f64,
    wl6: f64,
    wl7: f64,
    vthn: f64,
    vthp: f64,
    ln: f64,
    lp: f64,
}

impl Devices {
    fn new(dv: &DesignVector, tech: &TechParams) -> Self {
        let l = tech.channel_length;
        Self {
            kn: tech.mu_n_cox,
            kp: tech.mu_p_cox,
            wl12: dv.w12 / l,
            wl34: dv.w34 / l,
            wl58: dv.w58 / l,
            wl6: dv.w6 / l,
            wl7: dv.w7 / l,
            vthn: tech.vth_n,
            vthp: tech.vth_p.abs(),
            ln: tech.lambda_n,
            lp: tech.lambda_p,
        }
    }

    fn id_n(&self, wl: f64, vgs: f64, vds: f64) -> f64 {
        drain_current(self.kn, wl, self.vthn, self.ln, vgs, vds)
    }

    fn id_p(&self, wl: f64, vsg: f64, vsd: f64) -> f64 {
        drain_current(self.kp, wl, self.vthp, self.lp, vsg, vsd)
    }
}

fn device_state(id: f64, vgs: f64, vds: f64, vth: f64, lambda: f64) -> DeviceState {
    let vov = vgs - vth;
    let gm = if vov > 0.0 { 2.0 * id / vov } else { 0.0 };
    DeviceState {
        id,
        vgs,
        vds,
        vov,
        gm,
        gds: lambda * id,
    }
}

/// Solve the full bias point at one input common-mode voltage.
///
/// Fails with `NoConvergence` when a node equation cannot be bracketed
/// within the rails (for example, a bias current the mirror reference
/// cannot carry) and with `Cutoff` when a device that must conduct ends up
/// below threshold.
pub fn solve_operating_point(
    dv: &DesignVector,
    tech: &TechParams,
    vcm: f64,
    _c_load: f64,
) -> Result<OperatingPoint, SolverError> {
    let d = Devices::new(dv, tech);
    let vdd = tech.vdd;
    let ibias = dv.ibias;

    // Bias diode M8: vgs = vds = v_bias carries ibias.
    let f_bias = |vg: f64| d.id_n(d.wl58, vg, vg) - ibias;
    if f_bias(vdd) < 0.0 {
        return Err(SolverError::NoConvergence("bias mirror cannot carry ibias"));
    }
    let (v_bias, r_bias) = bisect(d.vthn, vdd, f_bias);
    if r_bias.abs() > KCL_TOLERANCE {
        return Err(SolverError::NoConvergence("bias diode"));
    }

    // Differential pair conducts only if vcm clears the NMOS threshold.
    if vcm - d.vthn <= 0.0 {
        return Err(SolverError::Cutoff("M1/M2 input pair"));
    }

    // First stage: outer bisection on the tail node, inner bisections on the
    // two drain nodes. Residual at the tail is Id5 - (I1 + I2).
    let solve_v1 = |v_tail: f64| {
        let vgs1 = vcm - v_tail;
        bisect(v_tail, vdd, |v1| {
            d.id_n(d.wl12, vgs1, v1 - v_tail) - d.id_p(d.wl34, vdd - v1, vdd - v1)
        })
    };
    let solve_v2 = |v_tail: f64, v1: f64| {
        let vgs2 = vcm - v_tail;
        let vsg4 = vdd - v1;
        bisect(v_tail, vdd, |v2| {
            d.id_n(d.wl12, vgs2, v2 - v_tail) - d.id_p(d.wl34, vsg4, vdd - v2)
        })
    };
    let tail_residual = |v_tail: f64| {
        let (v1, _) = solve_v1(v_tail);
        let (v2, _) = solve_v2(v_tail, v1);
        let i1 = d.id_n(d.wl12, vcm - v_tail, v1 - v_tail);
        let i2 = d.id_n(d.wl12, vcm - v_tail, v2 - v_tail);
        d.id_n(d.wl58, v_bias, v_tail) - (i1 + i2)
    };
    let tail_hi = (vcm - d.vthn).min(vdd);
    let (v_tail, r_tail) = bisect(0.0, tail_hi, tail_residual);
    if r_tail.abs() > KCL_TOLERANCE {
        return Err(SolverError::NoConvergence("tail node"));
    }
    let (v1, r1) = solve_v1(v_tail);
    let (v2, r2) = solve_v2(v_tail, v1);
    if r1.abs() > KCL_TOLERANCE || r2.abs() > KCL_TOLERANCE {
        return Err(SolverError::NoConvergence("first-stage drains"));
    }

    // Output stage: M6 (PMOS, gate at v2) against M7 (NMOS, gate at v_bias).
    // Id6 - Id7 decreases with v_out, so bisect on the negated residual.
    if vdd - v2 - d.vthp <= 0.0 {
        return Err(SolverError::Cutoff("M6 second-stage input"));
    }
    let out_residual =
        |v_out: f64| d.id_n(d.wl7, v_bias, v_out) - d.id_p(d.wl6, vdd - v2, vdd - v_out);
    let (v_out, r_out) = bisect(0.0, vdd, out_residual);
    if r_out.abs() > KCL_TOLERANCE {
        return Err(SolverError::NoConvergence("output node"));
    }

    let vgs_pair = vcm - v_tail;
    let i1 = d.id_n(d.wl12, vgs_pair, v1 - v_tail);
    let i2 = d.id_n(d.wl12, vgs_pair, v2 - v_tail);
    let i5 = d.id_n(d.wl58, v_bias, v_tail);
    let i8 = d.id_n(d.wl58, v_bias, v_bias);
    let i6 = d.id_p(d.wl6, vdd - v2, vdd - v_out);
    let i7 = d.id_n(d.wl7, v_bias, v_out);

    let devices = [
        device_state(i1, vgs_pair, v1 - v_tail, d.vthn, d.ln), // M1
        device_state(i2, vgs_pair, v2 - v_tail, d.vthn, d.ln), // M2
        device_state(i1, vdd - v1, vdd - v1, d.vthp, d.lp),    // M3 (diode)
        device_state(i2, vdd - v1, vdd - v2, d.vthp, d.lp),    // M4
        device_state(i5, v_bias, v_tail, d.vthn, d.ln),        // M5
        device_state(i6, vdd - v2, vdd - v_out, d.vthp, d.lp), // M6
        device_state(i7, v_bias, v_out, d.vthn, d.ln),         // M7
        device_state(i8, v_bias, v_bias, d.vthn, d.ln),        // M8
    ];

    const NAMES: [&str; 8] = ["M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"];
    for (i, dev) in devices.iter().enumerate() {
        if dev.vov <= 0.0 {
            return Err(SolverError::Cutoff(NAMES[i]));
        }
    }

    let kcl_residual_max = [r_bias.abs(), r_tail.abs(), r1.abs(), r2.abs(), r_out.abs()]
        .into_iter()
        .fold(0.0f64, f64::max);

    Ok(OperatingPoint {
        devices,
        v_bias,
        v_tail,
        v1,
        v2,
        v_out,
        vcm,
        kcl_residual_max,
    })
}
