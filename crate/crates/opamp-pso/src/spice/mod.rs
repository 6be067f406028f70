//! Optional external-simulator survivability backend.
//!
//! Mirrors the reference methodology: render a netlist for the op-amp from
//! a template, run a SPICE binary in non-interactive batch mode, and parse
//! the measured metrics into the same report type the analytical backend
//! produces. The spec comparison itself is shared code
//! ([`crate::opamp::spec_violations`]), so a metric set passes under one
//! backend iff it passes under the other.
//!
//! No device models ship with this crate; the model file and simulator path
//! are user-supplied configuration. Slew rate is not measured (no transient
//! analysis) and is taken from the analytical formula.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::SpiceError;
use crate::opamp::{
    spec_violations, DesignVector, EvalReport, Metrics, SaturationCheck, SpecTable, TechParams,
};

/// Netlist template with `{name}` placeholders. Every placeholder must map
/// to a design-vector or technology field (plus the derived `cc`, `cl`,
/// `vcm`, `l`, and `model_include` values), and rendering must leave no
/// placeholder unresolved.
#[derive(Debug, Clone)]
pub struct NetlistTemplate {
    pub template_text: String,
    pub model_include_path: PathBuf,
}

/// Batch-mode ngspice-style template for the two-stage op-amp of the
/// sizing problem.
pub const DEFAULT_TEMPLATE: &str = "\
* two-stage miller op-amp survivability deck
.include {model_include}
vdd vdd 0 dc {vdd}
vip inp 0 dc {vcm} ac 1
vin inn 0 dc {vcm}
* first stage: nmos pair, pmos mirror load, nmos tail mirror
m1 n1 inp ns 0 nmod W={w12} L={l}
m2 n2 inn ns 0 nmod W={w12} L={l}
m3 n1 n1 vdd vdd pmod W={w34} L={l}
m4 n2 n1 vdd vdd pmod W={w34} L={l}
m5 ns nb 0 0 nmod W={w58} L={l}
m8 nb nb 0 0 nmod W={w58} L={l}
ibias vdd nb dc {ibias}
* second stage: pmos common source, nmos current-source load
m6 out n2 vdd vdd pmod W={w6} L={l}
m7 out nb 0 0 nmod W={w7} L={l}
cc n2 out {cc}
cl out 0 {cl}
.op
.ac dec 100 1k 100g
.noise v(out) vip dec 10 1k 100g
.measure ac av_db find vdb(out) at=1k
.measure ac ugb when vdb(out)=0
.measure ac f3db when vdb(out)='av_db-3'
.measure ac pm find vp(out) when vdb(out)=0
.measure noise noise find inoise_spectrum at={noise_freq}
.measure op power param='-i(vdd)*{vdd}'
.measure op vcm param='{vcm}'
.measure op vds_m1 param='v(n1)-v(ns)'
.measure op vov_m1 param='v(inp)-v(ns)-vth_n'
.measure op vds_m2 param='v(n2)-v(ns)'
.measure op vov_m2 param='v(inn)-v(ns)-vth_n'
.measure op vds_m3 param='v(vdd)-v(n1)'
.measure op vov_m3 param='v(vdd)-v(n1)-vth_p'
.measure op vds_m4 param='v(vdd)-v(n2)'
.measure op vov_m4 param='v(vdd)-v(n1)-vth_p'
.measure op vds_m5 param='v(ns)'
.measure op vov_m5 param='v(nb)-vth_n'
.measure op vds_m6 param='v(vdd)-v(out)'
.measure op vov_m6 param='v(vdd)-v(n2)-vth_p'
.measure op vds_m7 param='v(out)'
.measure op vov_m7 param='v(nb)-vth_n'
.measure op vds_m8 param='v(nb)'
.measure op vov_m8 param='v(nb)-vth_n'
.end
";

impl NetlistTemplate {
    pub fn with_default_deck(model_include_path: impl Into<PathBuf>) -> Self {
        Self {
            template_text: DEFAULT_TEMPLATE.to_string(),
            model_include_path: model_include_path.into(),
        }
    }
}

/// Captured output of one simulator invocation.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub raw_stdout: String,
    pub measured: BTreeMap<String, f64>,
    pub exit_status: i32,
}

/// Deterministic length formatting in integer-friendly nanometers:
/// 266e-9 renders as `266n`.
fn format_nano(meters: f64) -> String {
    let nm = meters * 1e9;
    if (nm - nm.round()).abs() < 1e-6 * nm.abs().max(1.0) {
        format!("{}n", nm.round() as i64)
    } else {
        format!("{nm}n")
    }
}

fn placeholder_map(
    dv: &DesignVector,
    tech: &TechParams,
    specs: &SpecTable,
    vcm: f64,
    template: &NetlistTemplate,
) -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    m.insert("w12", format_nano(dv.w12));
    m.insert("w34", format_nano(dv.w34));
    m.insert("w58", format_nano(dv.w58));
    m.insert("w6", format_nano(dv.w6));
    m.insert("w7", format_nano(dv.w7));
    m.insert("l", format_nano(tech.channel_length));
    m.insert("ibias", format!("{}", dv.ibias));
    m.insert("vdd", format!("{}", tech.vdd));
    m.insert("vcm", format!("{vcm}"));
    m.insert("cl", format!("{}", specs.c_load));
    m.insert("cc", format!("{}", tech.cc(specs.c_load)));
    m.insert("noise_freq", format!("{}", specs.noise_freq));
    m.insert(
        "model_include",
        template.model_include_path.display().to_string(),
    );
    m
}

/// Render the template for one design at one common-mode voltage.
/// Deterministic and byte-identical for identical inputs. Errors when a
/// required placeholder is absent from the template or an unknown one is
/// left unresolved.
pub fn emit_netlist(
    dv: &DesignVector,
    tech: &TechParams,
    specs: &SpecTable,
    vcm: f64,
    template: &NetlistTemplate,
) -> Result<String, SpiceError> {
    let map = placeholder_map(dv, tech, specs, vcm, template);
    for key in [
        "w12", "w34", "w58", "w6", "w7", "l", "ibias", "vdd", "cl", "cc",
    ] {
        if !template.template_text.contains(&format!("{{{key}}}")) {
            return Err(SpiceError::UnresolvedPlaceholder(key.to_string()));
        }
    }
    let mut text = template.template_text.clone();
    for (key, value) in &map {
        text = text.replace(&format!("{{{key}}}"), value);
    }
    if let Some(start) = text.find('{') {
        let rest = &text[start + 1..];
        let name: String = rest
            .chars()
            .take_while(|c| *c != '}' && !c.is_whitespace())
            .collect();
        return Err(SpiceError::UnresolvedPlaceholder(name));
    }
    Ok(text)
}

/// Extract `name = value` measure lines into a metric map. Names are
/// lowercased; the first number after `=` wins.
pub fn parse_measures(stdout: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in stdout.lines() {
        let Some((lhs, rhs)) = line.split_once('=') else {
            continue;
        };
        let name = lhs.trim().to_ascii_lowercase();
        if name.is_empty() || name.contains(char::is_whitespace) {
            continue;
        }
        let value_token = rhs.split_whitespace().next();
        if let Some(v) = value_token.and_then(|t| t.parse::<f64>().ok()) {
            out.entry(name).or_insert(v);
        }
    }
    out
}

/// Write the netlist to an isolated temporary directory and run the
/// simulator in batch mode. Missing executable maps to
/// `BackendUnavailable` so callers can skip instead of fail.
pub fn run_simulator(
    netlist: &str,
    simulator_path: &Path,
    timeout: Duration,
) -> Result<SimResult, SpiceError> {
    let dir = tempfile::tempdir()?;
    let deck = dir.path().join("circuit.sp");
    let stdout_path = dir.path().join("stdout.txt");
    std::fs::File::create(&deck)?.write_all(netlist.as_bytes())?;
    let stdout_file = std::fs::File::create(&stdout_path)?;

    let spawned = Command::new(simulator_path)
        .arg("-b")
        .arg(&deck)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(stdout_file)
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SpiceError::BackendUnavailable(format!(
                "{}: not found",
                simulator_path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SpiceError::Timeout(timeout.as_secs_f64()));
        }
        std::thread::sleep(Duration::from_millis(5));
    };

    let raw_stdout = std::fs::read_to_string(&stdout_path).unwrap_or_default();
    let code = status.code().unwrap_or(-1);
    if !status.success() {
        return Err(SpiceError::SimulationFailed {
            status: code,
            output: raw_stdout,
        });
    }
    let measured = parse_measures(&raw_stdout);
    Ok(SimResult {
        raw_stdout,
        measured,
        exit_status: code,
    })
}

/// Quantities the simulator does not measure and the caller supplies from
/// the analytical side: gate area always, slew rate because no transient
/// analysis is run.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticSupplement {
    pub area: f64,
    pub slew_rate: f64,
}

const REQUIRED_METRICS: [&str; 6] = ["av_db", "f3db", "ugb", "pm", "noise", "power"];

/// Build an [`EvalReport`] from one simulation, using the shared spec
/// checker. Saturation flags come from the measured `vds_m*`/`vov_m*`
/// pairs with the same inclusive |Vds| >= |Vov| rule as the analytical
/// backend. A missing metric is a parse error naming it.
pub fn parse_results(
    raw: &SimResult,
    specs: &SpecTable,
    supplement: AnalyticSupplement,
) -> Result<EvalReport, SpiceError> {
    let get = |name: &str| -> Result<f64, SpiceError> {
        raw.measured
            .get(name)
            .copied()
            .ok_or_else(|| SpiceError::ParseError(name.to_string()))
    };
    for name in REQUIRED_METRICS {
        get(name)?;
    }

    let mut flags = [false; 8];
    for (i, flag) in flags.iter_mut().enumerate() {
        let vds = get(&format!("vds_m{}", i + 1))?;
        let vov = get(&format!("vov_m{}", i + 1))?;
        *flag = vds.abs() >= vov.abs();
    }
    let vcm = raw.measured.get("vcm").copied().unwrap_or(f64::NAN);
    let saturation = SaturationCheck { vcm, flags };

    let metrics = Metrics {
        av_db: get("av_db")?,
        f3db: get("f3db")?,
        ugb: get("ugb")?,
        phase_margin: get("pm")?,
        slew_rate: supplement.slew_rate,
        power: get("power")?.abs(),
        noise_psd: get("noise")?,
        area: supplement.area,
    };
    let mut violations = spec_violations(&metrics, specs);
    if !saturation.all_saturated() {
        violations.push("saturation".into());
    }

    Ok(EvalReport {
        av_db: metrics.av_db,
        f3db: metrics.f3db,
        ugb: metrics.ugb,
        phase_margin: metrics.phase_margin,
        slew_rate: metrics.slew_rate,
        power: metrics.power,
        noise_psd: metrics.noise_psd,
        noise_freq: specs.noise_freq,
        area: metrics.area,
        saturation: vec![saturation],
        pass: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> DesignVector {
        DesignVector::reference_optimum()
    }

    #[test]
    fn netlist_is_deterministic_and_carries_widths() {
        let t = NetlistTemplate::with_default_deck("models.sp");
        let specs = SpecTable::default();
        let tech = TechParams::default();
        let a = emit_netlist(&table2(), &tech, &specs, 0.8, &t).unwrap();
        let b = emit_netlist(&table2(), &tech, &specs, 0.8, &t).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("W=266n"));
        assert!(a.contains("W=1115n"));
        assert!(a.contains("W=783n"));
        assert!(a.contains("L=60n"));
        assert!(!a.contains('{'));
    }

    #[test]
    fn distinct_vectors_give_distinct_netlists() {
        let t = NetlistTemplate::with_default_deck("models.sp");
        let specs = SpecTable::default();
        let tech = TechParams::default();
        let mut other = table2();
        other.w6 = 1116e-9;
        let a = emit_netlist(&table2(), &tech, &specs, 0.8, &t).unwrap();
        let b = emit_netlist(&other, &tech, &specs, 0.8, &t).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn missing_ibias_placeholder_is_named() {
        let t = NetlistTemplate {
            template_text: DEFAULT_TEMPLATE.replace("{ibias}", "1u"),
            model_include_path: "models.sp".into(),
        };
        match emit_netlist(
            &table2(),
            &TechParams::default(),
            &SpecTable::default(),
            0.8,
            &t,
        ) {
            Err(SpiceError::UnresolvedPlaceholder(name)) => assert_eq!(name, "ibias"),
            other => panic!("expected placeholder error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_placeholder_is_reported() {
        let t = NetlistTemplate {
            template_text: format!("{DEFAULT_TEMPLATE}\n.param x={{mystery}}\n"),
            model_include_path: "models.sp".into(),
        };
        match emit_netlist(
            &table2(),
            &TechParams::default(),
            &SpecTable::default(),
            0.8,
            &t,
        ) {
            Err(SpiceError::UnresolvedPlaceholder(name)) => assert_eq!(name, "mystery"),
            other => panic!("expected placeholder error, got {other:?}"),
        }
    }

    #[test]
    fn measure_lines_parse() {
        let text = "av_db  =  2.16e+01 at= 1.0e3\nugb = 1.697e8\njunk line\npm=62.4\n";
        let m = parse_measures(text);
        assert_eq!(m["av_db"], 21.6);
        assert_eq!(m["ugb"], 1.697e8);
        assert_eq!(m["pm"], 62.4);
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn missing_executable_is_backend_unavailable() {
        let err = run_simulator(
            "* empty\n.end\n",
            Path::new("/nonexistent/ngspice-xyz"),
            Duration::from_secs(1),
        )
        .unwrap_err();
        assert!(matches!(err, SpiceError::BackendUnavailable(_)), "{err:?}");
    }

    #[test]
    fn zero_timeout_forces_timeout() {
        // Any process that does not exit instantly will trip a zero timeout.
        let err = run_simulator("ignored", Path::new("/bin/sleep"), Duration::ZERO);
        match err {
            Err(SpiceError::Timeout(_)) => {}
            // sleep exits nonzero on the bogus argument if it wins the race
            Err(SpiceError::SimulationFailed { .. }) => {}
            other => panic!("expected timeout, got {other:?}"),
        }
    }
}
