//! Per-tick simulation record and its CSV form.
//!
//! Column order is fixed; the header row carries `name[unit]`. Floats are
//! written in shortest round-trip form, so reading a trace back gives the
//! identical values.

use std::io::Write;

use nalgebra::Vector2;

use crate::error::TraceError;
use crate::kinematics::PlanarPosition;
use crate::linearization::StateVector6;
use crate::model::{EnergyBreakdown, GeneralizedState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Ground truth.
    pub state: GeneralizedState,
    /// What the controller saw.
    pub measured: StateVector6,
    pub odometry: PlanarPosition,
    /// Contact point, relative to the start.
    pub position: PlanarPosition,
    pub psi_dot_ref: Vector2<f64>,
    /// Position-loop output placed in the θ slots of `x_ref`.
    pub theta_ref: Vector2<f64>,
    pub u: Vector2<f64>,
    pub saturated: [bool; 2],
    /// External torque on θ1, θ2 at the tick.
    pub push: Vector2<f64>,
    pub energy: EnergyBreakdown,
    pub fell: bool,
}

impl TraceRow {
    /// Absolute wheel and roller rates, rad/s.
    pub fn psi_dot(&self) -> Vector2<f64> {
        self.state.psi_dot()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn fell(&self) -> bool {
        self.rows.last().is_some_and(|r| r.fell)
    }

    pub fn fell_at(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.fell).map(|r| r.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS).map_err(csv_io)?;
        for r in &self.rows {
            w.write_record(row_fields(r)).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

fn csv_io(e: csv::Error) -> TraceError {
    TraceError::Io(std::io::Error::other(e))
}

pub const COLUMNS: [&str; 35] = [
    "t[s]",
    "theta1[rad]",
    "theta2[rad]",
    "phi1[rad]",
    "phi2[rad]",
    "theta1_dot[rad/s]",
    "theta2_dot[rad/s]",
    "phi1_dot[rad/s]",
    "phi2_dot[rad/s]",
    "meas_theta1[rad]",
    "meas_theta2[rad]",
    "meas_theta1_dot[rad/s]",
    "meas_theta2_dot[rad/s]",
    "meas_phi1_dot[rad/s]",
    "meas_phi2_dot[rad/s]",
    "odo_px[m]",
    "odo_py[m]",
    "px[m]",
    "py[m]",
    "psi1_dot_ref[rad/s]",
    "psi2_dot_ref[rad/s]",
    "theta1_ref[rad]",
    "theta2_ref[rad]",
    "u1[N*m]",
    "u2[N*m]",
    "sat1[bool]",
    "sat2[bool]",
    "push1[N*m]",
    "push2[N*m]",
    "k_roller[J]",
    "k_wheel[J]",
    "k_body[J]",
    "potential[J]",
    "energy[J]",
    "fell[bool]",
];

fn row_fields(r: &TraceRow) -> Vec<String> {
    let mut v: Vec<f64> = Vec::with_capacity(COLUMNS.len());
    v.push(r.t);
    v.extend(r.state.q.iter());
    v.extend(r.state.dq.iter());
    v.extend(r.measured.iter());
    v.extend([r.odometry.px, r.odometry.py, r.position.px, r.position.py]);
    v.extend(r.psi_dot_ref.iter());
    v.extend(r.theta_ref.iter());
    v.extend(r.u.iter());
    let mut out: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    out.extend(r.saturated.iter().map(|&b| u8::from(b).to_string()));
    out.extend(r.push.iter().map(|x| x.to_string()));
    let e = &r.energy;
    out.extend([e.kinetic_roller, e.kinetic_wheel, e.kinetic_body, e.potential, e.total].map(|x| x.to_string()));
    out.push(u8::from(r.fell).to_string());
    out
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    }
}

/// Parse a trace written by [`Trace::write_csv`].
pub fn read_trace_csv(source: &str) -> Result<Trace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source.as_bytes());
    let header = rdr.headers().map_err(|e| TraceError::Header(e.to_string()))?;
    if header.len() != COLUMNS.len() || header.iter().zip(COLUMNS).any(|(a, b)| a != b) {
        return Err(TraceError::Header(format!(
            "expected {} columns starting `{}`",
            COLUMNS.len(),
            COLUMNS[0]
        )));
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TraceError::Row { line, msg: e.to_string() })?;
        let bad = |msg: String| TraceError::Row { line, msg };
        if rec.len() != COLUMNS.len() {
            return Err(bad(format!("{} fields", rec.len())));
        }
        let f = |j: usize| -> Result<f64, TraceError> {
            rec[j]
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", COLUMNS[j])))
        };
        let b = |j: usize| parse_bool(&rec[j]).map_err(|m| bad(format!("{}: {m}", COLUMNS[j])));

        let mut state = GeneralizedState::default();
        for k in 0..4 {
            state.q[k] = f(1 + k)?;
            state.dq[k] = f(5 + k)?;
        }
        let mut measured = StateVector6::zeros();
        for k in 0..6 {
            measured[k] = f(9 + k)?;
        }
        let row = TraceRow {
            t: f(0)?,
            state,
            measured,
            odometry: PlanarPosition::new(f(15)?, f(16)?),
            position: PlanarPosition::new(f(17)?, f(18)?),
            psi_dot_ref: Vector2::new(f(19)?, f(20)?),
            theta_ref: Vector2::new(f(21)?, f(22)?),
            u: Vector2::new(f(23)?, f(24)?),
            saturated: [b(25)?, b(26)?],
            push: Vector2::new(f(27)?, f(28)?),
            energy: EnergyBreakdown {
                kinetic_roller: f(29)?,
                kinetic_wheel: f(30)?,
                kinetic_body: f(31)?,
                potential: f(32)?,
                total: f(33)?,
            },
            fell: b(34)?,
        };
        if let Some(prev) = rows.last() {
            let prev: &TraceRow = prev;
            if !(row.t > prev.t) {
                return Err(bad(format!("time {} not after {}", row.t, prev.t)));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(Trace { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector4;

    fn sample_row(t: f64) -> TraceRow {
        TraceRow {
            t,
            state: GeneralizedState::new(Vector4::new(0.1, -0.2, 1.0 / 3.0, 1e-300), Vector4::new(-0.0, 2.5, 3.0, 4.0)),
            measured: StateVector6::from_column_slice(&[0.1, 0.2, 0.3, 0.4, 0.5, std::f64::consts::PI]),
            odometry: PlanarPosition::new(0.01, -0.02),
            position: PlanarPosition::new(0.011, -0.021),
            psi_dot_ref: Vector2::new(1.98, 0.0),
            theta_ref: Vector2::new(1e-5, -1e-7),
            u: Vector2::new(6.0, -0.123456789012345),
            saturated: [true, false],
            push: Vector2::new(0.0, 1.5),
            energy: EnergyBreakdown::new(0.1, 0.2, 0.3, 5.4),
            fell: false,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trace = Trace {
            rows: vec![sample_row(0.0), sample_row(0.008), TraceRow { fell: true, ..sample_row(0.016) }],
        };
        let text = trace.to_csv_string();
        let back = read_trace_csv(&text).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.fell_at(), Some(0.016));
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn header_has_units() {
        let text = Trace { rows: vec![sample_row(0.0)] }.to_csv_string();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("t[s],theta1[rad]"));
        assert!(header.split(',').all(|c| c.contains('[') && c.ends_with(']')));
    }

    #[test]
    fn malformed_inputs_rejected() {
        let text = Trace { rows: vec![sample_row(0.0), sample_row(0.008)] }.to_csv_string();
        assert!(matches!(read_trace_csv(""), Err(TraceError::Header(_)) | Err(TraceError::Empty)));
        let header_only = text.lines().next().unwrap().to_string() + "\n";
        assert!(matches!(read_trace_csv(&header_only), Err(TraceError::Empty)));
        let bad_header = text.replacen("t[s]", "time", 1);
        assert!(matches!(read_trace_csv(&bad_header), Err(TraceError::Header(_))));
        let bad_value = text.replacen("1.98", "x", 1);
        assert!(matches!(read_trace_csv(&bad_value), Err(TraceError::Row { line: 2, .. })));
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        assert!(matches!(read_trace_csv(&lines.join("\n")), Err(TraceError::Row { line: 3, .. })));
    }
}
