//! Flat TOML gain files, so a run can be pinned to exact gains.
//!
//! ```toml
//! k = [k11, k12, k13, k14, k15, k16, k21, k22, k23, k24, k25, k26]
//! h = [h11, h12, h21, h22]
//! kp = [0.6, 1.4]
//! ki = [0.4, 1.0]
//! theta_correction_limit = 0.0873
//! u_limit = 6.0
//! integrator_limit = 0.2
//! ```

use nalgebra::Matrix2;
use serde::Deserialize;

use super::{GainMatrix, GainSet};
use crate::error::GainsFileError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsDocument {
    k: Vec<f64>,
    h: Vec<f64>,
    kp: Vec<f64>,
    ki: Vec<f64>,
    theta_correction_limit: f64,
    u_limit: f64,
    integrator_limit: f64,
}

fn exact<const N: usize>(field: &'static str, v: &[f64]) -> Result<[f64; N], GainsFileError> {
    let arr: [f64; N] = v.try_into().map_err(|_| GainsFileError::Shape {
        field,
        got: v.len(),
        expected: N,
    })?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err(GainsFileError::Invalid(field));
    }
    Ok(arr)
}

fn non_negative(field: &'static str, v: f64) -> Result<f64, GainsFileError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(GainsFileError::Invalid(field))
    }
}

pub fn load_gains(source: &str) -> Result<GainSet, GainsFileError> {
    let doc: GainsDocument = toml::from_str(source).map_err(|e| GainsFileError::Parse(e.to_string()))?;
    let k = exact::<12>("k", &doc.k)?;
    let h = exact::<4>("h", &doc.h)?;
    let kp = exact::<2>("kp", &doc.kp)?;
    let ki = exact::<2>("ki", &doc.ki)?;
    for (f, v) in [("kp", kp), ("ki", ki)] {
        for x in v {
            non_negative(f, x)?;
        }
    }
    Ok(GainSet {
        k: GainMatrix::from_row_slice(&k),
        h: Matrix2::from_row_slice(&h),
        kp,
        ki,
        theta_correction_limit: non_negative("theta_correction_limit", doc.theta_correction_limit)?,
        u_limit: non_negative("u_limit", doc.u_limit)?,
        integrator_limit: non_negative("integrator_limit", doc.integrator_limit)?,
    })
}

fn list(v: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = v.into_iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

/// Exact round trip through [`load_gains`].
pub fn gains_to_toml(g: &GainSet) -> String {
    let k_rows = (0..2).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| g.k[(i, j)]);
    let h_rows = [g.h[(0, 0)], g.h[(0, 1)], g.h[(1, 0)], g.h[(1, 1)]];
    format!(
        "k = {}\nh = {}\nkp = {}\nki = {}\ntheta_correction_limit = {:?}\nu_limit = {:?}\nintegrator_limit = {:?}\n",
        list(k_rows),
        list(h_rows),
        list(g.kp),
        list(g.ki),
        g.theta_correction_limit,
        g.u_limit,
        g.integrator_limit,
    )
}
