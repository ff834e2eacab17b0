use thiserror::Error;

use crate::states::StateFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("state families differ: {0:?} vs {1:?}")]
    FamilyMismatch(StateFamily, StateFamily),
    #[error("imperfect operations (p_gate = {p_gate}, eta_meas = {eta_meas}) have no closed form for dephased states")]
    UnsupportedNoise { p_gate: f64, eta_meas: f64 },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}
