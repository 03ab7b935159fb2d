use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{cast, Parameter, Real};
use crate::error::{Error, Result};

/// Ties a target parameter to an online parameter: `target <- tau * target + (1 - tau) * online`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaLink {
    pub source: String,
    pub dest: String,
    pub tau: f64,
}

/// The online side is borrowed immutably; nothing flows back into it.
pub fn ema_update<T: Real>(link: &EmaLink, online: &Parameter<T>, target: &mut Parameter<T>) -> Result<()> {
    if online.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "EMA {} -> {}: shapes {:?} and {:?}",
            link.source,
            link.dest,
            online.shape(),
            target.shape()
        )));
    }
    let tau: T = cast(link.tau);
    let rest: T = cast(1.0 - link.tau);
    Zip::from(&mut target.value)
        .and(&online.value)
        .for_each(|phi, &theta| *phi = tau * *phi + rest * theta);
    Ok(())
}
