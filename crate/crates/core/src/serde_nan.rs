//! JSON has no NaN; serde_json writes it as `null`. These helpers read
//! `null` back as NaN.

use serde::{Deserialize, Deserializer};

pub(crate) fn f64_or_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}
