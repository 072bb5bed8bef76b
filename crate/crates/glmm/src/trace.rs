//! CSV output of retained draws.

use crate::error::Result;
use crate::mcmc::PosteriorSamples;
use std::io::Write;

/// Writes one row per retained draw with a header of parameter names.
pub fn write_trace<W: Write>(samples: &PosteriorSamples, out: W) -> Result<()> {
    let cols = samples.columns();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cols.iter().map(|(n, _)| n.as_str()))?;
    for i in 0..samples.len() {
        w.write_record(cols.iter().map(|(_, v)| format!("{}", v[i])))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
