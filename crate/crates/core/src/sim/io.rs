use std::io::{self, Write};

use super::run::{CurrentRecord, Snapshot};

/// Header `replica,time,site,occ_1,…,occ_m`.
pub fn write_snapshot_header<W: Write>(w: &mut W, configs: usize) -> io::Result<()> {
    write!(w, "replica,time,site")?;
    for k in 1..=configs {
        write!(w, ",occ_{k}")?;
    }
    writeln!(w)
}

/// One row per site per snapshot; `∞` is written as `inf`.
pub fn write_snapshots<W: Write>(w: &mut W, replica: u64, snaps: &[Snapshot]) -> io::Result<()> {
    for s in snaps {
        let Some(first) = s.configs.first() else { continue };
        for (i, x) in first.window().sites().enumerate() {
            write!(w, "{replica},{},{x}", s.time)?;
            for c in &s.configs {
                write!(w, ",{}", c.occupancies()[i])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Header `replica,time,observer_id,gamma` with `gamma_2,…` for extra configurations.
pub fn write_current_header<W: Write>(w: &mut W, configs: usize) -> io::Result<()> {
    write!(w, "replica,time,observer_id,gamma")?;
    for k in 2..=configs {
        write!(w, ",gamma_{k}")?;
    }
    writeln!(w)
}

pub fn write_currents<W: Write>(w: &mut W, replica: u64, recs: &[CurrentRecord]) -> io::Result<()> {
    for r in recs {
        write!(w, "{replica},{},{}", r.time, r.observer)?;
        for g in &r.gamma {
            write!(w, ",{g}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
