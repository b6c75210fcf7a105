//! CSV renderings of classifier and bound outputs. Floats use the shortest
//! representation that round-trips, so equal values always print identically.

use std::io::Write;

use crate::bounds::BoundReport;
use crate::classifier::{PosteriorReport, PrefixReports};

pub const POSTERIORS_MAGIC: &str = "#preattack-posteriors v1";
pub const BOUNDS_MAGIC: &str = "#preattack-bounds v1";

fn header<W: Write>(w: &mut W, k: usize) -> std::io::Result<()> {
    writeln!(w, "{POSTERIORS_MAGIC}")?;
    if k == 2 {
        return writeln!(w, "user,checkpoint,posterior_fake,log_joint_F,log_joint_R,n_send,n_recv");
    }
    write!(w, "user,checkpoint")?;
    for c in 0..k {
        write!(w, ",posterior_{c}")?;
    }
    for c in 0..k {
        write!(w, ",log_joint_{c}")?;
    }
    writeln!(w, ",n_send,n_recv")
}

fn row<W: Write>(w: &mut W, checkpoint: &str, r: &PosteriorReport) -> std::io::Result<()> {
    write!(w, "{},{checkpoint}", r.user)?;
    if r.posterior.len() == 2 {
        write!(w, ",{},{},{}", r.posterior[1], r.log_joint[1], r.log_joint[0])?;
    } else {
        for p in r.posterior.iter().chain(&r.log_joint) {
            write!(w, ",{p}")?;
        }
    }
    writeln!(w, ",{},{}", r.edge_count_send, r.edge_count_recv)
}

/// Whole-stream posteriors; the checkpoint column reads `all`.
pub fn write_posteriors<W: Write>(reports: &[PosteriorReport], k: usize, mut w: W) -> std::io::Result<()> {
    header(&mut w, k)?;
    for r in reports {
        row(&mut w, "all", r)?;
    }
    Ok(())
}

/// Per-checkpoint posteriors, user-major.
pub fn write_prefix_posteriors<W: Write>(prefixes: &PrefixReports, k: usize, mut w: W) -> std::io::Result<()> {
    header(&mut w, k)?;
    for (cp, r) in prefixes.iter() {
        row(&mut w, &cp.to_string(), r)?;
    }
    Ok(())
}

pub fn write_bounds<W: Write>(reports: &[BoundReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{BOUNDS_MAGIC}")?;
    writeln!(w, "user,p_hat,f_lower,f_upper,p_wcf,p_wcr")?;
    for b in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            b.user, b.p_hat, b.f_lower, b.f_upper, b.worst_case_posterior_f, b.worst_case_posterior_r
        )?;
    }
    Ok(())
}
