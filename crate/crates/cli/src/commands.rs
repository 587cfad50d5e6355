//! The six subcommands. Each writes its files through a [`Sink`] and
//! always echoes the resolved configuration.

use beamctl_core::controllability::{linear_response, steer_with};
use beamctl_core::dynamics::{history_residual, integrate_mild_logged, node_index};
use beamctl_core::spectral::{norm_z, reconstruct};
use beamctl_core::synthesis::{approx_experiment, contraction_constants, exact_fixed_point};
use beamctl_core::{GramianOptions, GramianSet, Side};
use clap::ValueEnum;

use crate::config::Resolved;
use crate::output::{coeff_row, fmt, modal_header, state_row, write_csv, Report, Sink};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Integrate the mild solution under the nominal control.
    Simulate,
    /// Per-mode controllability Gramians and condition numbers.
    Gramian,
    /// Linear steering control from z0 to z* on [t0, T].
    Steer,
    /// Pull-back approximate controllability sweep over sigma.
    Approx,
    /// Fixed-point exact controllability.
    Exact,
    /// Contraction certificate.
    Check,
}

pub fn run(cmd: Command, r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let resolved = sink.path("resolved.toml");
    std::fs::write(&resolved, r.to_toml()).map_err(|e| CliError::io(&resolved, e))?;
    match cmd {
        Command::Simulate => simulate(r, sink),
        Command::Gramian => gramian(r, sink),
        Command::Steer => steer(r, sink),
        Command::Approx => approx(r, sink),
        Command::Exact => exact(r, sink),
        Command::Check => check(r, sink),
    }
}

fn simulate(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &r.spec;
    let modes = spec.modes();
    let (traj, diffs) = integrate_mild_logged(spec, &r.nominal)?;

    let mut header = modal_header("t", &["w", "y"], modes);
    header.push("norm_z".into());
    let rows = traj.rows().into_iter().map(|(t, z)| {
        let mut row = state_row(t, z);
        row.push(fmt(norm_z(z)));
        row
    });
    write_csv(&sink.path("simulate_trajectory.csv"), &header, rows)?;

    let nodes = spec.grid.nodes();
    let mut snaps = Vec::new();
    for &t in &r.snapshot_times {
        let z = traj.value(t, Side::Right);
        let w = reconstruct(&z.w, &spec.grid)?;
        let y = reconstruct(&z.y, &spec.grid)?;
        for ((x, wx), yx) in nodes.iter().zip(w).zip(y) {
            snaps.push(vec![fmt(t), fmt(*x), fmt(wx), fmt(yx)]);
        }
    }
    let header: Vec<String> = ["t", "x", "w", "y"].map(String::from).to_vec();
    write_csv(&sink.path("simulate_snapshots.csv"), &header, snaps)?;

    let mut rep = Report::new();
    rep.put("command", &"simulate")
        .put("steps", &spec.steps)
        .num("h", spec.step())
        .put("picard_iterations", &diffs.len())
        .num("picard_final_diff", diffs.last().copied().unwrap_or(0.0))
        .num("terminal_norm_z", norm_z(traj.final_state()))
        .num("sup_norm_z", traj.sup_norm())
        .num("history_residual", history_residual(&traj, spec));
    rep.write(&sink.path("simulate_report.txt"))
}

fn steering_grid(r: &Resolved) -> Result<GramianSet, CliError> {
    let spec = &r.spec;
    let p = &spec.params;
    let h = spec.step();
    let intervals = node_index(p.horizon - r.t0, h).unwrap_or(0).max(1) as usize;
    let opts = GramianOptions {
        quadrature_step: r.contraction.quadrature_step,
        control_intervals: intervals,
    };
    Ok(GramianSet::build(p, r.t0, p.horizon, opts)?)
}

fn gramian(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let gs = steering_grid(r)?;
    let header: Vec<String> = ["n", "W11", "W12", "W21", "W22", "cond"].map(String::from).to_vec();
    let rows = gs.modes.iter().map(|m| {
        let w = &m.gramian.0;
        vec![
            m.mode.to_string(),
            fmt(w[0][0]),
            fmt(w[0][1]),
            fmt(w[1][0]),
            fmt(w[1][1]),
            fmt(m.cond),
        ]
    });
    write_csv(&sink.path("gramian.csv"), &header, rows)?;
    let worst = gs.modes.iter().map(|m| m.cond).fold(0.0, f64::max);
    let mut rep = Report::new();
    rep.put("command", &"gramian")
        .num("t0", gs.t0)
        .num("T", gs.horizon)
        .num("max_cond", worst)
        .num("discretization_defect", gs.discretization_defect(&r.spec.params));
    rep.write(&sink.path("gramian_report.txt"))?;
    gs.check_conditioning()?;
    Ok(())
}

fn steer(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let p = &r.spec.params;
    let gs = steering_grid(r)?;
    gs.check_conditioning()?;
    let u = steer_with(&r.z0, &r.zstar, &gs, p)?;
    let header = modal_header("t", &["u"], p.modes);
    write_csv(
        &sink.path("steer_control.csv"),
        &header,
        u.rows().into_iter().map(|(t, c)| coeff_row(t, c)),
    )?;
    let reached = linear_response(&r.z0, &u, p)?;
    let err = norm_z(&(&reached - &r.zstar));
    // relative to ‖z*‖, absolute when the target is the origin
    let scale = norm_z(&r.zstar);
    let mut rep = Report::new();
    rep.put("command", &"steer")
        .num("t0", r.t0)
        .num("T", p.horizon)
        .put("control_intervals", &u.intervals())
        .num("terminal_error", err)
        .num("relative_terminal_error", if scale > 0.0 { err / scale } else { err })
        .num("control_l2_norm", u.l2_norm())
        .num("control_sup_norm", u.sup_norm());
    rep.write(&sink.path("steer_report.txt"))
}

fn approx(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let res = approx_experiment(&r.spec, &r.nominal, &r.zstar, &r.sigmas)?;
    let header: Vec<String> = [
        "sigma",
        "terminal_error",
        "bound_estimate",
        "delay_identity",
        "locality",
        "tail_drift",
    ]
    .map(String::from)
    .to_vec();
    let rows = res.rows.iter().map(|row| {
        [
            row.sigma,
            row.terminal_error,
            row.bound_estimate,
            row.delay_identity,
            row.locality,
            row.tail_drift,
        ]
        .map(fmt)
        .to_vec()
    });
    write_csv(&sink.path("approx.csv"), &header, rows)?;
    let monotone = res.rows.windows(2).all(|w| w[1].terminal_error <= w[0].terminal_error);
    let bounded = res.rows.iter().all(|row| row.terminal_error <= row.bound_estimate);
    let mut rep = Report::new();
    rep.put("command", &"approx")
        .num("M", res.m)
        .put("rows", &res.rows.len())
        .put("monotone", &monotone)
        .put("within_bound", &bounded);
    rep.write(&sink.path("approx_report.txt"))
}

fn exact(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &r.spec;
    let report = contraction_constants(spec, r.contraction)?;
    if !report.satisfied {
        log::warn!(
            "contraction condition fails (lhs = {:.6}); convergence is not guaranteed",
            report.lhs
        );
    }
    let res = exact_fixed_point(spec, &r.zstar, r.fixed_point)?;
    let header: Vec<String> = ["iter", "sup_diff", "ratio"].map(String::from).to_vec();
    let rows = res
        .log
        .iter()
        .map(|rec| vec![rec.iter.to_string(), fmt(rec.sup_diff), fmt(rec.ratio)]);
    write_csv(&sink.path("exact_iterations.csv"), &header, rows)?;
    let header = modal_header("t", &["u"], spec.modes());
    write_csv(
        &sink.path("exact_control.csv"),
        &header,
        res.control.rows().into_iter().map(|(t, c)| coeff_row(t, c)),
    )?;
    let mut rep = Report::new();
    rep.put("command", &"exact")
        .put("iterations", &res.log.len())
        .num("terminal_error", res.terminal_error)
        .num("residual", res.residual)
        .num("control_l2_norm", res.control.l2_norm())
        .raw(&report.to_text());
    rep.write(&sink.path("exact_report.txt"))
}

fn check(r: &Resolved, sink: &mut Sink) -> Result<(), CliError> {
    let report = contraction_constants(&r.spec, r.contraction)?;
    let path = sink.path("contraction.txt");
    std::fs::write(&path, report.to_text()).map_err(|e| CliError::io(&path, e))
}
