//! Fast numerical self-checks behind `cepre check`: re-derive the core
//! invariants (analytic gradient, closed-form projection, surrogate
//! sandwich, symbol-error bound) on fresh random instances so a user can
//! validate a build in seconds without the full test suite.
//!
//! Setting `CEPRE_INJECT_FAULT=<check-name>` forces that check to fail,
//! which exercises the failure path end to end.

use cepre_core::channel::{lift, rayleigh_channel, receive, stack_real, SymbolBlock};
use cepre_core::constellation::QamConstellation;
use cepre_core::metrics::ser_upper_bound;
use cepre_core::objective::{DecisionPoint, SmoothedObjective};
use cepre_core::rng::stream_rng;
use cepre_core::solver::project_envelope;
use cepre_core::{solve, SolverConfig};

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run every check; `quick` shrinks instance counts so the whole suite
/// finishes well under ten seconds.
pub fn run_all(quick: bool) -> Vec<CheckOutcome> {
    vec![
        run_one("gradient-fd", || gradient_fd(quick)),
        run_one("projection-grid", || projection_grid(quick)),
        run_one("lse-sandwich", || lse_sandwich(quick)),
        run_one("ser-bound", || ser_bound(quick)),
    ]
}

fn run_one(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckOutcome {
    if std::env::var("CEPRE_INJECT_FAULT").as_deref() == Ok(name) {
        return CheckOutcome {
            name,
            passed: false,
            detail: "injected fault via CEPRE_INJECT_FAULT".to_string(),
        };
    }
    match body() {
        Ok(detail) => CheckOutcome { name, passed: true, detail },
        Err(detail) => CheckOutcome { name, passed: false, detail },
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    format!("setup failed: {e}")
}

/// Central finite differences over every coordinate of the smoothed
/// objective's analytic gradient, on a spread of instance shapes.
fn gradient_fd(quick: bool) -> Result<String, String> {
    let shapes: &[(usize, usize, usize)] = if quick {
        &[(6, 2, 2), (8, 2, 1)]
    } else {
        &[(8, 2, 1), (8, 2, 10), (32, 8, 1), (32, 8, 10), (16, 4, 5), (8, 8, 3)]
    };
    let q = QamConstellation::new(2).map_err(fail)?;
    let step = 1e-6;
    let mut worst = 0.0f64;
    let mut coords = 0usize;
    for (idx, &(n, k, t)) in shapes.iter().enumerate() {
        let mut rng = stream_rng(0xC8EC, idx as u64);
        let h = rayleigh_channel(k, n, &mut rng).map_err(fail)?;
        let block = SymbolBlock::draw_uniform(&q, k, t, &mut rng).map_err(fail)?;
        let obj = SmoothedObjective::new(lift(&h), &block, 0.05).map_err(fail)?;
        let probe = rayleigh_channel(n, t, &mut rng).map_err(fail)?;
        let mut xbar = stack_real(&probe.matrix().to_owned());
        xbar.mapv_inplace(|v| 0.2 * v);
        let point = DecisionPoint::new(0.37, xbar);
        let (_, _, grad) = obj.value_and_gradient(&point).map_err(fail)?;

        let fd_at = |plus: &DecisionPoint, minus: &DecisionPoint| -> Result<f64, String> {
            let fp = obj.value(plus).map_err(fail)?.0;
            let fm = obj.value(minus).map_err(fail)?.0;
            Ok((fp - fm) / (2.0 * step))
        };
        for r in 0..point.xbar.nrows() {
            for c in 0..point.xbar.ncols() {
                let mut plus = point.clone();
                let mut minus = point.clone();
                plus.xbar[(r, c)] += step;
                minus.xbar[(r, c)] -= step;
                let fd = fd_at(&plus, &minus)?;
                let a = grad.xbar[(r, c)];
                worst = worst.max((a - fd).abs() / a.abs().max(1e-2));
                coords += 1;
            }
        }
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus.d += step;
        minus.d -= step;
        let fd = fd_at(&plus, &minus)?;
        worst = worst.max((grad.d - fd).abs() / grad.d.abs().max(1e-2));
        coords += 1;
    }
    if worst < 1e-5 {
        Ok(format!("max relative error {worst:.2e} over {coords} coordinates"))
    } else {
        Err(format!("analytic gradient deviates from finite differences by {worst:.2e}"))
    }
}

/// The closed-form envelope projection must never lose to a dense angular
/// grid, the grid must not lag it by more than its own resolution, and
/// projecting twice must change nothing.
fn projection_grid(quick: bool) -> Result<String, String> {
    let (pairs, angles) = if quick { (200, 2_000) } else { (1_000, 10_000) };
    let mut rng = stream_rng(0xC8EC, 100);
    let mut m = rayleigh_channel(pairs, 1, &mut rng).map_err(fail)?.matrix().to_owned();
    for (i, v) in m.iter_mut().enumerate() {
        *v *= 10f64.powi((i % 5) as i32 - 2);
    }
    // power = pairs puts every pair on the unit circle.
    let power = pairs as f64;
    let z = DecisionPoint::new(-0.3, stack_real(&m));
    let p = project_envelope(&z, power);
    if p.d != 0.0 {
        return Err(format!("negative gain projected to {} instead of 0", p.d));
    }
    // Re-projecting recomputes each pair's norm, which can differ from the
    // radius by an ulp, so idempotence holds to one rounding of the
    // (unit-radius) coordinates rather than bit-for-bit.
    let p2 = project_envelope(&p, power);
    let tol = 4.0 * f64::EPSILON;
    if p2.d != p.d || p2.xbar.iter().zip(p.xbar.iter()).any(|(a, b)| (a - b).abs() > tol) {
        return Err("projection is not idempotent to one rounding".to_string());
    }

    let table: Vec<(f64, f64)> = (0..angles)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / angles as f64;
            (th.cos(), th.sin())
        })
        .collect();
    let resolution = 2.0 * std::f64::consts::PI / angles as f64;
    let mut worst_gap = 0.0f64;
    for j in 0..pairs {
        let (a, b) = (z.xbar[(j, 0)], z.xbar[(j + pairs, 0)]);
        let (px, py) = (p.xbar[(j, 0)], p.xbar[(j + pairs, 0)]);
        let radius_err = (px * px + py * py - 1.0).abs();
        if radius_err > 1e-12 {
            return Err(format!("pair {j} left the envelope by {radius_err:.2e}"));
        }
        let closed = (a - px).powi(2) + (b - py).powi(2);
        let mut best = f64::INFINITY;
        for &(c, s) in &table {
            let dist = (a - c).powi(2) + (b - s).powi(2);
            if dist < best {
                best = dist;
            }
        }
        if closed > best + 1e-9 {
            return Err(format!(
                "closed form lost to the grid on pair {j}: {closed:.12} vs {best:.12}"
            ));
        }
        // The best grid angle is within half a grid step of the optimum,
        // so its squared-distance excess is bounded by |z|·resolution².
        let z_norm = (a * a + b * b).sqrt();
        let slack = z_norm.max(1.0) * resolution * resolution + 1e-12;
        let gap = best - closed;
        if gap > slack {
            return Err(format!("grid gap {gap:.3e} exceeds resolution bound {slack:.3e}"));
        }
        worst_gap = worst_gap.max(gap);
    }
    Ok(format!("{pairs} pairs within grid resolution (worst gap {worst_gap:.2e})"))
}

/// The surrogate must stay pinched between the exact objective and the
/// exact objective plus its temperature-dependent gap.
fn lse_sandwich(quick: bool) -> Result<String, String> {
    let points = if quick { 200 } else { 1_000 };
    let batches = 10;
    let per_batch = points / batches;
    let q = QamConstellation::new(2).map_err(fail)?;
    let (n, k, t) = (8, 3, 4);
    let mut min_lower = f64::INFINITY;
    let mut min_upper = f64::INFINITY;
    for b in 0..batches {
        let mut rng = stream_rng(0xC8EC, 200 + b as u64);
        let h = rayleigh_channel(k, n, &mut rng).map_err(fail)?;
        let block = SymbolBlock::draw_uniform(&q, k, t, &mut rng).map_err(fail)?;
        let sigma = 0.02 + 0.015 * b as f64;
        let obj = SmoothedObjective::new(lift(&h), &block, sigma).map_err(fail)?;
        let gap = obj.smoothing_gap();
        for j in 0..per_batch {
            let probe = rayleigh_channel(n, t, &mut rng).map_err(fail)?;
            let mut xbar = stack_real(&probe.matrix().to_owned());
            xbar.mapv_inplace(|v| 0.3 * v);
            let point = DecisionPoint::new(0.15 * (j % 7) as f64, xbar);
            let (smooth, exact) = obj.value(&point).map_err(fail)?;
            let lower = smooth - exact;
            let upper = exact + gap - smooth;
            if lower < -1e-12 {
                return Err(format!("surrogate fell below the exact value by {:.2e}", -lower));
            }
            if upper < -1e-12 {
                return Err(format!("surrogate exceeded exact + gap by {:.2e}", -upper));
            }
            min_lower = min_lower.min(lower);
            min_upper = min_upper.min(upper);
        }
    }
    Ok(format!(
        "{points} points pinched (tightest slack {:.2e} below, {:.2e} above)",
        min_lower, min_upper
    ))
}

/// Empirical symbol-error rates on a converged design must stay under the
/// analytic bound at a noise level chosen to make errors actually happen.
fn ser_bound(quick: bool) -> Result<String, String> {
    let draws = if quick { 2_000 } else { 20_000 };
    let q = QamConstellation::new(2).map_err(fail)?;
    let (n, k, t) = (16, 2, 5);
    let mut rng = stream_rng(0xC8EC, 400);
    let h = rayleigh_channel(k, n, &mut rng).map_err(fail)?;
    let block = SymbolBlock::draw_uniform(&q, k, t, &mut rng).map_err(fail)?;
    let cfg = SolverConfig { accelerate: true, seed: 7, record_trace: false, ..SolverConfig::default() };
    let report = solve(&h, &block, 1.0, &cfg).map_err(fail)?;
    let margin = -report.final_exact;
    if margin <= 0.0 {
        return Err(format!("solver ended with nonpositive margin {margin}"));
    }
    // Noise scaled to the margin keeps the per-slot bound near a few
    // percent: large enough to test, small enough to stay below 1.
    let sigma_n = 0.7 * margin;
    let bound = ser_upper_bound(
        &lift(&h),
        block.stacked(),
        report.xbar.stacked(),
        report.d,
        sigma_n,
    )
    .map_err(fail)?;
    let x = report.xbar.to_complex();
    let mut errors = vec![0u64; k * t];
    for _ in 0..draws {
        let y = receive(&h, &x, sigma_n, &mut rng).map_err(fail)?;
        for i in 0..k {
            for s in 0..t {
                let sent = block.symbols()[(i, s)];
                let decided = q.decide(y[(i, s)], report.d).map_err(fail)?;
                if decided != sent {
                    errors[i * t + s] += 1;
                }
            }
        }
    }
    let mut total_errs = 0u64;
    let mut min_headroom = f64::INFINITY;
    for i in 0..k {
        for s in 0..t {
            let p_emp = errors[i * t + s] as f64 / draws as f64;
            total_errs += errors[i * t + s];
            let b = bound.combined[(i, s)].min(1.0);
            let se = (b * (1.0 - b) / draws as f64).sqrt();
            let headroom = b + 3.0 * se - p_emp;
            if headroom < -1e-9 {
                return Err(format!(
                    "user {i} slot {s}: empirical rate {p_emp:.4} breaks bound {b:.4} + 3se"
                ));
            }
            min_headroom = min_headroom.min(headroom);
        }
    }
    if total_errs == 0 {
        return Err("noise level produced no errors at all; the check has no power".to_string());
    }
    Ok(format!(
        "{draws} draws, {total_errs} symbol errors, min bound headroom {min_headroom:.4}"
    ))
}
