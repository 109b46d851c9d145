//! Oracles shared by the integration tests, written independently of the
//! library's integrators.
#![allow(dead_code)]

/// One-dimensional Coulomb block on wheels driven by a force profile,
/// integrated with a fine classical RK4 step between regime switches.
/// Returns the displacement after `duration`.
pub fn coulomb_displacement(
    force: impl Fn(f64) -> f64,
    mass: f64,
    static_limit: f64,
    kinetic: f64,
    duration: f64,
) -> f64 {
    let dt = 1e-5;
    let steps = (duration / dt).round() as usize;
    let (mut x, mut v) = (0.0f64, 0.0f64);
    for n in 0..steps {
        let t = n as f64 * dt;
        if v == 0.0 && force(t).abs() <= static_limit {
            continue;
        }
        let dir = if v != 0.0 { v.signum() } else { force(t).signum() };
        let acc = |t: f64| (force(t) - kinetic * dir) / mass;
        // slip velocity is linear in time within a step for piecewise-smooth
        // forces; RK4 on (x, v)
        let k1v = acc(t);
        let k1x = v;
        let k2v = acc(t + dt / 2.0);
        let k2x = v + dt / 2.0 * k1v;
        let k3v = acc(t + dt / 2.0);
        let k3x = v + dt / 2.0 * k2v;
        let k4v = acc(t + dt);
        let k4x = v + dt * k3v;
        let v_next = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        // kinetic friction stops the block; it does not reverse it
        v = if v_next * dir < 0.0 { 0.0 } else { v_next };
    }
    x
}

/// Closed form for a constant push above the breakaway threshold.
pub fn constant_push(force: f64, mass: f64, kinetic: f64, t: f64) -> f64 {
    0.5 * (force - kinetic) / mass * t * t
}
