//! Dormand-Prince 5(4) with embedded error control.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; the sign follows the integration direction.
    pub h_init: f64,
    /// A step smaller than `h_min_rel · |t|` is reported as underflow.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-14, h_init: 1e-3, h_min_rel: 1e-12, max_steps: 5_000_000 }
    }
}

/// Returned by the step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reached,
    /// The observer asked to stop.
    Stopped,
    /// The controller asked for a step below the floor at `t`.
    StepUnderflow { t: f64, h: f64 },
    TooManySteps,
}

/// Accepted steps `(t, y)` including the initial point.
pub type Trajectory = Vec<(f64, Vec<f64>)>;

/// Integrates `y′ = rhs(t, y)` from `t0` to `t_end` (either direction).
///
/// `observe(t, y, h)` runs after every accepted step and may stop the run.
pub fn integrate<F, O>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: Options,
    mut observe: O,
) -> (Trajectory, Outcome)
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64], f64) -> Control,
{
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut traj = vec![(t, y.clone())];
    let mut h = dir * opts.h_init.abs().min((t_end - t0).abs());
    if h == 0.0 {
        return (traj, Outcome::Reached);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    rhs(t, &y, &mut k[0]);
    for _ in 0..opts.max_steps {
        if (t_end - t) * dir <= 0.0 {
            return (traj, Outcome::Reached);
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                stage[i] = acc;
            }
            rhs(t + C[s] * h, &stage, &mut k[s]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, es) in E.iter().enumerate() {
                e += es * k[s][i];
            }
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (h * e / scale).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
        } else if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
            let (first, last) = k.split_at_mut(6);
            first[0].copy_from_slice(&last[0]);
            traj.push((t, y.clone()));
            if observe(t, &y, h) == Control::Stop {
                return (traj, Outcome::Stopped);
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if (t_end - t) * dir > 0.0 && h.abs() < opts.h_min_rel * t.abs().max(f64::MIN_POSITIVE) {
            return (traj, Outcome::StepUnderflow { t, h });
        }
    }
    (traj, Outcome::TooManySteps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_backwards() {
        let (traj, out) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            10.0,
            &[10f64.cos(), -10f64.sin()],
            0.0,
            Options::default(),
            |_, _, _| Control::Continue,
        );
        assert_eq!(out, Outcome::Reached);
        let (t, y) = traj.last().unwrap();
        assert_eq!(*t, 0.0);
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8, "{y:?}");
    }

    #[test]
    fn fifth_order_convergence() {
        let run = |rtol: f64| {
            let opts = Options { rtol, atol: rtol * 1e-3, ..Default::default() };
            let (traj, _) = integrate(|t, y, dy| dy[0] = t.cos() * y[0], 0.0, &[1.0], 5.0, opts, |_, _, _| Control::Continue);
            let (n, y) = (traj.len(), traj.last().unwrap().1[0]);
            (n, (y - 5f64.sin().exp()).abs())
        };
        let (n1, e1) = run(1e-6);
        let (n2, e2) = run(1e-10);
        assert!(e2 < 1e-8 && e1 < 1e-4);
        // steps grow like tol^{-1/5}
        let ratio = n2 as f64 / n1 as f64;
        assert!(ratio > 3.0 && ratio < 10.0, "ratio {ratio}");
    }

    #[test]
    fn pole_triggers_underflow() {
        // y' = y², y(0) = 1 has a pole at t = 1
        let (_, out) = integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], 2.0, Options::default(), |_, _, _| Control::Continue);
        match out {
            Outcome::StepUnderflow { t, .. } => assert!((t - 1.0).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn observer_can_stop() {
        let (traj, out) = integrate(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], 1.0, Options { h_init: 0.1, ..Default::default() }, |t, _, _| {
            if t > 0.25 { Control::Stop } else { Control::Continue }
        });
        assert_eq!(out, Outcome::Stopped);
        assert!(traj.last().unwrap().0 > 0.25);
    }
}
