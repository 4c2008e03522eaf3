//! Physics for the built-in environments.

use std::f64::consts::TAU;

use rand::Rng;

pub const CARTPOLE_DT: f64 = 0.02;
pub const CARTPOLE_FORCE: f64 = 10.0;
pub const CARTPOLE_ANGLE_LIMIT: f64 = 0.21;
pub const CARTPOLE_POSITION_LIMIT: f64 = 2.4;
const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const POLE_HALF_LENGTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cartpole {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl Cartpole {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let mut u = || rng.random_range(-0.05..0.05);
        Self {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
        }
    }

    /// One explicit-Euler step of the classic cart-pole equations.
    pub fn step(&mut self, action: f64) {
        let force = CARTPOLE_FORCE * action;
        let total_mass = CART_MASS + POLE_MASS;
        let pole_moment = POLE_MASS * POLE_HALF_LENGTH;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_moment * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
        self.x += CARTPOLE_DT * self.x_dot;
        self.x_dot += CARTPOLE_DT * x_acc;
        self.theta += CARTPOLE_DT * self.theta_dot;
        self.theta_dot += CARTPOLE_DT * theta_acc;
    }

    pub fn failed(&self) -> bool {
        self.theta.abs() > CARTPOLE_ANGLE_LIMIT || self.x.abs() > CARTPOLE_POSITION_LIMIT
    }
}

pub const POINT_DT: f64 = 0.1;
pub const POINT_ACCEL: f64 = 2.0;
pub const POINT_DRAG: f64 = 0.1;

/// A damped double integrator in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl PointMass {
    pub fn at_origin() -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
        }
    }

    pub fn step(&mut self, action: [f64; 2]) {
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + POINT_ACCEL * POINT_DT * action[i]) * (1.0 - POINT_DRAG);
            self.pos[i] += POINT_DT * self.vel[i];
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Point uniformly distributed on an annulus.
pub fn sample_annulus<R: Rng>(rng: &mut R, r_min: f64, r_max: f64) -> [f64; 2] {
    let r = (rng.random_range(r_min * r_min..r_max * r_max)).sqrt();
    let a = rng.random_range(0.0..TAU);
    [r * a.cos(), r * a.sin()]
}

/// Fixed relay pattern: `count` waypoints evenly spaced on a circle,
/// starting at `phase` and proceeding counter-clockwise.
pub fn relay_waypoints(count: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let a = phase + TAU * i as f64 / count as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_without_force_stays_put() {
        let mut p = PointMass::at_origin();
        p.pos = [0.3, -0.2];
        p.step([0.0, 0.0]);
        assert_eq!(p.pos, [0.3, -0.2]);
        assert_eq!(p.vel, [0.0, 0.0]);
    }

    #[test]
    fn upright_pole_at_rest_is_an_equilibrium() {
        let mut c = Cartpole {
            x: 0.0,
            x_dot: 0.0,
            theta: 0.0,
            theta_dot: 0.0,
        };
        for _ in 0..100 {
            c.step(0.0);
        }
        assert_eq!(c.theta, 0.0);
        assert_eq!(c.x, 0.0);
    }

    #[test]
    fn tilted_pole_falls_further() {
        let mut c = Cartpole {
            x: 0.0,
            x_dot: 0.0,
            theta: 0.05,
            theta_dot: 0.0,
        };
        for _ in 0..20 {
            c.step(0.0);
        }
        assert!(c.theta > 0.05);
    }

    #[test]
    fn waypoints_on_circle() {
        let w = relay_waypoints(4, 0.5, 0.0);
        assert_eq!(w.len(), 4);
        for p in &w {
            assert!((distance(*p, [0.0, 0.0]) - 0.5).abs() < 1e-12);
        }
    }
}
