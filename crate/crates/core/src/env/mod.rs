//! Built-in toy environments.
//!
//! Each environment is a world model (state, action, transition rule) plus a
//! task description, a registry of variables that reward programs can read,
//! and an episode-level fitness form. Four are provided:
//!
//! | id                | dynamics           | fitness                              |
//! |-------------------|--------------------|--------------------------------------|
//! | `cartpole`        | inverted pendulum  | steps survived                       |
//! | `pointmass_reach` | planar point mass  | mean negative distance to target     |
//! | `reach_success`   | planar point mass  | 1 if the target is reached, else 0   |
//! | `waypoint_relay`  | planar point mass  | longest streak of reached waypoints  |

mod dynamics;
mod fitness;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_program, Binding, RewardProgram, VarEntry, VarRegistry};
use crate::rng;

pub use dynamics::{
    Cartpole, PointMass, CARTPOLE_ANGLE_LIMIT, CARTPOLE_DT, CARTPOLE_FORCE, CARTPOLE_POSITION_LIMIT, POINT_ACCEL,
    POINT_DRAG, POINT_DT,
};
pub use fitness::{compute_fitness, FitnessKind, FitnessTracker};

/// Success radius for `reach_success`.
pub const REACH_THRESHOLD: f64 = 0.05;
/// Attainment radius for `waypoint_relay`.
pub const RELAY_THRESHOLD: f64 = 0.1;
/// Steps allowed per waypoint before it counts as missed.
pub const RELAY_BUDGET: usize = 25;
pub const RELAY_WAYPOINTS: usize = 6;
pub const RELAY_RADIUS: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("action has dimension {got}, environment expects {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("action contains a non-finite value")]
    NonFiniteAction,
    #[error("episode already terminated")]
    EpisodeOver,
    #[error("cannot compute fitness of an empty episode")]
    EmptyEpisode,
    #[error("physical state has {got} values, expected {expected}")]
    StateWidth { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Cartpole,
    PointmassReach,
    ReachSuccess,
    WaypointRelay,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [EnvId::Cartpole, EnvId::PointmassReach, EnvId::ReachSuccess, EnvId::WaypointRelay];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Cartpole => "cartpole",
            EnvId::PointmassReach => "pointmass_reach",
            EnvId::ReachSuccess => "reach_success",
            EnvId::WaypointRelay => "waypoint_relay",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| EnvError::UnknownEnvironment(s.to_string()))
    }
}

/// Static description of an environment.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub id: EnvId,
    pub task_description: String,
    pub registry: Arc<VarRegistry>,
    pub action_dim: usize,
    /// Width of the observation vector fed to policies.
    pub observation_dim: usize,
    pub episode_length: usize,
    pub fitness_kind: FitnessKind,
    /// Hand-shaped reference reward, in program text.
    pub human_reward: &'static str,
    /// The fitness form written as a per-step reward.
    pub sparse_reward: &'static str,
}

impl EnvironmentSpec {
    pub fn builtin(id: EnvId) -> Arc<EnvironmentSpec> {
        static SPECS: OnceLock<Vec<Arc<EnvironmentSpec>>> = OnceLock::new();
        let specs = SPECS.get_or_init(|| EnvId::ALL.into_iter().map(|id| Arc::new(build_spec(id))).collect());
        Arc::clone(&specs[EnvId::ALL.iter().position(|&x| x == id).expect("listed")])
    }

    pub fn by_name(name: &str) -> Result<Arc<EnvironmentSpec>, EnvError> {
        Ok(Self::builtin(name.parse()?))
    }

    pub fn human_program(&self) -> RewardProgram {
        parse_program(self.human_reward, &self.registry).expect("bundled human reward parses")
    }

    pub fn sparse_program(&self) -> RewardProgram {
        parse_program(self.sparse_reward, &self.registry).expect("bundled sparse reward parses")
    }

    pub fn is_point_mass(&self) -> bool {
        self.id != EnvId::Cartpole
    }
}

fn point_registry() -> VarRegistry {
    VarRegistry::new(vec![
        VarEntry::vector("pos", 2, "position of the point mass in the plane", "m"),
        VarEntry::vector("vel", 2, "velocity of the point mass", "m/s"),
        VarEntry::vector("target", 2, "current target position", "m"),
        VarEntry::scalar("dist", "distance from the point mass to the target after this step", "m"),
        VarEntry::scalar("prev_dist", "distance from the point mass to the target before this step", "m"),
        VarEntry::vector("action", 2, "force command applied this step, each entry in [-1, 1]", "N (scaled)"),
    ])
    .expect("static registry")
}

fn build_spec(id: EnvId) -> EnvironmentSpec {
    match id {
        EnvId::Cartpole => EnvironmentSpec {
            id,
            task_description: "Keep the pole balanced upright on the moving cart for as long as possible.".into(),
            registry: Arc::new(
                VarRegistry::new(vec![
                    VarEntry::scalar("cart_pos", "horizontal cart position, 0 is the track centre", "m"),
                    VarEntry::scalar("cart_vel", "horizontal cart velocity", "m/s"),
                    VarEntry::scalar("pole_angle", "pole angle from vertical, 0 is upright", "rad"),
                    VarEntry::scalar("pole_vel", "pole angular velocity", "rad/s"),
                    VarEntry::vector("action", 1, "horizontal push applied to the cart, in [-1, 1]", "N (scaled)"),
                ])
                .expect("static registry"),
            ),
            action_dim: 1,
            observation_dim: 4,
            episode_length: 200,
            fitness_kind: FitnessKind::Duration,
            human_reward: "alive_r = 1\n\
                           angle_r = -square(pole_angle)\n\
                           cart_vel_r = -0.01 * abs(cart_vel)\n\
                           pole_vel_r = -0.005 * abs(pole_vel)\n",
            sparse_reward: "alive = 1\n",
        },
        EnvId::PointmassReach => EnvironmentSpec {
            id,
            task_description: "Move the point mass to the target position and stay close to it.".into(),
            registry: Arc::new(point_registry()),
            action_dim: 2,
            observation_dim: 4,
            episode_length: 50,
            fitness_kind: FitnessKind::NegDistance,
            human_reward: "dist_r = -dist\naction_r = -0.1 * dot(action, action)\n",
            sparse_reward: "neg_dist = -dist\n",
        },
        EnvId::ReachSuccess => EnvironmentSpec {
            id,
            task_description: "Bring the point mass onto the target position.".into(),
            registry: Arc::new(point_registry()),
            action_dim: 2,
            observation_dim: 4,
            episode_length: 50,
            fitness_kind: FitnessKind::Indicator {
                threshold: REACH_THRESHOLD,
            },
            human_reward: "dist_r = -dist\nbonus_r = lt(dist, 0.05)\naction_r = -0.1 * dot(action, action)\n",
            sparse_reward: "success = lt(dist, 0.05)\n",
        },
        EnvId::WaypointRelay => EnvironmentSpec {
            id,
            task_description: "Visit a repeating sequence of waypoints; each time the current waypoint is reached the \
                               target switches to the next one."
                .into(),
            registry: Arc::new(point_registry()),
            action_dim: 2,
            observation_dim: 4,
            episode_length: 150,
            fitness_kind: FitnessKind::ConsecutiveSuccesses {
                threshold: RELAY_THRESHOLD,
            },
            human_reward: "dist_r = -dist\nreach_r = lt(dist, 0.1)\n",
            sparse_reward: "reach = lt(dist, 0.1)\n",
        },
    }
}

/// What happened to the relay target during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    #[default]
    None,
    Reached,
    Missed,
}

/// One environment step with full variable bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub binding_before: Binding,
    pub action: Vec<f64>,
    pub binding_after: Binding,
    /// The episode is over after this step, by failure or step budget.
    pub terminated: bool,
    /// The step ended in a failure state.
    pub failed: bool,
    pub event: StepEvent,
    pub fitness_increment: f64,
}

impl Transition {
    pub(crate) fn dist_after(&self) -> f64 {
        self.binding_after.get("dist").and_then(|v| v.as_scalar()).unwrap_or(0.0)
    }
}

/// Compact transition stored in training reports: frames instead of maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTransition {
    pub before: Vec<f64>,
    pub action: Vec<f64>,
    pub after: Vec<f64>,
    pub terminated: bool,
    pub failed: bool,
    pub event: StepEvent,
    pub fitness_increment: f64,
}

impl FrameTransition {
    pub fn expand(&self, registry: &VarRegistry) -> Transition {
        Transition {
            binding_before: registry.binding_from_frame(&self.before),
            action: self.action.clone(),
            binding_after: registry.binding_from_frame(&self.after),
            terminated: self.terminated,
            failed: self.failed,
            event: self.event,
            fitness_increment: self.fitness_increment,
        }
    }
}

/// Result of an in-place step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub terminated: bool,
    pub failed: bool,
    pub event: StepEvent,
    /// Target distance after the step (0 for environments without one).
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Relay {
    waypoints: Vec<[f64; 2]>,
    index: usize,
    steps_on_current: usize,
    pending_advance: bool,
}

impl Relay {
    fn current(&self) -> [f64; 2] {
        self.waypoints[self.index % self.waypoints.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Cart(Cartpole),
    Point {
        mass: PointMass,
        target: [f64; 2],
        prev_dist: f64,
        relay: Option<Relay>,
    },
}

/// Mutable state of one episode.
#[derive(Debug, Clone)]
pub struct EnvState {
    spec: Arc<EnvironmentSpec>,
    step_index: usize,
    rng_seed: u64,
    body: Body,
    last_action: [f64; 2],
    done: bool,
}

impl PartialEq for EnvState {
    fn eq(&self, other: &Self) -> bool {
        self.spec.id == other.spec.id
            && self.step_index == other.step_index
            && self.rng_seed == other.rng_seed
            && self.body == other.body
            && self.last_action == other.last_action
            && self.done == other.done
    }
}

/// Initial state for a built-in environment.
pub fn create_environment(id: &str, seed: u64) -> Result<EnvState, EnvError> {
    Ok(EnvState::new(EnvironmentSpec::by_name(id)?, seed))
}

/// Functional step: returns the successor state and the transition.
pub fn step(state: &EnvState, action: &[f64]) -> Result<(EnvState, Transition), EnvError> {
    let mut next = state.clone();
    let mut before = vec![0.0; state.spec.registry.frame_width()];
    state.write_frame(&mut before);
    let info = next.advance(action)?;
    let mut after = vec![0.0; state.spec.registry.frame_width()];
    next.write_frame(&mut after);
    let registry = &state.spec.registry;
    let transition = Transition {
        binding_before: registry.binding_from_frame(&before),
        action: clamp_action(action),
        binding_after: registry.binding_from_frame(&after),
        terminated: info.terminated,
        failed: info.failed,
        event: info.event,
        fitness_increment: FitnessTracker::increment(state.spec.fitness_kind, info.dist, info.failed, info.event),
    };
    Ok((next, transition))
}

fn clamp_action(action: &[f64]) -> Vec<f64> {
    action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}

impl EnvState {
    pub fn new(spec: Arc<EnvironmentSpec>, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[0xE1, spec.id as u64]);
        let body = match spec.id {
            EnvId::Cartpole => Body::Cart(Cartpole::sample(&mut rng)),
            EnvId::PointmassReach => {
                let target = [
                    rand::Rng::random_range(&mut rng, -1.0..1.0),
                    rand::Rng::random_range(&mut rng, -1.0..1.0),
                ];
                point_body(target, None)
            }
            EnvId::ReachSuccess => point_body(dynamics::sample_annulus(&mut rng, 0.5, 1.0), None),
            EnvId::WaypointRelay => {
                let phase = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
                let relay = Relay {
                    waypoints: dynamics::relay_waypoints(RELAY_WAYPOINTS, RELAY_RADIUS, phase),
                    index: 0,
                    steps_on_current: 0,
                    pending_advance: false,
                };
                point_body(relay.current(), Some(relay))
            }
        };
        Self {
            spec,
            step_index: 0,
            rng_seed: seed,
            body,
            last_action: [0.0; 2],
            done: false,
        }
    }

    pub fn spec(&self) -> &Arc<EnvironmentSpec> {
        &self.spec
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Number of waypoints passed so far (relay only).
    pub fn waypoint_index(&self) -> Option<usize> {
        match &self.body {
            Body::Point { relay: Some(r), .. } => Some(r.index),
            _ => None,
        }
    }

    /// Overwrite the physical state: `[x, x_dot, theta, theta_dot]` for
    /// cartpole, `[px, py, vx, vy]` for point-mass environments.
    pub fn set_physical_state(&mut self, values: &[f64]) -> Result<(), EnvError> {
        if values.len() != 4 {
            return Err(EnvError::StateWidth {
                expected: 4,
                got: values.len(),
            });
        }
        match &mut self.body {
            Body::Cart(c) => {
                *c = Cartpole {
                    x: values[0],
                    x_dot: values[1],
                    theta: values[2],
                    theta_dot: values[3],
                }
            }
            Body::Point {
                mass, target, prev_dist, ..
            } => {
                mass.pos = [values[0], values[1]];
                mass.vel = [values[2], values[3]];
                *prev_dist = dynamics::distance(mass.pos, *target);
            }
        }
        Ok(())
    }

    /// Policy input vector.
    pub fn observe(&self, obs: &mut [f64]) {
        match &self.body {
            Body::Cart(c) => obs.copy_from_slice(&[c.x, c.x_dot, c.theta, c.theta_dot]),
            Body::Point { mass, target, relay, .. } => {
                // a pending relay switch is already visible to the policy
                let target = match relay {
                    Some(r) if r.pending_advance => r.waypoints[(r.index + 1) % r.waypoints.len()],
                    _ => *target,
                };
                obs.copy_from_slice(&[target[0] - mass.pos[0], target[1] - mass.pos[1], mass.vel[0], mass.vel[1]])
            }
        }
    }

    /// Write the registry frame describing the current state. After a relay
    /// attainment the frame still shows the waypoint just reached; the switch
    /// becomes visible on the next step.
    pub fn write_frame(&self, frame: &mut [f64]) {
        match &self.body {
            Body::Cart(c) => {
                frame.copy_from_slice(&[c.x, c.x_dot, c.theta, c.theta_dot, self.last_action[0]]);
            }
            Body::Point {
                mass, target, prev_dist, ..
            } => {
                let dist = dynamics::distance(mass.pos, *target);
                frame.copy_from_slice(&[
                    mass.pos[0],
                    mass.pos[1],
                    mass.vel[0],
                    mass.vel[1],
                    target[0],
                    target[1],
                    dist,
                    *prev_dist,
                    self.last_action[0],
                    self.last_action[1],
                ]);
            }
        }
    }

    /// In-place step. Actions are clamped to `[-1, 1]`.
    pub fn advance(&mut self, action: &[f64]) -> Result<StepInfo, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action.len() != self.spec.action_dim {
            return Err(EnvError::ActionDimension {
                expected: self.spec.action_dim,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let mut a = [0.0; 2];
        for (dst, src) in a.iter_mut().zip(action) {
            *dst = src.clamp(-1.0, 1.0);
        }
        self.last_action = a;
        self.step_index += 1;
        let budget_spent = self.step_index >= self.spec.episode_length;
        let info = match &mut self.body {
            Body::Cart(c) => {
                c.step(a[0]);
                let failed = c.failed();
                StepInfo {
                    terminated: failed || budget_spent,
                    failed,
                    event: StepEvent::None,
                    dist: 0.0,
                }
            }
            Body::Point {
                mass,
                target,
                prev_dist,
                relay,
            } => {
                if let Some(r) = relay.as_mut() {
                    if r.pending_advance {
                        r.index += 1;
                        r.steps_on_current = 0;
                        r.pending_advance = false;
                        *target = r.current();
                    }
                }
                *prev_dist = dynamics::distance(mass.pos, *target);
                mass.step(a);
                let dist = dynamics::distance(mass.pos, *target);
                let mut event = StepEvent::None;
                if let Some(r) = relay.as_mut() {
                    r.steps_on_current += 1;
                    if dist < RELAY_THRESHOLD {
                        event = StepEvent::Reached;
                        r.pending_advance = true;
                    } else if r.steps_on_current >= RELAY_BUDGET {
                        event = StepEvent::Missed;
                        r.pending_advance = true;
                    }
                }
                StepInfo {
                    terminated: budget_spent,
                    failed: false,
                    event,
                    dist,
                }
            }
        };
        self.done = info.terminated;
        Ok(info)
    }
}

fn point_body(target: [f64; 2], relay: Option<Relay>) -> Body {
    let mass = PointMass::at_origin();
    Body::Point {
        prev_dist: dynamics::distance(mass.pos, target),
        mass,
        target,
        relay,
    }
}

/// Context document for generators: task description and the variables a
/// reward program may read. Dynamics and scoring are not included.
pub fn render_context(spec: &EnvironmentSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("Environment: {}\n", spec.id));
    out.push_str(&format!("Task: {}\n\n", spec.task_description));
    out.push_str("Variables available to reward programs (evaluated after every step):\n");
    for e in spec.registry.entries() {
        let units = if e.units.is_empty() { "unitless".to_string() } else { e.units.clone() };
        out.push_str(&format!("  {}: {}, units {}. {}\n", e.name, e.kind, units, capitalize(&e.description)));
    }
    out.push_str(&format!(
        "\nActions: {} continuous value(s), each clipped to [-1, 1].\nEpisode length: {} steps.\n",
        spec.action_dim, spec.episode_length
    ));
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect::<String>() + ".",
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Value;

    #[test]
    fn seeded_initial_states() {
        let a = create_environment("cartpole", 7).unwrap();
        let b = create_environment("cartpole", 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, create_environment("cartpole", 8).unwrap());
        assert!(matches!(
            create_environment("unknown_env", 0),
            Err(EnvError::UnknownEnvironment(_))
        ));
    }

    #[test]
    fn pointmass_starts_at_origin() {
        let s = create_environment("pointmass_reach", 0).unwrap();
        let mut frame = vec![0.0; s.spec().registry.frame_width()];
        s.write_frame(&mut frame);
        assert_eq!(&frame[0..4], &[0.0; 4]);
        let target = [frame[4], frame[5]];
        assert!(target.iter().all(|t| (-1.0..1.0).contains(t)));
        let again = create_environment("pointmass_reach", 0).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn frame_layout_matches_registry() {
        for id in EnvId::ALL {
            let spec = EnvironmentSpec::builtin(id);
            let s = EnvState::new(Arc::clone(&spec), 3);
            let mut frame = vec![f64::NAN; spec.registry.frame_width()];
            s.write_frame(&mut frame);
            assert!(frame.iter().all(|x| x.is_finite()));
            let b = spec.registry.binding_from_frame(&frame);
            if spec.is_point_mass() {
                let pos = b["pos"].as_slice().to_vec();
                let target = b["target"].as_slice().to_vec();
                let d = ((pos[0] - target[0]).powi(2) + (pos[1] - target[1]).powi(2)).sqrt();
                assert_eq!(b["dist"], Value::Scalar(d));
            }
        }
    }

    #[test]
    fn zero_action_keeps_point_still() {
        let s = create_environment("pointmass_reach", 1).unwrap();
        let (next, t) = step(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(t.binding_before["pos"], t.binding_after["pos"]);
        assert_eq!(next.step_index(), 1);
    }

    #[test]
    fn cartpole_terminates_past_angle_limit() {
        let mut s = create_environment("cartpole", 0).unwrap();
        s.set_physical_state(&[0.0, 0.0, 0.3, 0.0]).unwrap();
        let (next, t) = step(&s, &[0.0]).unwrap();
        assert!(t.terminated && t.failed);
        assert_eq!(step(&next, &[0.0]).unwrap_err(), EnvError::EpisodeOver);
    }

    #[test]
    fn action_checks() {
        let s = create_environment("pointmass_reach", 0).unwrap();
        assert!(matches!(step(&s, &[0.0]), Err(EnvError::ActionDimension { .. })));
        assert_eq!(step(&s, &[f64::NAN, 0.0]).unwrap_err(), EnvError::NonFiniteAction);
        let (_, t) = step(&s, &[5.0, -5.0]).unwrap();
        assert_eq!(t.action, vec![1.0, -1.0]);
    }

    #[test]
    fn relay_switches_to_next_waypoint() {
        let mut s = create_environment("waypoint_relay", 4).unwrap();
        let first = s.waypoint_index().unwrap();
        let mut frame = vec![0.0; s.spec().registry.frame_width()];
        s.write_frame(&mut frame);
        let w0 = [frame[4], frame[5]];
        // park the mass right next to the current waypoint
        s.set_physical_state(&[w0[0] + 0.01, w0[1], 0.0, 0.0]).unwrap();
        let (s1, t1) = step(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(t1.event, StepEvent::Reached);
        assert_eq!(t1.binding_after["target"], Value::Vector(w0.to_vec()));
        let (s2, t2) = step(&s1, &[0.0, 0.0]).unwrap();
        let w1 = dynamics::relay_waypoints(RELAY_WAYPOINTS, RELAY_RADIUS, phase_of(w0))[1];
        let got = t2.binding_after["target"].as_slice().to_vec();
        assert!((got[0] - w1[0]).abs() < 1e-12 && (got[1] - w1[1]).abs() < 1e-12);
        assert_eq!(s2.waypoint_index(), Some(first + 1));
    }

    fn phase_of(p: [f64; 2]) -> f64 {
        p[1].atan2(p[0])
    }

    #[test]
    fn relay_misses_after_budget() {
        let mut s = create_environment("waypoint_relay", 2).unwrap();
        let mut events = Vec::new();
        for _ in 0..RELAY_BUDGET {
            let (next, t) = step(&s, &[0.0, 0.0]).unwrap();
            events.push(t.event);
            s = next;
        }
        assert_eq!(events.last(), Some(&StepEvent::Missed));
        assert!(events[..RELAY_BUDGET - 1].iter().all(|e| *e == StepEvent::None));
        let (_, _) = step(&s, &[0.0, 0.0]).unwrap();
    }

    #[test]
    fn bundled_fixtures_parse() {
        for id in EnvId::ALL {
            let spec = EnvironmentSpec::builtin(id);
            assert!(!spec.human_program().is_empty());
            assert!(!spec.sparse_program().is_empty());
        }
    }

    #[test]
    fn context_lists_variables_and_hides_scoring() {
        let spec = EnvironmentSpec::builtin(EnvId::PointmassReach);
        let doc = render_context(&spec);
        for name in ["pos", "vel", "target", "dist", "prev_dist"] {
            assert!(doc.lines().any(|l| l.trim_start().starts_with(&format!("{name}:"))), "{name}");
        }
        for id in EnvId::ALL {
            let doc = render_context(&EnvironmentSpec::builtin(id));
            assert!(!doc.to_lowercase().contains("fitness"));
            assert_eq!(doc, render_context(&EnvironmentSpec::builtin(id)));
        }
    }
}
