//! The sense-plan-act loop: replications, ticks, logs and metrics.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, default_kappa, frustum_map, AttentionFrame, AttentionMap, FrustumParams, FusionWeights};
use crate::behavior::{decide_judged, init_thresholds, judge, mix_seed, next_exploration_goal, Goal, NavMode, NavState, ThresholdTable};
use crate::environment::{Environment, Location, SignId};
use crate::geometry::{Segment, Vec2};
use crate::movement::{social_force_step, Body, PlanError, Planner, SocialForceParams, Waypoint};
use crate::perception::{render_view, CameraConfig, CameraPose, SignMask, ViewRaster};
use crate::scenario::{LegStart, Task};

/// Distance at which the agent advances to the next path waypoint.
pub const WAYPOINT_TOLERANCE: f64 = 0.5;
/// Distance at which a base point or clue goal point counts as reached.
pub const GOAL_TOLERANCE: f64 = 1.0;
/// A waypoint is skipped once the one after it is in sight and this close.
pub const WAYPOINT_SKIP_DISTANCE: f64 = 1.5;
/// An intermediate goal within this range counts as reached once progress stalls.
pub const STALL_RANGE: f64 = 3.0;
/// Seconds without closing in by [`STALL_PROGRESS`] before a goal counts as stalled.
pub const STALL_TIME: f64 = 3.0;
pub const STALL_PROGRESS: f64 = 0.1;

const SPAWN_TAG: u64 = 0x5350_4157;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub perception_interval: f64,
    pub leg_timeout: f64,
    pub replications: u32,
    pub master_seed: u64,
    pub agents_per_replication: u32,
    /// Agents spawn uniformly within this radius of the leg start.
    pub spawn_radius: f64,
    pub camera: CameraConfig,
    pub frustum: FrustumParams,
    pub fusion: FusionWeights,
    /// Attention saturation constant; defaults to 1% of the raster area.
    pub kappa: Option<f64>,
    pub social_force: SocialForceParams,
    pub cell_size: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt: 0.05,
            perception_interval: 0.5,
            leg_timeout: 600.0,
            replications: 1,
            master_seed: 0,
            agents_per_replication: 20,
            spawn_radius: 1.0,
            camera: CameraConfig::default(),
            frustum: FrustumParams::default(),
            fusion: FusionWeights::default(),
            kappa: None,
            social_force: SocialForceParams::default(),
            cell_size: 0.5,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(format!("dt must be in (0, 0.1], got {}", self.dt));
        }
        if !(self.perception_interval >= self.dt) {
            return Err("perception_interval must be at least dt".into());
        }
        if !(self.leg_timeout > 0.0) {
            return Err("leg_timeout must be positive".into());
        }
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        if self.agents_per_replication == 0 {
            return Err("agents_per_replication must be at least 1".into());
        }
        if !(self.spawn_radius >= 0.0) {
            return Err("spawn_radius must be non-negative".into());
        }
        if !(self.cell_size > 0.0) {
            return Err("cell_size must be positive".into());
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return Err("kappa must be positive".into());
            }
        }
        self.camera.validate()?;
        self.frustum.validate()?;
        self.fusion.validate()?;
        self.social_force.validate()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or_else(|| default_kappa(&self.camera))
    }

    /// Ticks between two perception updates.
    pub fn perception_stride(&self) -> u64 {
        ((self.perception_interval / self.dt).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub replication: u32,
    pub agent: u32,
    pub t: f64,
    pub floor: String,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub mode: String,
    pub current_goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignEventRow {
    pub replication: u32,
    pub agent: u32,
    pub t: f64,
    pub sign_id: u32,
    pub attention: f64,
    pub threshold: f64,
    pub seen: bool,
    pub category: u8,
    /// `select` when this sign set the agent's new goal, else `none`.
    pub decision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegMetrics {
    pub replication: u32,
    pub agent: u32,
    pub leg: usize,
    pub completed: bool,
    /// Empty for legs never started because an earlier leg timed out.
    pub travel_time: Option<f64>,
    pub path_length: Option<f64>,
}

/// Trajectory-row counts per nav-grid cell of one floor.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Something that forced an agent out of a leg early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incident {
    pub replication: u32,
    pub agent: u32,
    pub leg: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLogs {
    pub replication: u32,
    pub trajectories: Vec<TrajectoryRow>,
    pub sign_events: Vec<SignEventRow>,
    pub legs: Vec<LegMetrics>,
    pub heatmaps: BTreeMap<String, Heatmap>,
    pub incidents: Vec<Incident>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot build navigation grids: {0}")]
    Plan(#[from] PlanError),
}

/// One perception frame, handed to an observer for debug dumps.
pub struct FrameDump<'a> {
    pub replication: u32,
    pub agent: u32,
    pub tick: u64,
    pub t: f64,
    pub raster: &'a ViewRaster,
    pub mask: &'a SignMask,
    pub frame: &'a AttentionFrame,
}

pub type FrameObserver<'o> = dyn FnMut(&FrameDump<'_>) + 'o;

#[derive(Debug, Clone, PartialEq)]
enum GoalKind {
    Target,
    Clue(String),
    Base(String),
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveGoal {
    kind: GoalKind,
    location: Location,
}

impl ActiveGoal {
    fn label(&self, target_label: &str) -> String {
        match &self.kind {
            GoalKind::Target => target_label.to_string(),
            GoalKind::Clue(id) | GoalKind::Base(id) => id.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Transit {
    until_tick: u64,
    floor: String,
    point: Vec2,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: u32,
    pub floor: String,
    pub body: Body,
    pub heading: Vec2,
    pub nav: NavState,
    pub leg: usize,
    pub leg_start: f64,
    goal: Option<ActiveGoal>,
    path: Vec<Waypoint>,
    next_wp: usize,
    transit: Option<Transit>,
    /// Closest approach to the current goal and when it was last improved.
    best_goal_distance: (f64, f64),
    /// Same for the current waypoint, keyed by its index in `path`.
    best_waypoint_distance: (usize, f64, f64),
    pub done: bool,
}

impl AgentState {
    fn pose(&self, eye_height: f64) -> CameraPose {
        CameraPose {
            floor: self.floor.clone(),
            position: self.body.position,
            eye_height,
            heading: self.heading,
        }
    }

    fn location(&self) -> Location {
        Location {
            floor: self.floor.clone(),
            position: self.body.position,
        }
    }

    fn current_waypoint(&self) -> Option<&Waypoint> {
        self.path.get(self.next_wp)
    }
}

/// Mutable state of one replication.
pub struct WorldState<'e> {
    pub env: &'e Environment,
    pub agents: Vec<AgentState>,
    pub tick: u64,
    pub replication: u32,
    thresholds: ThresholdTable,
}

impl WorldState<'_> {
    pub fn clock(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }
}

fn spawn_point(
    env: &Environment,
    walls: &[Segment],
    start: &Location,
    cfg: &SimulationConfig,
    replication: u32,
    agent: u32,
    leg: usize,
) -> Vec2 {
    let radius = cfg.social_force.body_radius;
    let clear = |p: Vec2| {
        env.floor(&start.floor).is_some_and(|f| f.is_walkable(p)) && walls.iter().all(|w| w.distance_to(p) >= radius)
    };
    if cfg.spawn_radius > 0.0 {
        let seed = mix_seed(&[SPAWN_TAG, cfg.master_seed, replication as u64, agent as u64, leg as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..32 {
            let r = cfg.spawn_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            let p = start.position + Vec2::new(a.cos(), a.sin()) * r;
            if clear(p) {
                return p;
            }
        }
    }
    start.position
}

struct Runner<'a> {
    env: &'a Environment,
    task: &'a Task,
    cfg: &'a SimulationConfig,
    planner: Planner,
    walls: BTreeMap<String, Vec<Segment>>,
    frustum: AttentionMap,
    kappa: f64,
    stride: u64,
}

impl<'a> Runner<'a> {
    fn new(env: &'a Environment, task: &'a Task, cfg: &'a SimulationConfig) -> Result<Self, EngineError> {
        cfg.validate().map_err(EngineError::Config)?;
        let planner = Planner::new(env, cfg.cell_size, cfg.social_force.desired_speed)?;
        let walls = env.floors.iter().map(|f| (f.id.clone(), f.wall_segments())).collect();
        Ok(Runner {
            env,
            task,
            cfg,
            planner,
            walls,
            frustum: frustum_map(&cfg.camera, &cfg.frustum),
            kappa: cfg.kappa(),
            stride: cfg.perception_stride(),
        })
    }

    fn leg_start_location(&self, leg: usize, previous: &Location) -> Location {
        match &self.task.legs[leg].start {
            LegStart::Previous => previous.clone(),
            LegStart::Point(p) => Location {
                floor: p.floor.clone(),
                position: p.position,
            },
        }
    }

    fn start_heading(&self, leg: usize) -> Option<Vec2> {
        match &self.task.legs[leg].start {
            LegStart::Point(p) => p.heading_deg.map(Vec2::from_angle_deg),
            LegStart::Previous => None,
        }
    }

    /// Places the agent at the start of `leg` with a fresh navigation state.
    fn begin_leg(&self, a: &mut AgentState, leg: usize, replication: u32, t: f64) {
        let start = self.leg_start_location(leg, &a.location());
        if !matches!(self.task.legs[leg].start, LegStart::Previous) {
            let walls = &self.walls[&start.floor];
            a.floor = start.floor.clone();
            a.body = Body {
                position: spawn_point(self.env, walls, &start, self.cfg, replication, a.id, leg),
                velocity: Vec2::ZERO,
            };
        }
        if let Some(h) = self.start_heading(leg) {
            a.heading = h;
        }
        a.nav = NavState::new(leg);
        a.leg = leg;
        a.leg_start = t;
        a.goal = None;
        a.path.clear();
        a.next_wp = 0;
        a.transit = None;
    }

    fn set_goal(&self, a: &mut AgentState, goal: ActiveGoal) -> Result<(), PlanError> {
        let path = self.planner.plan_path(&a.location(), &goal.location)?;
        a.path = path.waypoints;
        a.next_wp = usize::from(!a.path.is_empty());
        a.goal = Some(goal);
        a.best_goal_distance = (f64::INFINITY, 0.0);
        a.best_waypoint_distance = (a.next_wp, f64::INFINITY, 0.0);
        Ok(())
    }

    fn pick_exploration_goal(&self, a: &mut AgentState) -> Result<(), String> {
        let here = a.location();
        let targets: Vec<Location> = self
            .env
            .base_points
            .iter()
            .map(|b| Location {
                floor: b.floor.clone(),
                position: b.position,
            })
            .collect();
        let lengths = self.planner.path_lengths(&here, &targets).map_err(|e| e.to_string())?;
        let by_id: BTreeMap<&str, Option<f64>> =
            self.env.base_points.iter().map(|b| b.id.as_str()).zip(lengths).collect();
        let chosen = next_exploration_goal(&mut a.nav, &self.env.base_points, |b| by_id[b.id.as_str()])
            .ok_or_else(|| "no reachable base point".to_string())?;
        let goal = ActiveGoal {
            kind: GoalKind::Base(chosen.id.clone()),
            location: Location {
                floor: chosen.floor.clone(),
                position: chosen.position,
            },
        };
        self.set_goal(a, goal).map_err(|e| e.to_string())
    }

    /// Sense, attend and decide for one agent. Returns the new sign-event rows.
    fn perceive(
        &self,
        world: &WorldState,
        idx: usize,
        t: f64,
        observer: &mut Option<&mut FrameObserver<'_>>,
    ) -> (Vec<SignEventRow>, Option<crate::behavior::Decision>) {
        let a = &world.agents[idx];
        let pose = a.pose(self.cfg.camera.eye_height);
        let observed = observer.is_some() && a.id == 0;
        if !observed && self.env.candidate_signs(&pose, self.cfg.camera.max_view_distance).is_empty() {
            return (Vec::new(), None);
        }
        let (raster, mask) = render_view(self.env, &pose, &self.cfg.camera);
        if !observed && mask.ids.iter().all(|&id| id == 0) {
            return (Vec::new(), None);
        }
        let frame = attend(self.env, &raster, &mask, &self.frustum, &self.cfg.fusion, self.kappa);
        if observed {
            if let Some(obs) = observer.as_mut() {
                obs(&FrameDump {
                    replication: world.replication,
                    agent: a.id,
                    tick: world.tick,
                    t,
                    raster: &raster,
                    mask: &mask,
                    frame: &frame,
                });
            }
        }
        if frame.scores.is_empty() {
            return (Vec::new(), None);
        }
        let leg = &self.task.legs[a.leg];
        let judged = judge(&frame.scores, &world.thresholds, a.id, self.env, leg);
        let decision = decide_judged(&judged, self.env, leg, &a.nav);
        let rows = judged
            .iter()
            .map(|j| SignEventRow {
                replication: world.replication,
                agent: a.id,
                t,
                sign_id: j.sign.0,
                attention: j.attention,
                threshold: j.threshold,
                seen: j.seen,
                category: j.category.priority(),
                decision: if decision.changed && decision.chosen_sign == Some(j.sign) { "select" } else { "none" }.into(),
            })
            .collect();
        (rows, Some(decision))
    }

    fn goal_from_decision(&self, goal: &Goal, a: &AgentState) -> Option<ActiveGoal> {
        match goal {
            Goal::Point { id, location } => {
                let kind = if a.nav.mode == NavMode::TargetKnown {
                    GoalKind::Target
                } else {
                    GoalKind::Clue(id.clone())
                };
                Some(ActiveGoal {
                    kind,
                    location: location.clone(),
                })
            }
            Goal::Explore => None,
        }
    }

    fn run(&self, replication: u32, mut observer: Option<&mut FrameObserver<'_>>) -> RunLogs {
        let cfg = self.cfg;
        let n_agents = cfg.agents_per_replication;
        let agent_ids: Vec<u32> = (0..n_agents).collect();
        let sign_ids: Vec<SignId> = self.env.signs.iter().map(|s| s.id).collect();
        let thresholds = init_thresholds(&agent_ids, &sign_ids, cfg.master_seed, replication as u64);

        let first = match &self.task.legs[0].start {
            LegStart::Point(p) => Location {
                floor: p.floor.clone(),
                position: p.position,
            },
            LegStart::Previous => unreachable!("validated: first leg has a start point"),
        };
        let agents = agent_ids
            .iter()
            .map(|&id| {
                let mut a = AgentState {
                    id,
                    floor: first.floor.clone(),
                    body: Body {
                        position: first.position,
                        velocity: Vec2::ZERO,
                    },
                    heading: Vec2::new(1.0, 0.0),
                    nav: NavState::new(0),
                    leg: 0,
                    leg_start: 0.0,
                    goal: None,
                    path: Vec::new(),
                    next_wp: 0,
                    transit: None,
                    best_goal_distance: (f64::INFINITY, 0.0),
                    best_waypoint_distance: (0, f64::INFINITY, 0.0),
                    done: false,
                };
                self.begin_leg(&mut a, 0, replication, 0.0);
                a
            })
            .collect();
        let mut world = WorldState {
            env: self.env,
            agents,
            tick: 0,
            replication,
            thresholds,
        };

        let mut logs = RunLogs {
            replication,
            trajectories: Vec::new(),
            sign_events: Vec::new(),
            legs: Vec::new(),
            heatmaps: BTreeMap::new(),
            incidents: Vec::new(),
        };
        let max_ticks = ((cfg.leg_timeout * self.task.legs.len() as f64) / cfg.dt).ceil() as u64 + 2;

        while world.agents.iter().any(|a| !a.done) && world.tick <= max_ticks {
            let t = world.clock(cfg.dt);
            let perceive_now = world.tick % self.stride == 0;
            for idx in 0..world.agents.len() {
                if world.agents[idx].done {
                    continue;
                }
                if perceive_now && world.agents[idx].transit.is_none() {
                    let (rows, decision) = self.perceive(&world, idx, t, &mut observer);
                    logs.sign_events.extend(rows);
                    if let Some(d) = decision.filter(|d| d.changed) {
                        let a = &mut world.agents[idx];
                        a.nav.apply(&d);
                        if let Some(goal) = self.goal_from_decision(&d.goal, a) {
                            if let Err(e) = self.set_goal(a, goal) {
                                self.time_out(a, t, &mut logs, e.to_string());
                            }
                        }
                    }
                }
                let a = &mut world.agents[idx];
                if !a.done {
                    self.progress(a, world.tick, t, perceive_now, &mut logs);
                }
                logs.trajectories.push(TrajectoryRow {
                    replication,
                    agent: a.id,
                    t,
                    floor: a.floor.clone(),
                    x: a.body.position.x,
                    y: a.body.position.y,
                    speed: a.body.velocity.length(),
                    mode: a.nav.mode.label().into(),
                    current_goal: a
                        .goal
                        .as_ref()
                        .map(|g| g.label(&self.task.legs[a.leg].target_label))
                        .unwrap_or_default(),
                });
                // a finished leg hands over to the next one on the following tick
                if matches!(a.nav.mode, NavMode::Arrived) && a.leg + 1 < self.task.legs.len() {
                    let next = a.leg + 1;
                    self.begin_leg(a, next, replication, t);
                } else if matches!(a.nav.mode, NavMode::Arrived | NavMode::TimedOut) {
                    a.done = true;
                }
            }
            self.move_agents(&mut world);
            world.tick += 1;
        }

        logs.legs = leg_metrics(&logs.trajectories, replication, n_agents, self.task.legs.len());
        logs.heatmaps = self.heatmaps(&logs.trajectories);
        logs
    }

    fn time_out(&self, a: &mut AgentState, t: f64, logs: &mut RunLogs, reason: String) {
        a.nav.mode = NavMode::TimedOut;
        a.body.velocity = Vec2::ZERO;
        logs.incidents.push(Incident {
            replication: logs.replication,
            agent: a.id,
            leg: a.leg,
            t,
            reason,
        });
    }

    /// Arrival, goal bookkeeping, waypoint advancement, portals and timeout.
    fn progress(&self, a: &mut AgentState, tick: u64, t: f64, perceive_now: bool, logs: &mut RunLogs) {
        if a.nav.mode == NavMode::TimedOut {
            return;
        }
        let leg = &self.task.legs[a.leg];
        if let Some(tr) = &a.transit {
            if tick >= tr.until_tick {
                a.floor = tr.floor.clone();
                a.body = Body {
                    position: tr.point,
                    velocity: Vec2::ZERO,
                };
                a.transit = None;
                a.next_wp += 1;
            }
        }

        if a.nav.mode == NavMode::TargetKnown
            && a.floor == leg.target_point.floor
            && a.body.position.distance(leg.target_point.position) <= leg.arrival_radius
        {
            a.nav.mode = NavMode::Arrived;
            a.body.velocity = Vec2::ZERO;
            return;
        }
        if t - a.leg_start >= self.cfg.leg_timeout {
            self.time_out(a, t, logs, "leg timeout".into());
            return;
        }
        if a.transit.is_some() {
            return;
        }

        let mut reached = false;
        if let Some(g) = a.goal.as_ref().filter(|g| !matches!(g.kind, GoalKind::Target)) {
            if g.location.floor == a.floor {
                let d = g.location.position.distance(a.body.position);
                let (best, since) = a.best_goal_distance;
                if d < best - STALL_PROGRESS {
                    a.best_goal_distance = (d, t);
                }
                // crowded or pinned against a wall near the goal
                let stalled = d <= STALL_RANGE && best.is_finite() && t - since >= STALL_TIME;
                reached = d <= GOAL_TOLERANCE || stalled;
            }
        }
        if reached {
            match a.goal.take().map(|g| g.kind) {
                Some(GoalKind::Base(id)) => {
                    a.nav.visited_base_points.insert(id);
                }
                Some(GoalKind::Clue(id)) => {
                    a.nav.reached_clues.insert(id);
                }
                _ => {}
            }
            a.path.clear();
        }
        // the exploration fallback is part of the decision step
        if a.goal.is_none() && perceive_now {
            if let Err(reason) = self.pick_exploration_goal(a) {
                self.time_out(a, t, logs, reason);
                return;
            }
        }

        while let Some(wp) = a.current_waypoint() {
            if wp.floor != a.floor {
                break;
            }
            if wp.point.distance(a.body.position) > WAYPOINT_TOLERANCE {
                // corner waypoints are unreachable against wall repulsion
                let skip = a.path.get(a.next_wp + 1).is_some_and(|n| {
                    n.floor == a.floor
                        && wp.point.distance(a.body.position) <= WAYPOINT_SKIP_DISTANCE
                        && self.planner.grid(&a.floor).is_some_and(|g| g.segment_clear(a.body.position, n.point))
                });
                if skip {
                    a.next_wp += 1;
                    continue;
                }
                break;
            }
            let next = a.path.get(a.next_wp + 1);
            match next {
                Some(n) if n.floor != wp.floor => {
                    let time = self.portal_time(wp, n);
                    let ticks = (time / self.cfg.dt).round() as u64;
                    a.transit = Some(Transit {
                        until_tick: tick + ticks.max(1),
                        floor: n.floor.clone(),
                        point: n.point,
                    });
                    a.body.velocity = Vec2::ZERO;
                    a.next_wp += 1;
                    return;
                }
                Some(_) => a.next_wp += 1,
                None => break,
            }
        }

        let mut stalled = false;
        if let Some(wp) = a.current_waypoint().filter(|w| w.floor == a.floor) {
            let d = wp.point.distance(a.body.position);
            let (idx, best, since) = a.best_waypoint_distance;
            if idx != a.next_wp || d < best - STALL_PROGRESS {
                a.best_waypoint_distance = (a.next_wp, d, t);
            }
            stalled = idx == a.next_wp && t - since >= STALL_TIME;
        }

        // pushed off the planned line or stuck: plan again from here
        if perceive_now {
            if let (Some(wp), Some(goal)) = (a.current_waypoint(), a.goal.clone()) {
                let grid = self.planner.grid(&a.floor);
                let blocked = wp.floor == a.floor && grid.is_some_and(|g| !g.segment_clear(a.body.position, wp.point));
                if blocked || stalled {
                    if let Err(e) = self.set_goal(a, goal) {
                        self.time_out(a, t, logs, e.to_string());
                    }
                }
            }
        }
    }

    fn portal_time(&self, from: &Waypoint, to: &Waypoint) -> f64 {
        self.env
            .portals
            .iter()
            .find(|p| {
                (p.floor_a == from.floor && p.point_a == from.point && p.floor_b == to.floor && p.point_b == to.point)
                    || (p.floor_b == from.floor && p.point_b == from.point && p.floor_a == to.floor && p.point_a == to.point)
            })
            .map_or(0.0, |p| p.traversal_time)
    }

    /// Synchronous social-force update of every walking agent.
    fn move_agents(&self, world: &mut WorldState) {
        let p = &self.cfg.social_force;
        let updates: Vec<Option<Body>> = world
            .agents
            .iter()
            .map(|a| {
                if a.done || a.transit.is_some() || matches!(a.nav.mode, NavMode::Arrived | NavMode::TimedOut) {
                    return None;
                }
                let Some(target) = a.current_waypoint().filter(|w| w.floor == a.floor).map(|w| w.point) else {
                    return Some(Body {
                        position: a.body.position,
                        velocity: Vec2::ZERO,
                    });
                };
                let neighbors: Vec<Body> = world
                    .agents
                    .iter()
                    .filter(|b| b.id != a.id && !b.done && b.transit.is_none() && b.floor == a.floor)
                    .map(|b| b.body)
                    .collect();
                Some(social_force_step(&a.body, &neighbors, &self.walls[&a.floor], target, p, self.cfg.dt))
            })
            .collect();
        for (a, u) in world.agents.iter_mut().zip(updates) {
            if let Some(body) = u {
                a.body = body;
                if let Some(h) = body.velocity.try_normalize().filter(|_| body.velocity.length() > 0.05) {
                    a.heading = h;
                }
            }
        }
    }

    fn heatmaps(&self, rows: &[TrajectoryRow]) -> BTreeMap<String, Heatmap> {
        let mut maps: BTreeMap<String, Heatmap> = self
            .planner
            .grids()
            .map(|g| {
                (
                    g.floor.clone(),
                    Heatmap {
                        width: g.width,
                        height: g.height,
                        counts: vec![0; g.width * g.height],
                    },
                )
            })
            .collect();
        for r in rows {
            if let (Some(g), Some(h)) = (self.planner.grid(&r.floor), maps.get_mut(&r.floor)) {
                let (cx, cy) = g.cell_of(Vec2::new(r.x, r.y));
                h.counts[cy * g.width + cx] += 1;
            }
        }
        maps
    }
}

fn is_terminal(mode: &str) -> bool {
    mode == NavMode::Arrived.label() || mode == NavMode::TimedOut.label()
}

/// Per-leg metrics of one replication, derived only from trajectory rows.
/// A leg ends at a row whose mode is `arrived` or `timed_out`; its travel
/// time runs from the end of the previous leg (or t = 0) and its path length
/// sums same-floor steps between its own rows.
pub fn leg_metrics(rows: &[TrajectoryRow], replication: u32, agents: u32, legs: usize) -> Vec<LegMetrics> {
    let mut by_agent: BTreeMap<u32, Vec<&TrajectoryRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.replication == replication) {
        by_agent.entry(r.agent).or_default().push(r);
    }
    let mut out = Vec::new();
    for agent in 0..agents {
        let rows = by_agent.remove(&agent).unwrap_or_default();
        let mut leg = 0;
        let mut leg_t0 = 0.0;
        let mut length = 0.0;
        let mut prev: Option<&TrajectoryRow> = None;
        for r in rows {
            if leg >= legs {
                break;
            }
            if let Some(p) = prev.filter(|p| p.floor == r.floor) {
                length += Vec2::new(p.x, p.y).distance(Vec2::new(r.x, r.y));
            }
            prev = Some(r);
            if is_terminal(&r.mode) {
                out.push(LegMetrics {
                    replication,
                    agent,
                    leg,
                    completed: r.mode == NavMode::Arrived.label(),
                    travel_time: Some(r.t - leg_t0),
                    path_length: Some(length),
                });
                leg += 1;
                leg_t0 = r.t;
                length = 0.0;
                prev = None;
                if r.mode == NavMode::TimedOut.label() {
                    break;
                }
            }
        }
        while leg < legs {
            out.push(LegMetrics {
                replication,
                agent,
                leg,
                completed: false,
                travel_time: None,
                path_length: None,
            });
            leg += 1;
        }
    }
    out
}

pub fn run_replication(env: &Environment, task: &Task, cfg: &SimulationConfig, replication: u32) -> Result<RunLogs, EngineError> {
    Ok(Runner::new(env, task, cfg)?.run(replication, None))
}

/// Same as [`run_replication`], calling `observer` on every frame of agent 0.
pub fn run_replication_observed(
    env: &Environment,
    task: &Task,
    cfg: &SimulationConfig,
    replication: u32,
    observer: &mut FrameObserver<'_>,
) -> Result<RunLogs, EngineError> {
    Ok(Runner::new(env, task, cfg)?.run(replication, Some(observer)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegAggregate {
    pub leg: usize,
    pub target_label: String,
    pub attempts: usize,
    pub completion_rate: f64,
    pub median_travel_time: Option<f64>,
    pub p90_travel_time: Option<f64>,
    pub median_path_length: Option<f64>,
    pub p90_path_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub sign_id: u32,
    pub seen_fraction: f64,
    /// Mean attention over all perception frames showing the sign.
    pub mean_attention_when_visible: Option<f64>,
    pub decisions_triggered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replications: usize,
    pub agent_runs: usize,
    /// Fraction of agent-runs that completed every leg.
    pub all_legs_completion_rate: f64,
    pub legs: Vec<LegAggregate>,
    pub audit: Vec<AuditRow>,
}

/// Linear-interpolation percentile of a sorted, non-empty slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn stats(mut v: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    v.sort_by(f64::total_cmp);
    (Some(percentile(&v, 0.5)), Some(percentile(&v, 0.9)))
}

/// Aggregates are computed over runs sorted by replication index, so the
/// order in which replications were executed does not matter.
pub fn aggregate(runs: &[RunLogs], task: &Task, env: &Environment) -> Aggregate {
    let mut runs: Vec<&RunLogs> = runs.iter().collect();
    runs.sort_by_key(|r| r.replication);
    let metrics: Vec<&LegMetrics> = runs.iter().flat_map(|r| r.legs.iter()).collect();
    let agent_runs: BTreeSet<(u32, u32)> = metrics.iter().map(|m| (m.replication, m.agent)).collect();
    let all_done = agent_runs
        .iter()
        .filter(|&&(r, a)| metrics.iter().filter(|m| m.replication == r && m.agent == a).all(|m| m.completed))
        .count();

    let legs = task
        .legs
        .iter()
        .enumerate()
        .map(|(i, leg)| {
            let attempted: Vec<&&LegMetrics> = metrics.iter().filter(|m| m.leg == i && m.travel_time.is_some()).collect();
            let completed = metrics.iter().filter(|m| m.leg == i && m.completed).count();
            let total = metrics.iter().filter(|m| m.leg == i).count();
            let (mt, pt) = stats(attempted.iter().filter_map(|m| m.travel_time).collect());
            let (ml, pl) = stats(attempted.iter().filter_map(|m| m.path_length).collect());
            LegAggregate {
                leg: i,
                target_label: leg.target_label.clone(),
                attempts: attempted.len(),
                completion_rate: if total == 0 { 0.0 } else { completed as f64 / total as f64 },
                median_travel_time: mt,
                p90_travel_time: pt,
                median_path_length: ml,
                p90_path_length: pl,
            }
        })
        .collect();

    let events: Vec<&SignEventRow> = runs.iter().flat_map(|r| r.sign_events.iter()).collect();
    let audit = env
        .signs
        .iter()
        .map(|s| {
            let rows: Vec<&&SignEventRow> = events.iter().filter(|e| e.sign_id == s.id.0).collect();
            let seers: BTreeSet<(u32, u32)> = rows.iter().filter(|e| e.seen).map(|e| (e.replication, e.agent)).collect();
            let mean = (!rows.is_empty()).then(|| rows.iter().map(|e| e.attention).sum::<f64>() / rows.len() as f64);
            AuditRow {
                sign_id: s.id.0,
                seen_fraction: if agent_runs.is_empty() { 0.0 } else { seers.len() as f64 / agent_runs.len() as f64 },
                mean_attention_when_visible: mean,
                decisions_triggered: rows.iter().filter(|e| e.decision == "select").count() as u64,
            }
        })
        .collect();

    Aggregate {
        replications: runs.len(),
        agent_runs: agent_runs.len(),
        all_legs_completion_rate: if agent_runs.is_empty() { 0.0 } else { all_done as f64 / agent_runs.len() as f64 },
        legs,
        audit,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub runs: Vec<RunLogs>,
    pub aggregate: Aggregate,
}

pub fn run_batch(env: &Environment, task: &Task, cfg: &SimulationConfig) -> Result<BatchResult, EngineError> {
    let order: Vec<u32> = (0..cfg.replications).collect();
    run_batch_in_order(env, task, cfg, &order)
}

/// Runs the given replication indices in the given order; results are
/// returned sorted by replication index.
pub fn run_batch_in_order(env: &Environment, task: &Task, cfg: &SimulationConfig, order: &[u32]) -> Result<BatchResult, EngineError> {
    let runner = Runner::new(env, task, cfg)?;
    let mut runs: Vec<RunLogs> = order.iter().map(|&r| runner.run(r, None)).collect();
    runs.sort_by_key(|r| r.replication);
    let aggregate = aggregate(&runs, task, env);
    Ok(BatchResult { runs, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::fixtures::{room, sign};
    use crate::environment::{NamedPoint, SignAction, SignEntry};
    use crate::scenario::Leg;

    fn straight_task(target: Vec2, radius: f64) -> Task {
        Task {
            legs: vec![Leg {
                start: LegStart::Point(NamedPoint {
                    id: "s".into(),
                    floor: "F0".into(),
                    position: Vec2::new(10.0, 4.0),
                    heading_deg: Some(90.0),
                }),
                target_label: "Exit".into(),
                target_point: Location {
                    floor: "F0".into(),
                    position: target,
                },
                arrival_radius: radius,
            }],
        }
    }

    fn env_with_exit_sign() -> Environment {
        let mut env = room();
        let mut s = sign(1, 10.0, 19.95, 2.0, Vec2::new(0.0, -1.0));
        s.width = 4.0;
        s.height = 1.5;
        s.entries = vec![SignEntry {
            label: "Exit".into(),
            action: SignAction::AtTarget,
        }];
        env.signs = vec![s];
        env
    }

    fn single_agent() -> SimulationConfig {
        SimulationConfig {
            agents_per_replication: 1,
            spawn_radius: 0.0,
            leg_timeout: 60.0,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn config_defaults_validate() {
        assert!(SimulationConfig::default().validate().is_ok());
        let bad = SimulationConfig {
            perception_interval: 0.01,
            ..SimulationConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SimulationConfig::default().perception_stride(), 10);
    }

    #[test]
    fn spawn_at_target_completes_immediately() {
        let env = env_with_exit_sign();
        let task = straight_task(Vec2::new(10.0, 4.5), 1.5);
        let cfg = single_agent();
        let logs = run_replication(&env, &task, &cfg, 0).unwrap();
        assert_eq!(logs.trajectories.len(), 1);
        assert_eq!(logs.trajectories[0].mode, "arrived");
        assert!(logs.legs[0].completed);
        assert_eq!(logs.legs[0].travel_time, Some(0.0));
    }

    #[test]
    fn straight_walk_takes_distance_over_speed_plus_tau() {
        let env = env_with_exit_sign();
        let task = straight_task(Vec2::new(10.0, 14.0), 0.1);
        let logs = run_replication(&env, &task, &single_agent(), 0).unwrap();
        let m = &logs.legs[0];
        assert!(m.completed, "{:?}", logs.incidents);
        let expected = 10.0 / 1.34 + 0.5;
        let got = m.travel_time.unwrap();
        assert!((got - expected).abs() <= 0.1 * expected, "travel time {got} vs {expected}");
    }

    #[test]
    fn metrics_are_recomputable_and_rows_ordered() {
        let env = env_with_exit_sign();
        let task = straight_task(Vec2::new(10.0, 14.0), 1.0);
        let cfg = SimulationConfig {
            agents_per_replication: 3,
            ..single_agent()
        };
        let logs = run_replication(&env, &task, &cfg, 2).unwrap();
        assert_eq!(leg_metrics(&logs.trajectories, 2, 3, 1), logs.legs);
        for w in logs.trajectories.windows(2) {
            assert!((w[0].t, w[0].agent) < (w[1].t, w[1].agent));
        }
        let total: u64 = logs.heatmaps.values().map(Heatmap::total).sum();
        assert_eq!(total, logs.trajectories.len() as u64);
        for e in &logs.sign_events {
            let k = (e.t / cfg.dt).round() as u64;
            assert_eq!(k % cfg.perception_stride(), 0);
        }
    }

    #[test]
    fn no_target_sign_times_out() {
        let mut env = env_with_exit_sign();
        env.signs.clear();
        let task = straight_task(Vec2::new(10.0, 14.0), 1.0);
        let cfg = SimulationConfig {
            leg_timeout: 5.0,
            ..single_agent()
        };
        let logs = run_replication(&env, &task, &cfg, 0).unwrap();
        assert!(!logs.legs[0].completed);
        assert_eq!(logs.trajectories.last().unwrap().mode, "timed_out");
        let rows = logs.trajectories.len() as f64;
        assert!((rows - (5.0f64 / 0.05).ceil()).abs() <= 1.0);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(percentile(&[7.0], 0.9), 7.0);
        assert!((percentile(&[0.0, 10.0], 0.9) - 9.0).abs() < 1e-12);
    }
}
