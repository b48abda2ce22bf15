//! Theta* any-angle search over grid corners, and cross-floor routing over
//! the portal graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use crate::environment::{Environment, Location, Portal};
use crate::geometry::Vec2;
use crate::movement::grid::{build_nav_grid, GridError, NavGrid};

/// Start or goal points farther than this from a free cell are rejected.
pub const SNAP_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Theta*: parents may be shortcut by line of sight.
    AnyAngle,
    /// Plain 8-connected A* over the same corners.
    EightConnected,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no path from {from:?} to {to:?}")]
    Unreachable { from: Location, to: Location },
    #[error("unknown floor '{0}'")]
    UnknownFloor(String),
    #[error("point {1:?} on floor '{0}' is more than {SNAP_DISTANCE} m from free space")]
    NotWalkable(String, Vec2),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub floor: String,
    pub point: Vec2,
}

/// Waypoints include the exact start and goal; consecutive waypoints on
/// different floors are the two ends of one portal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub waypoints: Vec<Waypoint>,
    pub total_length: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    node: u32,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: smallest f first, then larger g
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.node.cmp(&self.node))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

const NONE: u32 = u32::MAX;

/// Search state over the corners of one grid plus two extra nodes for the
/// exact start and (optional) goal points. Coordinates are grid units.
pub struct Search {
    width: usize,
    height: usize,
    start: Vec2,
    goal: Option<Vec2>,
    g: Vec<f64>,
    parent: Vec<u32>,
}

fn containing_cells(p: Vec2) -> Vec<(isize, isize)> {
    let span = |v: f64| -> Vec<isize> {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            vec![r as isize - 1, r as isize]
        } else {
            vec![v.floor() as isize]
        }
    };
    let ys = span(p.y);
    span(p.x).into_iter().flat_map(|x| ys.iter().map(move |&y| (x, y))).collect()
}

impl Search {
    fn vertex_count(&self) -> usize {
        (self.width + 1) * (self.height + 1)
    }

    fn start_node(&self) -> u32 {
        self.vertex_count() as u32
    }

    fn goal_node(&self) -> u32 {
        self.vertex_count() as u32 + 1
    }

    fn vertex(&self, vx: isize, vy: isize) -> u32 {
        (vy as usize * (self.width + 1) + vx as usize) as u32
    }

    fn pos(&self, n: u32) -> Vec2 {
        let nv = self.vertex_count() as u32;
        if n == nv {
            self.start
        } else if n == nv + 1 {
            self.goal.expect("goal node only exists with a goal")
        } else {
            let w = self.width as u32 + 1;
            Vec2::new((n % w) as f64, (n / w) as f64)
        }
    }

    fn corners_around(&self, grid: &NavGrid, p: Vec2) -> Vec<u32> {
        let mut out = Vec::new();
        for (cx, cy) in containing_cells(p) {
            if grid.is_blocked(cx, cy) {
                continue;
            }
            for (vx, vy) in [(cx, cy), (cx + 1, cy), (cx, cy + 1), (cx + 1, cy + 1)] {
                if grid.vertex_usable(vx, vy) {
                    let v = self.vertex(vx, vy);
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// Runs the search. With a goal it stops once the goal is settled;
    /// without one it settles every reachable corner.
    pub fn run(grid: &NavGrid, start: Vec2, goal: Option<Vec2>, mode: SearchMode) -> Search {
        let nv = (grid.width + 1) * (grid.height + 1);
        let mut s = Search {
            width: grid.width,
            height: grid.height,
            start,
            goal,
            g: vec![f64::INFINITY; nv + 2],
            parent: vec![NONE; nv + 2],
        };
        let start_node = s.start_node();
        let goal_node = s.goal_node();
        let goal_corners = goal.map(|gp| s.corners_around(grid, gp)).unwrap_or_default();
        let h = |p: Vec2| goal.map_or(0.0, |gp| p.distance(gp));
        let mut closed = vec![false; nv + 2];
        let mut open = BinaryHeap::new();
        s.g[start_node as usize] = 0.0;
        s.parent[start_node as usize] = start_node;
        open.push(OpenEntry {
            f: h(start),
            g: 0.0,
            node: start_node,
        });
        let mut nbrs: Vec<u32> = Vec::with_capacity(10);

        while let Some(OpenEntry { g, node, .. }) = open.pop() {
            if closed[node as usize] || g > s.g[node as usize] {
                continue;
            }
            closed[node as usize] = true;
            if node == goal_node {
                break;
            }
            let p = s.pos(node);
            nbrs.clear();
            if node == start_node {
                nbrs.extend(s.corners_around(grid, start));
                if goal.is_some() {
                    nbrs.push(goal_node);
                }
            } else {
                let (vx, vy) = (p.x as isize, p.y as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy) != (0, 0) && grid.vertex_usable(vx + dx, vy + dy) {
                            nbrs.push(s.vertex(vx + dx, vy + dy));
                        }
                    }
                }
                if goal_corners.contains(&node) {
                    nbrs.push(goal_node);
                }
            }

            for &n in &nbrs {
                if closed[n as usize] {
                    continue;
                }
                let q = s.pos(n);
                if !grid.segment_clear_grid(p, q) {
                    continue;
                }
                let par = s.parent[node as usize];
                let (cand_g, cand_parent) = if mode == SearchMode::AnyAngle
                    && par != node
                    && grid.segment_clear_grid(s.pos(par), q)
                {
                    (s.g[par as usize] + s.pos(par).distance(q), par)
                } else {
                    (g + p.distance(q), node)
                };
                if cand_g < s.g[n as usize] {
                    s.g[n as usize] = cand_g;
                    s.parent[n as usize] = cand_parent;
                    open.push(OpenEntry {
                        f: cand_g + h(q),
                        g: cand_g,
                        node: n,
                    });
                }
            }
        }
        s
    }

    /// Grid-unit path from start to goal, or `None` if unreachable.
    pub fn goal_path(&self) -> Option<(Vec<Vec2>, f64)> {
        let goal = self.goal_node();
        if !self.g[goal as usize].is_finite() {
            return None;
        }
        let mut pts = vec![self.pos(goal)];
        let mut n = goal;
        while self.parent[n as usize] != n {
            n = self.parent[n as usize];
            pts.push(self.pos(n));
        }
        pts.reverse();
        Some((pts, self.g[goal as usize]))
    }

    /// Any-angle distance (grid units) from the search start to an arbitrary
    /// point, attached through the corners of its cell.
    pub fn distance_to(&self, grid: &NavGrid, p: Vec2) -> Option<f64> {
        let mut best = f64::INFINITY;
        if grid.segment_clear_grid(self.start, p) {
            best = self.start.distance(p);
        }
        for v in self.corners_around(grid, p) {
            let gv = self.g[v as usize];
            if !gv.is_finite() {
                continue;
            }
            let vp = self.pos(v);
            let par = self.parent[v as usize];
            if par != v && grid.segment_clear_grid(self.pos(par), p) {
                best = best.min(self.g[par as usize] + self.pos(par).distance(p));
            } else if grid.segment_clear_grid(vp, p) {
                best = best.min(gv + vp.distance(p));
            }
        }
        best.is_finite().then_some(best)
    }
}

/// Single-floor plan between world points, snapping blocked endpoints to
/// the nearest free cell. Returns world waypoints and the length in meters.
pub fn plan_on_grid(grid: &NavGrid, start: Vec2, goal: Vec2, mode: SearchMode) -> Option<(Vec<Vec2>, f64)> {
    if start.distance(goal) <= 1e-12 {
        return Some((Vec::new(), 0.0));
    }
    let s = grid.snap_to_free(start, SNAP_DISTANCE)?;
    let t = grid.snap_to_free(goal, SNAP_DISTANCE)?;
    let search = Search::run(grid, grid.to_grid(s), Some(grid.to_grid(t)), mode);
    let (pts, _) = search.goal_path()?;
    let mut world: Vec<Vec2> = pts.into_iter().map(|p| grid.to_world(p)).collect();
    if s != start {
        world.insert(0, start);
    }
    if t != goal {
        world.push(goal);
    }
    world.dedup_by(|a, b| a.distance(*b) <= 1e-12);
    let len = world.windows(2).map(|w| w[0].distance(w[1])).sum();
    Some((world, len))
}

/// Portal end on one floor; `portal` indexes `Planner::portals`.
#[derive(Debug, Clone)]
struct PortalEnd {
    portal: usize,
    floor: String,
    point: Vec2,
}

/// Full any-angle expansion from one snapped source point.
struct Field {
    floor: String,
    search: Search,
    /// Distance (m) from the requested source to its snapped position.
    offset: f64,
}

/// Multi-floor planner: one grid per floor plus precomputed any-angle
/// distance fields from every portal end.
pub struct Planner {
    grids: BTreeMap<String, NavGrid>,
    portals: Vec<Portal>,
    ends: Vec<PortalEnd>,
    end_fields: Vec<Field>,
    /// `end_dist[i][j]`: same-floor distance between ends i and j (m).
    end_dist: Vec<Vec<f64>>,
    desired_speed: f64,
}

impl Planner {
    pub fn new(env: &Environment, cell_size: f64, desired_speed: f64) -> Result<Planner, PlanError> {
        let mut grids = BTreeMap::new();
        for f in &env.floors {
            grids.insert(f.id.clone(), build_nav_grid(f, cell_size)?);
        }
        let mut ends = Vec::new();
        for (i, p) in env.portals.iter().enumerate() {
            ends.push(PortalEnd {
                portal: i,
                floor: p.floor_a.clone(),
                point: p.point_a,
            });
            ends.push(PortalEnd {
                portal: i,
                floor: p.floor_b.clone(),
                point: p.point_b,
            });
        }
        let mut planner = Planner {
            grids,
            portals: env.portals.clone(),
            ends,
            end_fields: Vec::new(),
            end_dist: Vec::new(),
            desired_speed,
        };
        let n = planner.ends.len();
        for i in 0..n {
            let field = planner.field_from(&planner.end_location(i))?;
            planner.end_fields.push(field);
        }
        let mut end_dist = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in end_dist.iter_mut().enumerate() {
            for (j, d) in row.iter_mut().enumerate() {
                *d = planner.field_distance(&planner.end_fields[i], &planner.end_location(j)).unwrap_or(f64::INFINITY);
            }
        }
        planner.end_dist = end_dist;
        Ok(planner)
    }

    pub fn grid(&self, floor: &str) -> Option<&NavGrid> {
        self.grids.get(floor)
    }

    pub fn grids(&self) -> impl Iterator<Item = &NavGrid> {
        self.grids.values()
    }

    fn end_location(&self, i: usize) -> Location {
        Location {
            floor: self.ends[i].floor.clone(),
            position: self.ends[i].point,
        }
    }

    fn end_locations(&self) -> Vec<Location> {
        (0..self.ends.len()).map(|i| self.end_location(i)).collect()
    }

    fn portal_length(&self, portal: usize) -> f64 {
        self.portals[portal].traversal_time * self.desired_speed
    }

    fn grid_for(&self, floor: &str) -> Result<&NavGrid, PlanError> {
        self.grids.get(floor).ok_or_else(|| PlanError::UnknownFloor(floor.to_string()))
    }

    fn field_from(&self, from: &Location) -> Result<Field, PlanError> {
        let grid = self.grid_for(&from.floor)?;
        let s = grid
            .snap_to_free(from.position, SNAP_DISTANCE)
            .ok_or_else(|| PlanError::NotWalkable(from.floor.clone(), from.position))?;
        Ok(Field {
            floor: from.floor.clone(),
            search: Search::run(grid, grid.to_grid(s), None, SearchMode::AnyAngle),
            offset: s.distance(from.position),
        })
    }

    /// Same-floor distance (m) from a field's source to `t`.
    fn field_distance(&self, field: &Field, t: &Location) -> Option<f64> {
        if t.floor != field.floor {
            return None;
        }
        let grid = self.grids.get(&t.floor)?;
        let tp = grid.snap_to_free(t.position, SNAP_DISTANCE)?;
        let d = field.search.distance_to(grid, grid.to_grid(tp))?;
        Some(field.offset + d * grid.cell_size + tp.distance(t.position))
    }

    /// Same-floor any-angle distances (m) from `from` to each target; targets
    /// on other floors get `None`.
    fn floor_distances(&self, from: &Location, targets: &[Location]) -> Result<Vec<Option<f64>>, PlanError> {
        let field = self.field_from(from)?;
        Ok(targets.iter().map(|t| self.field_distance(&field, t)).collect())
    }

    /// Shortest portal-graph distances from `from` to every portal end.
    fn end_distances_from(&self, direct: &[Option<f64>]) -> Vec<f64> {
        let n = self.ends.len();
        let mut dist: Vec<f64> = (0..n).map(|i| direct[i].unwrap_or(f64::INFINITY)).collect();
        let mut done = vec![false; n];
        for _ in 0..n {
            let Some(u) = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
            else {
                break;
            };
            done[u] = true;
            let twin = u ^ 1;
            let via_portal = dist[u] + self.portal_length(self.ends[u].portal);
            if via_portal < dist[twin] {
                dist[twin] = via_portal;
            }
            for v in 0..n {
                let d = dist[u] + self.end_dist[u][v];
                if d < dist[v] {
                    dist[v] = d;
                }
            }
        }
        dist
    }

    /// Equivalent path lengths (m) from `from` to each target, including
    /// routes through portals. `None` marks unreachable targets.
    pub fn path_lengths(&self, from: &Location, targets: &[Location]) -> Result<Vec<Option<f64>>, PlanError> {
        let mut all: Vec<Location> = self.end_locations();
        all.extend(targets.iter().cloned());
        let direct = self.floor_distances(from, &all)?;
        let n = self.ends.len();
        let via = self.end_distances_from(&direct[..n]);
        Ok(targets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut best = direct[n + k].unwrap_or(f64::INFINITY);
                for (i, e) in self.ends.iter().enumerate() {
                    if e.floor == t.floor && via[i].is_finite() {
                        if let Some(d) = self.end_to_point(i, t) {
                            best = best.min(via[i] + d);
                        }
                    }
                }
                best.is_finite().then_some(best)
            })
            .collect())
    }

    fn end_to_point(&self, end: usize, t: &Location) -> Option<f64> {
        self.field_distance(&self.end_fields[end], t)
    }

    /// Quickest route between two locations, possibly across floors.
    pub fn plan_path(&self, start: &Location, goal: &Location) -> Result<Path, PlanError> {
        let unreachable = || PlanError::Unreachable {
            from: start.clone(),
            to: goal.clone(),
        };
        self.grid_for(&start.floor)?;
        self.grid_for(&goal.floor)?;
        if start.floor == goal.floor && start.position.distance(goal.position) <= 1e-12 {
            return Ok(Path::default());
        }

        let n = self.ends.len();
        // nodes: ends 0..n, start n, goal n+1
        let grid = self.grid_for(&start.floor)?;
        if grid.snap_to_free(start.position, SNAP_DISTANCE).is_none() {
            return Err(PlanError::NotWalkable(start.floor.clone(), start.position));
        }
        let same_floor = if start.floor == goal.floor {
            plan_on_grid(grid, start.position, goal.position, SearchMode::AnyAngle)
        } else {
            None
        };
        // fields are grown from the portal ends; distances are read back to the start
        let mut direct: Vec<Option<f64>> = (0..n).map(|i| self.field_distance(&self.end_fields[i], start)).collect();
        direct.push(same_floor.as_ref().map(|(_, l)| *l));
        let to_goal: Vec<Option<f64>> = (0..n)
            .map(|i| (self.ends[i].floor == goal.floor).then(|| self.end_to_point(i, goal)).flatten())
            .collect();

        let mut dist = vec![f64::INFINITY; n + 2];
        let mut prev = vec![usize::MAX; n + 2];
        let mut done = vec![false; n + 2];
        dist[n] = 0.0;
        loop {
            let Some(u) = (0..n + 2)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
            else {
                break;
            };
            done[u] = true;
            if u == n + 1 {
                break;
            }
            let relax = |v: usize, w: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    prev[v] = u;
                }
            };
            if u == n {
                for v in 0..=n {
                    let target = if v == n { n + 1 } else { v };
                    if let Some(d) = direct[v] {
                        relax(target, d, &mut dist, &mut prev);
                    }
                }
            } else {
                relax(u ^ 1, self.portal_length(self.ends[u].portal), &mut dist, &mut prev);
                for v in 0..n {
                    if v != u && self.end_dist[u][v].is_finite() {
                        relax(v, self.end_dist[u][v], &mut dist, &mut prev);
                    }
                }
                if let Some(d) = to_goal[u] {
                    relax(n + 1, d, &mut dist, &mut prev);
                }
            }
        }
        if !dist[n + 1].is_finite() {
            return Err(unreachable());
        }

        let mut chain = vec![n + 1];
        while *chain.last().unwrap() != n {
            chain.push(prev[*chain.last().unwrap()]);
        }
        chain.reverse();
        let loc = |i: usize| if i == n { start.clone() } else if i == n + 1 { goal.clone() } else { self.end_location(i) };

        let mut path = Path::default();
        for pair in chain.windows(2) {
            let (a, b) = (loc(pair[0]), loc(pair[1]));
            if a.floor != b.floor {
                // portal hop: both ends are already endpoints of the neighbouring legs
                path.total_length += self.portal_length(self.ends[pair[0]].portal);
                continue;
            }
            let grid = self.grid_for(&a.floor)?;
            let planned = if pair == [n, n + 1] {
                same_floor.clone()
            } else {
                plan_on_grid(grid, a.position, b.position, SearchMode::AnyAngle)
            };
            let (pts, len) = planned.ok_or_else(unreachable)?;
            let pts = if pts.is_empty() { vec![a.position, b.position] } else { pts };
            path.total_length += len;
            for p in pts {
                let wp = Waypoint {
                    floor: a.floor.clone(),
                    point: p,
                };
                if path.waypoints.last() != Some(&wp) {
                    path.waypoints.push(wp);
                }
            }
        }
        Ok(path)
    }
}
