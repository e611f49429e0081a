//! Escape-room grid world.
//!
//! A 5x5 room has buttons on its left, top and bottom walls and a door on
//! the right wall. Each trial one button (uniformly chosen) opens the door
//! for a few steps when its press cell is occupied. During the observation
//! phase a box wanders between the press cells and the agent's actions do
//! nothing; during the action phase the agent walks around and is rewarded
//! for reaching the cell in front of the open door.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::frame::Frame;
use super::{Environment, TraceStep, Transition};
use crate::error::EnvError;
use crate::GymRng;

pub const GRID: usize = 5;

pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Button {
    Left,
    Top,
    Bottom,
}

impl Button {
    pub const ALL: [Button; 3] = [Button::Left, Button::Top, Button::Bottom];

    pub fn cell(self) -> Cell {
        match self {
            Button::Left => (2, 0),
            Button::Top => (0, 2),
            Button::Bottom => (4, 2),
        }
    }

    /// The interior cell that pushes this button when occupied.
    pub fn press_cell(self) -> Cell {
        match self {
            Button::Left => (2, 1),
            Button::Top => (1, 2),
            Button::Bottom => (3, 2),
        }
    }

    pub fn pressed_by(cell: Cell) -> Option<Button> {
        Button::ALL.into_iter().find(|b| b.press_cell() == cell)
    }
}

pub const DOOR: Cell = (2, 4);
/// Cell in front of the door where the reward is collected.
pub const DOOR_FRONT: Cell = (2, 3);
pub const CUE: Cell = (0, 0);

pub fn is_feature(cell: Cell) -> bool {
    cell == DOOR || Button::ALL.iter().any(|b| b.cell() == cell)
}

pub fn traversable_cells() -> Vec<Cell> {
    (0..GRID)
        .flat_map(|r| (0..GRID).map(move |c| (r, c)))
        .filter(|&c| !is_feature(c))
        .collect()
}

fn offset(cell: Cell, dr: i64, dc: i64) -> Option<Cell> {
    let r = cell.0 as i64 + dr;
    let c = cell.1 as i64 + dc;
    let n = GRID as i64;
    ((0..n).contains(&r) && (0..n).contains(&c))
        .then_some((r as usize, c as usize))
        .filter(|&c| !is_feature(c))
}

pub fn chebyshev(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_index(i: usize) -> Option<Move> {
        Move::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeParams {
    pub n_obs: usize,
    pub n_act: usize,
    pub door_open_steps: usize,
    pub reward_door: f64,
}

impl Default for EscapeParams {
    fn default() -> Self {
        Self {
            n_obs: 20,
            n_act: 10,
            door_open_steps: 5,
            reward_door: 10.0,
        }
    }
}

impl EscapeParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("n_obs", self.n_obs),
            ("n_act", self.n_act),
            ("door_open_steps", self.door_open_steps),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(EnvError::InvalidParams {
                    field,
                    reason: "must be positive".into(),
                });
            }
        }
        if !(self.reward_door > 0.0 && self.reward_door.is_finite()) {
            return Err(EnvError::InvalidParams {
                field: "reward_door",
                reason: format!("{} is not positive", self.reward_door),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Observe,
    Act,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeState {
    pub phase: Phase,
    /// Steps taken within the current phase.
    pub t: usize,
    pub box_pos: Option<Cell>,
    pub agent_pos: Option<Cell>,
    pub effective_button: Button,
    pub door_timer: usize,
    pub bouncer_target: Button,
    /// Whether the effective button was pushed on the latest step.
    pub effective_pressed: bool,
}

pub fn reset(rng: &mut GymRng) -> EscapeState {
    let cells = traversable_cells();
    EscapeState {
        phase: Phase::Observe,
        t: 0,
        box_pos: Some(*cells.choose(rng).expect("layout has free cells")),
        agent_pos: None,
        effective_button: *Button::ALL.choose(rng).expect("three buttons"),
        door_timer: 0,
        bouncer_target: *Button::ALL.choose(rng).expect("three buttons"),
        effective_pressed: false,
    }
}

fn resample_target(rng: &mut GymRng, current: Button) -> Button {
    let others: Vec<Button> = Button::ALL.into_iter().filter(|&b| b != current).collect();
    *others.choose(rng).expect("two other buttons")
}

/// Moves the box one 8-connected step towards its target's press cell.
pub fn bouncer_step(rng: &mut GymRng, state: &EscapeState) -> EscapeState {
    assert_eq!(state.phase, Phase::Observe, "bouncer only moves while observing");
    let mut next = state.clone();
    let pos = state.box_pos.expect("box present in observe phase");
    let mut target = state.bouncer_target;
    if pos == target.press_cell() {
        target = resample_target(rng, target);
    }
    let goal = target.press_cell();
    let here = chebyshev(pos, goal);
    let mut moves: Vec<Cell> = Vec::with_capacity(8);
    for dr in -1..=1 {
        for dc in -1..=1 {
            if (dr, dc) == (0, 0) {
                continue;
            }
            if let Some(c) = offset(pos, dr, dc) {
                if chebyshev(c, goal) < here {
                    moves.push(c);
                }
            }
        }
    }
    let new_pos = *moves.choose(rng).expect("a closer free cell always exists");
    if new_pos == goal {
        target = resample_target(rng, target);
    }
    next.box_pos = Some(new_pos);
    next.bouncer_target = target;
    next
}

/// Door bookkeeping for one step: the timer decays, and a push of the
/// effective button re-opens the door for the full duration.
pub fn press_and_door_update(
    state: &EscapeState,
    occupant: Option<Cell>,
    params: &EscapeParams,
) -> EscapeState {
    let mut next = state.clone();
    next.door_timer = state.door_timer.saturating_sub(1);
    next.effective_pressed = occupant.and_then(Button::pressed_by) == Some(state.effective_button);
    if next.effective_pressed {
        next.door_timer = params.door_open_steps;
    }
    next
}

pub fn agent_move(state: &EscapeState, action: Move) -> EscapeState {
    let mut next = state.clone();
    if state.phase == Phase::Act {
        let pos = state.agent_pos.expect("agent present in act phase");
        let (dr, dc) = action.delta();
        next.agent_pos = Some(offset(pos, dr, dc).unwrap_or(pos));
    }
    next
}

pub fn compute_reward(state: &EscapeState, params: &EscapeParams) -> f64 {
    if state.phase == Phase::Act && state.agent_pos == Some(DOOR_FRONT) && state.door_timer > 0 {
        params.reward_door
    } else {
        0.0
    }
}

pub const BLUE: [f64; 3] = [0.0, 0.0, 1.0];
pub const RED: [f64; 3] = [1.0, 0.0, 0.0];
pub const WHITE: [f64; 3] = [1.0, 1.0, 1.0];
pub const GRAY: [f64; 3] = [0.5, 0.5, 0.5];
pub const GREEN: [f64; 3] = [0.0, 1.0, 0.0];
pub const DOOR_CLOSED: [f64; 3] = [0.3, 0.3, 0.3];

pub fn render(state: &EscapeState) -> Frame {
    let mut f = Frame::black(GRID, GRID);
    for b in Button::ALL {
        let (r, c) = b.cell();
        let color = if b == state.effective_button && state.effective_pressed {
            RED
        } else {
            BLUE
        };
        f.set_pixel(r, c, color);
    }
    let door = if state.door_timer > 0 { WHITE } else { DOOR_CLOSED };
    f.set_pixel(DOOR.0, DOOR.1, door);
    if let Some((r, c)) = state.box_pos {
        f.set_pixel(r, c, WHITE);
    }
    if let Some((r, c)) = state.agent_pos {
        f.set_pixel(r, c, GRAY);
    }
    if state.phase == Phase::Act {
        f.set_pixel(CUE.0, CUE.1, GREEN);
    }
    f
}

/// Two-phase episodic runner. Every step consumes one action; actions are
/// ignored during the observation phase.
#[derive(Debug, Clone)]
pub struct EscapeEnv {
    params: EscapeParams,
    state: Option<EscapeState>,
    done: bool,
}

impl EscapeEnv {
    pub fn new(params: EscapeParams) -> Result<Self, EnvError> {
        params.validate()?;
        Ok(Self {
            params,
            state: None,
            done: false,
        })
    }

    pub fn params(&self) -> &EscapeParams {
        &self.params
    }

    pub fn state(&self) -> Option<&EscapeState> {
        self.state.as_ref()
    }

    pub fn reset_typed(&mut self, rng: &mut GymRng) -> &EscapeState {
        self.done = false;
        self.state.insert(reset(rng))
    }

    /// Replaces the current state (scripted tests and exhaustive checks).
    pub fn set_state(&mut self, state: EscapeState) {
        self.done = false;
        self.state = Some(state);
    }

    pub fn step_typed(&mut self, action: Move, rng: &mut GymRng) -> Result<Transition, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let (next, reward, done) = match state.phase {
            Phase::Observe => {
                let moved = bouncer_step(rng, state);
                let mut next = press_and_door_update(&moved, moved.box_pos, &self.params);
                next.t += 1;
                if next.t >= self.params.n_obs {
                    let cells = traversable_cells();
                    next.phase = Phase::Act;
                    next.t = 0;
                    next.box_pos = None;
                    next.door_timer = 0;
                    next.agent_pos = Some(*cells.choose(rng).expect("layout has free cells"));
                    next.effective_pressed = false;
                }
                (next, 0.0, false)
            }
            Phase::Act => {
                let moved = agent_move(state, action);
                let mut next = press_and_door_update(&moved, moved.agent_pos, &self.params);
                next.t += 1;
                let reward = compute_reward(&next, &self.params);
                let done = reward > 0.0 || next.t >= self.params.n_act;
                (next, reward, done)
            }
        };
        let obs = render(&next).as_slice().to_vec();
        self.state = Some(next);
        self.done = done;
        Ok(Transition { obs, reward, done })
    }
}

impl Environment for EscapeEnv {
    fn n_actions(&self) -> usize {
        Move::ALL.len()
    }

    fn obs_dim(&self) -> usize {
        GRID * GRID * 3
    }

    fn max_episode_len(&self) -> usize {
        self.params.n_obs + self.params.n_act
    }

    fn reset(&mut self, rng: &mut GymRng) -> Vec<f64> {
        render(self.reset_typed(rng)).as_slice().to_vec()
    }

    fn step(&mut self, action: usize, rng: &mut GymRng) -> Result<Transition, EnvError> {
        let mv = Move::from_index(action).ok_or(EnvError::InvalidAction {
            index: action,
            n_actions: Move::ALL.len(),
        })?;
        self.step_typed(mv, rng)
    }

    fn trace(&self) -> TraceStep {
        let state = self.state.as_ref();
        TraceStep {
            t: state.map_or(0, |s| s.t),
            s: None,
            z: None,
            frame: state.map(render),
            note: state.map(|s| {
                format!(
                    "{:?} t={} effective={:?} door_timer={}",
                    s.phase, s.t, s.effective_button, s.door_timer
                )
            }),
        }
    }
}

/// Shortest 4-connected path length between two free cells.
pub fn shortest_path(from: Cell, to: Cell) -> Option<usize> {
    shortest_route(from, to).map(|r| r.len())
}

/// Moves along one shortest 4-connected route (breadth-first search).
pub fn shortest_route(from: Cell, to: Cell) -> Option<Vec<Move>> {
    use std::collections::VecDeque;
    let mut prev: [[Option<(Cell, Move)>; GRID]; GRID] = [[None; GRID]; GRID];
    let mut seen = [[false; GRID]; GRID];
    seen[from.0][from.1] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(cell) = queue.pop_front() {
        if cell == to {
            let mut route = Vec::new();
            let mut cur = to;
            while cur != from {
                let (p, m) = prev[cur.0][cur.1].expect("visited cells have parents");
                route.push(m);
                cur = p;
            }
            route.reverse();
            return Some(route);
        }
        for m in Move::ALL {
            let (dr, dc) = m.delta();
            if let Some(n) = offset(cell, dr, dc) {
                if !seen[n.0][n.1] {
                    seen[n.0][n.1] = true;
                    prev[n.0][n.1] = Some((cell, m));
                    queue.push_back(n);
                }
            }
        }
    }
    None
}

/// Policy that knows the effective button: walk to its press cell, then to
/// the door front. If it starts on the press cell it pushes by bumping into
/// the adjacent button.
pub fn scripted_route(start: Cell, button: Button) -> Vec<Move> {
    let press = button.press_cell();
    let mut route = if start == press {
        vec![bump_move(button)]
    } else {
        shortest_route(start, press).expect("press cells are reachable")
    };
    route.extend(shortest_route(press, DOOR_FRONT).expect("door front is reachable"));
    route
}

fn bump_move(button: Button) -> Move {
    match button {
        Button::Left => Move::Left,
        Button::Top => Move::Up,
        Button::Bottom => Move::Down,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn act_state(agent: Cell, effective: Button, timer: usize) -> EscapeState {
        EscapeState {
            phase: Phase::Act,
            t: 0,
            box_pos: None,
            agent_pos: Some(agent),
            effective_button: effective,
            door_timer: timer,
            bouncer_target: Button::Left,
            effective_pressed: false,
        }
    }

    #[test]
    fn layout() {
        assert_eq!(traversable_cells().len(), 21);
        for b in Button::ALL {
            let p = b.press_cell();
            assert!(!is_feature(p));
            assert_eq!(chebyshev(p, b.cell()), 1);
            assert_eq!(p.0.abs_diff(b.cell().0) + p.1.abs_diff(b.cell().1), 1);
        }
    }

    #[test]
    fn reset_state() {
        let mut rng = GymRng::seed_from_u64(1);
        for _ in 0..100 {
            let s = reset(&mut rng);
            assert_eq!(s.door_timer, 0);
            assert_eq!(s.agent_pos, None);
            assert_eq!(s.phase, Phase::Observe);
            assert!(!is_feature(s.box_pos.unwrap()));
        }
    }

    #[test]
    fn bouncer_moves_one_cell_and_avoids_features() {
        let mut rng = GymRng::seed_from_u64(2);
        let mut s = reset(&mut rng);
        for _ in 0..5000 {
            let next = bouncer_step(&mut rng, &s);
            let (a, b) = (s.box_pos.unwrap(), next.box_pos.unwrap());
            assert!(chebyshev(a, b) == 1);
            assert!(!is_feature(b));
            s = next;
        }
    }

    #[test]
    fn bouncer_reaches_target_within_eight_steps() {
        // Breadth-first distances on the 8-connected free-cell graph bound
        // the greedy walk from below; the greedy walk must still arrive in
        // at most 8 steps from every start.
        let mut rng = GymRng::seed_from_u64(3);
        for start in traversable_cells() {
            for target in Button::ALL {
                for _ in 0..20 {
                    let mut s = reset(&mut rng);
                    s.box_pos = Some(start);
                    s.bouncer_target = target;
                    if start == target.press_cell() {
                        continue;
                    }
                    let mut steps = 0;
                    while s.box_pos != Some(target.press_cell()) {
                        s = bouncer_step(&mut rng, &s);
                        steps += 1;
                        assert!(steps <= 8);
                    }
                    assert_ne!(s.bouncer_target, target, "target resampled on arrival");
                }
            }
        }
    }

    #[test]
    fn press_examples() {
        let p = EscapeParams::default();
        let s = act_state((2, 1), Button::Left, 0);
        assert_eq!(press_and_door_update(&s, Some((2, 1)), &p).door_timer, 5);
        let s = act_state((2, 1), Button::Top, 3);
        assert_eq!(press_and_door_update(&s, Some((2, 1)), &p).door_timer, 2);

        // Opened at step t, closed at t + 5.
        let mut s = press_and_door_update(&act_state((2, 1), Button::Left, 0), Some((2, 1)), &p);
        let mut open_for = 0;
        while s.door_timer > 0 {
            s = press_and_door_update(&s, Some((0, 0)), &p);
            open_for += 1;
        }
        assert_eq!(open_for, 5);
    }

    #[test]
    fn agent_moves() {
        let s = act_state((2, 1), Button::Left, 0);
        assert_eq!(agent_move(&s, Move::Left).agent_pos, Some((2, 1)));
        let s = act_state((2, 2), Button::Left, 0);
        assert_eq!(agent_move(&s, Move::Right).agent_pos, Some((2, 3)));
        let s = act_state((0, 0), Button::Left, 0);
        assert_eq!(agent_move(&s, Move::Up).agent_pos, Some((0, 0)));
        let mut rng = GymRng::seed_from_u64(4);
        let obs = reset(&mut rng);
        for m in Move::ALL {
            assert_eq!(agent_move(&obs, m), obs);
        }
    }

    #[test]
    fn reward_examples() {
        let p = EscapeParams::default();
        assert_eq!(compute_reward(&act_state((2, 3), Button::Left, 3), &p), 10.0);
        assert_eq!(compute_reward(&act_state((2, 3), Button::Left, 0), &p), 0.0);
        assert_eq!(compute_reward(&act_state((2, 2), Button::Left, 3), &p), 0.0);
    }

    #[test]
    fn render_examples() {
        let s = act_state((3, 3), Button::Left, 0);
        let f = render(&s);
        assert_eq!(f.pixel(0, 0), GREEN);
        assert_eq!(f.pixel(3, 3), GRAY);
        assert_eq!(f.pixel(2, 4), DOOR_CLOSED);

        let mut rng = GymRng::seed_from_u64(5);
        let mut o = reset(&mut rng);
        o.box_pos = Some((3, 3));
        let f = render(&o);
        assert_eq!(f.pixel(0, 0), [0.0; 3]);
        assert_eq!(f.pixel(3, 3), WHITE);

        o.box_pos = Some(o.effective_button.press_cell());
        let pressed = press_and_door_update(&o, o.box_pos, &EscapeParams::default());
        let f = render(&pressed);
        let (r, c) = o.effective_button.cell();
        assert_eq!(f.pixel(r, c), RED);
        assert_eq!(f.pixel(DOOR.0, DOOR.1), WHITE);
    }

    #[test]
    fn episode_length_and_phase_separation() {
        let mut env = EscapeEnv::new(EscapeParams::default()).unwrap();
        let mut rng = GymRng::seed_from_u64(6);
        for _ in 0..200 {
            env.reset(&mut rng);
            let mut steps = 0;
            loop {
                let tr = env.step(rng.gen_range(0..4), &mut rng).unwrap();
                steps += 1;
                let s = env.state().unwrap();
                match s.phase {
                    Phase::Observe => assert!(s.agent_pos.is_none() && s.box_pos.is_some()),
                    Phase::Act => assert!(s.agent_pos.is_some() && s.box_pos.is_none()),
                }
                if tr.done {
                    break;
                }
            }
            assert!(steps <= 30);
            assert!(steps > 20);
        }
    }

    #[test]
    fn action_phase_starts_with_the_door_closed() {
        let p = EscapeParams::default();
        let mut env = EscapeEnv::new(p).unwrap();
        let mut rng = GymRng::seed_from_u64(8);
        let mut s = reset(&mut rng);
        s.t = p.n_obs - 1;
        s.door_timer = 4;
        env.set_state(s);
        env.step_typed(Move::Up, &mut rng).unwrap();
        let s = env.state().unwrap();
        assert_eq!(s.phase, Phase::Act);
        assert_eq!(s.door_timer, 0);
        assert_eq!(render(s).pixel(DOOR.0, DOOR.1), [0.3; 3]);
    }

    #[test]
    fn scripted_policy_covers_every_start() {
        let p = EscapeParams::default();
        let mut rng = GymRng::seed_from_u64(7);
        for start in traversable_cells() {
            for b in Button::ALL {
                let route = scripted_route(start, b);
                assert!(route.len() <= p.n_act, "{start:?} {b:?}");
                let mut env = EscapeEnv::new(p).unwrap();
                env.set_state(act_state(start, b, 0));
                let mut total = 0.0;
                for m in route {
                    let tr = env.step_typed(m, &mut rng).unwrap();
                    total += tr.reward;
                    if tr.done {
                        break;
                    }
                }
                assert_eq!(total, 10.0, "{start:?} {b:?}");
            }
        }
    }
}
