//! Deterministic grid arena: states, the q-bit perception vector, and the
//! transition function over m discrete actions.
//!
//! The arena is a bounded rectangle with an agent (position + facing),
//! monsters, and health items. All dynamics are pure functions of
//! (state, action); placement is derived from (config seed, episode seed)
//! through counter-based mixing, so the same pair always yields the same
//! initial state on every platform.
//!
//! Action order and perception order are wire-format contracts: the visual
//! tokenizer packs bits in exactly this order (see `docs/world.md`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{mix, CounterRng};

/// Fixed action order. Index is the action id used in traces and tokens.
pub const ACTION_NAMES: [&str; 6] = ["MOVE", "TURN_L", "TURN_R", "ATTACK", "PICKUP", "NOOP"];

/// Fixed perception order. Bit i of a percept vector carries the i-th entry.
pub const PERCEPT_NAMES: [&str; 6] = [
    "FRONT_CLEAR",
    "MONSTER_IN_SIGHT",
    "MONSTER_AHEAD",
    "ITEM_HERE",
    "LOW_HEALTH",
    "ON_EDGE",
];

pub const MOVE: usize = 0;
pub const TURN_L: usize = 1;
pub const TURN_R: usize = 2;
pub const ATTACK: usize = 3;
pub const PICKUP: usize = 4;
pub const NOOP: usize = 5;

/// Display name for an action index (stable across configs).
pub fn action_name(action: usize) -> &'static str {
    ACTION_NAMES[action]
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("invalid action index {action} (m = {m})")]
    InvalidAction { action: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub grid_width: usize,
    pub grid_height: usize,
    /// Number of perception primitives exposed (prefix of the fixed order).
    pub q: usize,
    /// Number of action primitives allowed (prefix of the fixed order).
    pub m: usize,
    pub monster_count: usize,
    pub item_count: usize,
    pub health_max: i32,
    pub low_health_threshold: i32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            grid_width: 8,
            grid_height: 8,
            q: 6,
            m: 6,
            monster_count: 2,
            item_count: 2,
            health_max: 5,
            low_health_threshold: 3,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.grid_width < 2 || self.grid_height < 2 {
            return Err(WorldError::Config("grid must be at least 2x2".into()));
        }
        if self.q < 1 || self.q > PERCEPT_NAMES.len() {
            return Err(WorldError::Config(format!(
                "q must be in [1, {}], got {}",
                PERCEPT_NAMES.len(),
                self.q
            )));
        }
        if self.m < 2 || self.m > ACTION_NAMES.len() {
            return Err(WorldError::Config(format!(
                "m must be in [2, {}], got {}",
                ACTION_NAMES.len(),
                self.m
            )));
        }
        if self.health_max < 1 {
            return Err(WorldError::Config("health_max must be >= 1".into()));
        }
        if self.low_health_threshold >= self.health_max || self.low_health_threshold < 0 {
            return Err(WorldError::Config(
                "low_health_threshold must be in [0, health_max)".into(),
            ));
        }
        let cells = self.grid_width * self.grid_height;
        if 1 + self.monster_count + self.item_count > cells {
            return Err(WorldError::Config(format!(
                "{} entities do not fit a {}x{} grid",
                1 + self.monster_count + self.item_count,
                self.grid_width,
                self.grid_height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    North,
    East,
    South,
    West,
}

impl Facing {
    pub fn left(self) -> Facing {
        match self {
            Facing::North => Facing::West,
            Facing::West => Facing::South,
            Facing::South => Facing::East,
            Facing::East => Facing::North,
        }
    }

    pub fn right(self) -> Facing {
        self.left().left().left()
    }

    /// (dx, dy) of one step forward; y grows southward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Facing::North => (0, -1),
            Facing::East => (1, 0),
            Facing::South => (0, 1),
            Facing::West => (-1, 0),
        }
    }

    fn from_index(i: u64) -> Facing {
        match i % 4 {
            0 => Facing::North,
            1 => Facing::East,
            2 => Facing::South,
            _ => Facing::West,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monster {
    pub x: usize,
    pub y: usize,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub x: usize,
    pub y: usize,
    pub present: bool,
}

/// Boolean perception vector of length q.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerceptVector(pub Vec<bool>);

impl PerceptVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// "101001"-style rendering used by the dataset format.
    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Option<PerceptVector> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return None,
            }
        }
        Some(PerceptVector(bits))
    }
}

/// Full simulator state. Fields are public so tests can script exact
/// scenarios instead of searching for a seed that produces them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent_x: usize,
    pub agent_y: usize,
    pub facing: Facing,
    pub monsters: Vec<Monster>,
    pub items: Vec<Item>,
    pub health: i32,
    pub step_count: u32,
}

impl WorldState {
    /// Deterministic initial state for (config, episode_seed). Places the
    /// agent, monsters, and items on distinct cells and draws the starting
    /// health from [1, health_max] so health-conditioned behavior varies
    /// across episodes.
    pub fn init(cfg: &WorldConfig, episode_seed: u64) -> Result<WorldState, WorldError> {
        cfg.validate()?;
        let mut rng = CounterRng::new(mix(&[cfg.seed, episode_seed]));
        let mut free: Vec<(usize, usize)> = (0..cfg.grid_height)
            .flat_map(|y| (0..cfg.grid_width).map(move |x| (x, y)))
            .collect();
        let take = |rng: &mut CounterRng, free: &mut Vec<(usize, usize)>| {
            let i = rng.below(free.len() as u64) as usize;
            free.swap_remove(i)
        };
        let (agent_x, agent_y) = take(&mut rng, &mut free);
        let facing = Facing::from_index(rng.next_u64());
        let monsters = (0..cfg.monster_count)
            .map(|_| {
                let (x, y) = take(&mut rng, &mut free);
                Monster { x, y, alive: true }
            })
            .collect();
        let items = (0..cfg.item_count)
            .map(|_| {
                let (x, y) = take(&mut rng, &mut free);
                Item { x, y, present: true }
            })
            .collect();
        let health = 1 + rng.below(cfg.health_max as u64) as i32;
        Ok(WorldState {
            agent_x,
            agent_y,
            facing,
            monsters,
            items,
            health,
            step_count: 0,
        })
    }

    fn in_bounds(&self, cfg: &WorldConfig, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < cfg.grid_width && (y as usize) < cfg.grid_height
    }

    fn front_cell(&self, cfg: &WorldConfig) -> Option<(usize, usize)> {
        let (dx, dy) = self.facing.delta();
        let (x, y) = (self.agent_x as i64 + dx, self.agent_y as i64 + dy);
        if self.in_bounds(cfg, x, y) {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }

    fn live_monster_at(&self, x: usize, y: usize) -> Option<usize> {
        self.monsters
            .iter()
            .position(|m| m.alive && m.x == x && m.y == y)
    }

    fn front_clear(&self, cfg: &WorldConfig) -> bool {
        match self.front_cell(cfg) {
            Some((x, y)) => self.live_monster_at(x, y).is_none(),
            None => false,
        }
    }

    fn monster_in_sight(&self, cfg: &WorldConfig) -> bool {
        let (dx, dy) = self.facing.delta();
        let (mut x, mut y) = (self.agent_x as i64, self.agent_y as i64);
        loop {
            x += dx;
            y += dy;
            if !self.in_bounds(cfg, x, y) {
                return false;
            }
            if self.live_monster_at(x as usize, y as usize).is_some() {
                return true;
            }
        }
    }

    fn monster_ahead(&self, cfg: &WorldConfig) -> bool {
        match self.front_cell(cfg) {
            Some((x, y)) => self.live_monster_at(x, y).is_some(),
            None => false,
        }
    }

    fn monster_adjacent(&self) -> bool {
        self.monsters.iter().any(|m| {
            m.alive
                && m.x.abs_diff(self.agent_x) + m.y.abs_diff(self.agent_y) == 1
        })
    }

    fn item_here(&self) -> Option<usize> {
        self.items
            .iter()
            .position(|it| it.present && it.x == self.agent_x && it.y == self.agent_y)
    }

    fn on_edge(&self, cfg: &WorldConfig) -> bool {
        self.agent_x == 0
            || self.agent_y == 0
            || self.agent_x == cfg.grid_width - 1
            || self.agent_y == cfg.grid_height - 1
    }

    /// The q-bit perception vector, in the fixed `PERCEPT_NAMES` order.
    /// Pure: never mutates state.
    pub fn perceptions(&self, cfg: &WorldConfig) -> PerceptVector {
        let full = [
            self.front_clear(cfg),
            self.monster_in_sight(cfg),
            self.monster_ahead(cfg),
            self.item_here().is_some(),
            self.health < cfg.low_health_threshold,
            self.on_edge(cfg),
        ];
        PerceptVector(full[..cfg.q].to_vec())
    }

    /// One deterministic transition. MOVE into a wall or monster is a no-op;
    /// ATTACK kills a monster in the facing-adjacent cell; PICKUP consumes an
    /// item under the agent and restores 1 health (capped). After the action,
    /// health drops by 1 if any live monster is 4-adjacent.
    pub fn step(&self, action: usize, cfg: &WorldConfig) -> Result<WorldState, WorldError> {
        if action >= cfg.m {
            return Err(WorldError::InvalidAction { action, m: cfg.m });
        }
        let mut next = self.clone();
        match action {
            MOVE => {
                if let Some((x, y)) = self.front_cell(cfg) {
                    if self.live_monster_at(x, y).is_none() {
                        next.agent_x = x;
                        next.agent_y = y;
                    }
                }
            }
            TURN_L => next.facing = self.facing.left(),
            TURN_R => next.facing = self.facing.right(),
            ATTACK => {
                if let Some((x, y)) = self.front_cell(cfg) {
                    if let Some(i) = self.live_monster_at(x, y) {
                        next.monsters[i].alive = false;
                    }
                }
            }
            PICKUP => {
                if let Some(i) = self.item_here() {
                    next.items[i].present = false;
                    next.health = (next.health + 1).min(cfg.health_max);
                }
            }
            NOOP => {}
            _ => unreachable!("action indices above NOOP are rejected by m <= 6"),
        }
        if next.monster_adjacent() {
            next.health = (next.health - 1).max(0);
        }
        next.step_count += 1;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_arena(w: usize, h: usize) -> (WorldConfig, WorldState) {
        let cfg = WorldConfig {
            grid_width: w,
            grid_height: h,
            monster_count: 0,
            item_count: 0,
            ..WorldConfig::default()
        };
        let state = WorldState {
            agent_x: w / 2,
            agent_y: h / 2,
            facing: Facing::North,
            monsters: vec![],
            items: vec![],
            health: cfg.health_max,
            step_count: 0,
        };
        (cfg, state)
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = WorldConfig::default();
        let a = WorldState::init(&cfg, 0).unwrap();
        let b = WorldState::init(&cfg, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_differs_across_seeds() {
        // Oracle: serialize both states and compare bytes.
        let cfg = WorldConfig::default();
        let a = serde_json::to_string(&WorldState::init(&cfg, 0).unwrap()).unwrap();
        let b = serde_json::to_string(&WorldState::init(&cfg, 1).unwrap()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn init_rejects_overfull_grid() {
        let cfg = WorldConfig {
            grid_width: 2,
            grid_height: 2,
            monster_count: 3,
            item_count: 1,
            ..WorldConfig::default()
        };
        assert!(matches!(
            WorldState::init(&cfg, 0),
            Err(WorldError::Config(_))
        ));
    }

    #[test]
    fn init_places_entities_on_distinct_cells() {
        let cfg = WorldConfig::default();
        for seed in 0..50 {
            let s = WorldState::init(&cfg, seed).unwrap();
            let mut cells = vec![(s.agent_x, s.agent_y)];
            cells.extend(s.monsters.iter().map(|m| (m.x, m.y)));
            cells.extend(s.items.iter().map(|i| (i.x, i.y)));
            cells.sort_unstable();
            cells.dedup();
            assert_eq!(cells.len(), 1 + cfg.monster_count + cfg.item_count);
            assert!((1..=cfg.health_max).contains(&s.health));
        }
    }

    #[test]
    fn centered_agent_in_empty_arena() {
        // Hand-traced 5x5 arena: agent centered, full health, no entities.
        // FRONT_CLEAR only; every other bit is 0.
        let (cfg, state) = empty_arena(5, 5);
        let p = state.perceptions(&cfg);
        assert_eq!(
            p.0,
            vec![true, false, false, false, false, false],
            "expected [1,0,0,0,0,0]"
        );
    }

    #[test]
    fn facing_wall_blocks_front() {
        let (cfg, mut state) = empty_arena(5, 5);
        state.agent_y = 0; // on the north edge
        let p = state.perceptions(&cfg);
        assert!(!p.0[0], "FRONT_CLEAR must be false against the wall");
        assert!(p.0[5], "ON_EDGE must be true on the boundary");
    }

    #[test]
    fn low_health_boundary() {
        let (cfg, mut state) = empty_arena(5, 5);
        state.health = cfg.low_health_threshold; // not low yet
        assert!(!state.perceptions(&cfg).0[4]);
        state.health = cfg.low_health_threshold - 1;
        assert!(state.perceptions(&cfg).0[4]);
    }

    #[test]
    fn noop_changes_only_step_count() {
        let (cfg, state) = empty_arena(5, 5);
        let next = state.step(NOOP, &cfg).unwrap();
        let mut expect = state.clone();
        expect.step_count += 1;
        assert_eq!(next, expect);
    }

    #[test]
    fn move_into_wall_is_noop() {
        let (cfg, mut state) = empty_arena(5, 5);
        state.agent_y = 0;
        let next = state.step(MOVE, &cfg).unwrap();
        assert_eq!((next.agent_x, next.agent_y), (state.agent_x, state.agent_y));
    }

    #[test]
    fn attack_kills_monster_ahead() {
        // Scripted 3x3 scenario, hand-traced: agent at (1,1) facing north,
        // monster at (1,0). ATTACK kills it; MONSTER_AHEAD goes false and no
        // adjacency damage is taken afterwards.
        let cfg = WorldConfig {
            grid_width: 3,
            grid_height: 3,
            monster_count: 1,
            item_count: 0,
            ..WorldConfig::default()
        };
        let state = WorldState {
            agent_x: 1,
            agent_y: 1,
            facing: Facing::North,
            monsters: vec![Monster {
                x: 1,
                y: 0,
                alive: true,
            }],
            items: vec![],
            health: cfg.health_max,
            step_count: 0,
        };
        let p = state.perceptions(&cfg);
        assert!(p.0[1], "MONSTER_IN_SIGHT before attack");
        assert!(p.0[2], "MONSTER_AHEAD before attack");
        assert!(!p.0[0], "front is blocked by the monster");

        let next = state.step(ATTACK, &cfg).unwrap();
        assert!(!next.monsters[0].alive);
        assert_eq!(next.health, cfg.health_max, "dead monster deals no damage");
        let p2 = next.perceptions(&cfg);
        assert!(!p2.0[1] && !p2.0[2], "sight bits clear after the kill");
        assert!(p2.0[0], "front is clear after the kill");
    }

    #[test]
    fn adjacent_monster_drains_health_each_step() {
        let cfg = WorldConfig {
            grid_width: 3,
            grid_height: 3,
            monster_count: 1,
            item_count: 0,
            ..WorldConfig::default()
        };
        let mut state = WorldState {
            agent_x: 1,
            agent_y: 1,
            facing: Facing::East,
            monsters: vec![Monster {
                x: 1,
                y: 0,
                alive: true,
            }],
            items: vec![],
            health: 2,
            step_count: 0,
        };
        state = state.step(NOOP, &cfg).unwrap();
        assert_eq!(state.health, 1);
        state = state.step(NOOP, &cfg).unwrap();
        assert_eq!(state.health, 0);
        state = state.step(NOOP, &cfg).unwrap();
        assert_eq!(state.health, 0, "health is floored at zero");
    }

    #[test]
    fn pickup_consumes_item_and_heals() {
        let cfg = WorldConfig {
            grid_width: 3,
            grid_height: 3,
            monster_count: 0,
            item_count: 1,
            ..WorldConfig::default()
        };
        let state = WorldState {
            agent_x: 1,
            agent_y: 1,
            facing: Facing::North,
            monsters: vec![],
            items: vec![Item {
                x: 1,
                y: 1,
                present: true,
            }],
            health: 2,
            step_count: 0,
        };
        assert!(state.perceptions(&cfg).0[3], "ITEM_HERE");
        let next = state.step(PICKUP, &cfg).unwrap();
        assert!(!next.items[0].present);
        assert_eq!(next.health, 3);
        // Item never reappears; a second pickup is a no-op.
        let again = next.step(PICKUP, &cfg).unwrap();
        assert!(!again.items[0].present);
        assert_eq!(again.health, 3);
    }

    #[test]
    fn health_is_capped_at_max() {
        let cfg = WorldConfig {
            grid_width: 3,
            grid_height: 3,
            monster_count: 0,
            item_count: 1,
            ..WorldConfig::default()
        };
        let state = WorldState {
            agent_x: 1,
            agent_y: 1,
            facing: Facing::North,
            monsters: vec![],
            items: vec![Item {
                x: 1,
                y: 1,
                present: true,
            }],
            health: cfg.health_max,
            step_count: 0,
        };
        let next = state.step(PICKUP, &cfg).unwrap();
        assert_eq!(next.health, cfg.health_max);
    }

    #[test]
    fn invalid_action_is_rejected() {
        let (cfg, state) = empty_arena(5, 5);
        assert_eq!(
            state.step(6, &cfg),
            Err(WorldError::InvalidAction { action: 6, m: 6 })
        );
    }

    #[test]
    fn step_is_pure() {
        let cfg = WorldConfig::default();
        let state = WorldState::init(&cfg, 7).unwrap();
        let a = state.step(MOVE, &cfg).unwrap();
        let b = state.step(MOVE, &cfg).unwrap();
        assert_eq!(a, b);
        // q-truncation: a q=3 config sees the first three bits only.
        let cfg3 = WorldConfig {
            q: 3,
            ..WorldConfig::default()
        };
        assert_eq!(
            state.perceptions(&cfg3).0,
            state.perceptions(&cfg).0[..3].to_vec()
        );
    }

    #[test]
    fn turn_left_right_are_inverse() {
        for f in [Facing::North, Facing::East, Facing::South, Facing::West] {
            assert_eq!(f.left().right(), f);
            assert_eq!(f.left().left().left().left(), f);
        }
    }

    #[test]
    fn monster_in_sight_scans_the_facing_ray() {
        let cfg = WorldConfig {
            grid_width: 6,
            grid_height: 6,
            monster_count: 1,
            item_count: 0,
            ..WorldConfig::default()
        };
        let mut state = WorldState {
            agent_x: 0,
            agent_y: 3,
            facing: Facing::East,
            monsters: vec![Monster {
                x: 4,
                y: 3,
                alive: true,
            }],
            items: vec![],
            health: 5,
            step_count: 0,
        };
        let p = state.perceptions(&cfg);
        assert!(p.0[1], "distant monster on the ray is in sight");
        assert!(!p.0[2], "but not ahead");
        assert!(p.0[0], "front cell itself is clear");
        state.facing = Facing::North;
        assert!(!state.perceptions(&cfg).0[1], "off-ray monster not sighted");
    }
}
