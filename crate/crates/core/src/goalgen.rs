//! Seeded goal structures and the three director views.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockworld::{
    project_side_view, BlockId, Cell, Color, Orientation, Placement, Shape, Side, SideView,
    StructureState, DIM,
};

/// A non-empty list of colors to draw from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette(Vec<Color>);

impl Palette {
    pub fn new(colors: Vec<Color>) -> Option<Self> {
        (!colors.is_empty()).then_some(Palette(colors))
    }

    pub fn colors(&self) -> &[Color] {
        &self.0
    }
}

impl Default for Palette {
    fn default() -> Self {
        Palette(vec![Color::Red, Color::Green, Color::Blue, Color::Yellow])
    }
}

/// Fills the whole 3×3×3 volume. Each layer is scanned row by row; at every
/// uncovered cell a long piece is chosen with probability 0.5 when one fits
/// (picking uniformly among the orientations that fit), otherwise a short one.
pub fn generate_goal(seed: u64, palette: &Palette) -> StructureState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters: BTreeMap<(Color, Shape), u32> = BTreeMap::new();
    let mut placements = Vec::new();
    for z in 0..DIM {
        let mut covered = [[false; DIM as usize]; DIM as usize];
        for y in 0..DIM {
            for x in 0..DIM {
                if covered[y as usize][x as usize] {
                    continue;
                }
                let mut fits = Vec::new();
                if x + 1 < DIM && !covered[y as usize][x as usize + 1] {
                    fits.push(Orientation::AlongX);
                }
                if y + 1 < DIM && !covered[y as usize + 1][x as usize] {
                    fits.push(Orientation::AlongY);
                }
                let long = !fits.is_empty() && rng.gen_bool(0.5);
                let shape = if long { Shape::Long } else { Shape::Short };
                let orientation = if long {
                    *fits.choose(&mut rng).expect("non-empty")
                } else {
                    Orientation::AlongX
                };
                let color = *palette.colors().choose(&mut rng).expect("non-empty palette");
                let index = counters.entry((color, shape)).or_insert(0);
                *index += 1;
                let p = Placement::new(
                    BlockId::new(color, shape, *index),
                    Cell::new(x, y, z),
                    orientation,
                );
                for c in p.cells() {
                    covered[c.y as usize][c.x as usize] = true;
                }
                placements.push(p);
            }
        }
    }
    StructureState::from_placements(placements, None).expect("layer tiling is always valid")
}

/// The three director views of a goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalViews {
    pub front: SideView,
    pub left: SideView,
    pub right: SideView,
}

impl GoalViews {
    pub fn get(&self, side: Side) -> &SideView {
        match side {
            Side::Front => &self.front,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &SideView> {
        [&self.front, &self.left, &self.right].into_iter()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for v in self.iter() {
            map.insert(v.side.as_str().to_string(), serde_json::json!(v.rows()));
        }
        serde_json::Value::Object(map)
    }
}

pub fn render_views(goal: &StructureState) -> GoalViews {
    GoalViews {
        front: project_side_view(goal, Side::Front),
        left: project_side_view(goal, Side::Left),
        right: project_side_view(goal, Side::Right),
    }
}

#[derive(Serialize, Deserialize)]
struct GoalFile {
    seed: u64,
    placements: Vec<Placement>,
    views: serde_json::Value,
}

/// Pretty-printed `goal.json` content: seed, placements and the three views.
pub fn goal_json(seed: u64, goal: &StructureState) -> String {
    let file = GoalFile {
        seed,
        placements: goal.placements().copied().collect(),
        views: render_views(goal).to_json(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable");
    out.push('\n');
    out
}
