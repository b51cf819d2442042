use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Category, EvalError};
use crate::action::{GoalPredicate, SimObject, SimWorld, TaskSpec};
use crate::Vec3d;

/// A task together with the world it runs in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub task: TaskSpec,
    pub world: SimWorld,
}

/// Cake on a table next to a plate, with either the cut or the pick-and-place
/// task. `task_name` is `cut` or `pick_place`.
pub fn nominal_setup(task_name: &str) -> Result<Setup, EvalError> {
    let cake = SimObject {
        name: "cake".into(),
        position: Vec3d::new(0.1, 0.05, 0.04),
        size_mm: 120.0,
        color_id: "white".into(),
        held: false,
    };
    let plate = SimObject {
        name: "plate".into(),
        position: Vec3d::new(-0.15, 0.1, 0.01),
        size_mm: 200.0,
        color_id: "white".into(),
        held: false,
    };
    let task = match task_name {
        "cut" => TaskSpec::cut("cake"),
        "pick_place" => TaskSpec::pick_place("cake", plate.position + Vec3d::new(0.0, 0.0, 0.03)),
        other => return Err(EvalError::InvalidSetup(format!("no nominal setup for task {other:?}"))),
    };
    Ok(Setup {
        task,
        world: SimWorld {
            objects: vec![cake, plate],
            workspace: SimWorld::default_workspace(),
            background_id: "wooden_table".into(),
        },
    })
}

/// Perturbation magnitudes per category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationRanges {
    pub size_scale: (f64, f64),
    pub colors: Vec<String>,
    /// Distance (m) kept between moved objects and the workspace walls.
    pub motion_margin_m: f64,
    /// Upper bound (m) for raising the destination or target.
    pub max_elevation_m: f64,
    pub semantic_nouns: Vec<String>,
    pub distractor_count: (usize, usize),
    pub distractor_names: Vec<String>,
    /// Minimum distance (m) from distractors to the target and goal.
    pub distractor_clearance_m: f64,
    pub backgrounds: Vec<String>,
}

impl Default for PerturbationRanges {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self {
            size_scale: (0.7, 1.3),
            colors: s(&["white", "red", "green", "blue", "yellow", "brown"]),
            motion_margin_m: 0.1,
            max_elevation_m: 0.1,
            semantic_nouns: s(&["banana", "tomato", "cube"]),
            distractor_count: (1, 3),
            distractor_names: s(&["mug", "sponge", "spoon", "apple", "bottle", "box"]),
            distractor_clearance_m: 0.1,
            backgrounds: s(&["wooden_table", "white_cloth", "checkered_mat", "dark_desk"]),
        }
    }
}

impl PerturbationRanges {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidRanges(m.to_string()));
        let (lo, hi) = self.size_scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("size_scale must satisfy 0 < lo <= hi");
        }
        if self.colors.len() < 2 {
            return bad("a color swap needs at least two colors");
        }
        if !(self.motion_margin_m >= 0.0) || !(self.max_elevation_m >= 0.0) || !(self.distractor_clearance_m >= 0.0) {
            return bad("margins must be non-negative");
        }
        if self.semantic_nouns.is_empty() {
            return bad("semantic_nouns is empty");
        }
        let (a, b) = self.distractor_count;
        if a < 1 || a > b || b > self.distractor_names.len() {
            return bad("distractor_count must satisfy 1 <= lo <= hi <= number of distractor names");
        }
        if self.backgrounds.len() < 2 {
            return bad("a background change needs at least two backgrounds");
        }
        Ok(())
    }
}

/// Category-specific change applied to the nominal setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Seen,
    Physical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size_scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
    },
    Motion {
        target_position: Vec3d,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elevation_m: Option<f64>,
    },
    Semantic {
        noun: String,
        instruction: String,
    },
    Visual {
        distractors: Vec<SimObject>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background_id: Option<String>,
    },
}

impl Perturbation {
    pub fn category(&self) -> Category {
        match self {
            Self::Seen => Category::Seen,
            Self::Physical { .. } => Category::Physical,
            Self::Motion { .. } => Category::Motion,
            Self::Semantic { .. } => Category::Semantic,
            Self::Visual { .. } => Category::Visual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub category: Category,
    /// The unperturbed task.
    pub base_task: TaskSpec,
    /// The task as run, after any instruction or goal change.
    pub task: TaskSpec,
    pub world: SimWorld,
    pub perturbation: Perturbation,
    /// Seed handed to the policy for this rollout.
    pub seed: u64,
}

/// Instruction used for a substituted noun, matching the base task's kind.
pub fn semantic_instruction(goal: &GoalPredicate, noun: &str) -> String {
    match goal {
        GoalPredicate::Cut => format!("cut the {noun}"),
        GoalPredicate::PlaceAt { .. } => format!("pick up the {noun} and place it on the plate"),
        GoalPredicate::Grasp => format!("pick up the {noun}"),
    }
}

fn category_salt(c: Category) -> u64 {
    match c {
        Category::Seen => 0x5ee0,
        Category::Physical => 0x9b75,
        Category::Motion => 0x307a,
        Category::Semantic => 0x5e3a,
        Category::Visual => 0x7154,
    }
}

/// `n` scenarios of one category. Deterministic in `(setup, category, n,
/// seed, ranges)`.
pub fn generate_scenarios(
    setup: &Setup,
    category: Category,
    n: usize,
    seed: u64,
    ranges: &PerturbationRanges,
) -> Result<Vec<Scenario>, EvalError> {
    if n == 0 {
        return Err(EvalError::NoScenarios);
    }
    ranges.validate()?;
    setup.task.validate().map_err(EvalError::InvalidSetup)?;
    let target_index = setup
        .world
        .index_of(&setup.task.target_object)
        .ok_or_else(|| EvalError::InvalidSetup(format!("target {:?} is not in the world", setup.task.target_object)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ category_salt(category));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut world = setup.world.clone();
        let mut task = setup.task.clone();
        let perturbation = match category {
            Category::Seen => Perturbation::Seen,
            Category::Physical => physical(&mut rng, &mut world, target_index, ranges),
            Category::Motion => motion(&mut rng, &mut world, &mut task, target_index, ranges),
            Category::Semantic => semantic(&mut rng, &mut world, &mut task, target_index, ranges),
            Category::Visual => visual(&mut rng, &mut world, &task, target_index, ranges),
        };
        out.push(Scenario {
            scenario_id: format!("{}-{}-{:03}", setup.task.task_name, category, i),
            category,
            base_task: setup.task.clone(),
            task,
            world,
            perturbation,
            seed: rng.gen(),
        });
    }
    Ok(out)
}

/// `n` scenarios for every category, in category order.
pub fn generate_suite(
    setup: &Setup,
    n_per_category: usize,
    seed: u64,
    ranges: &PerturbationRanges,
) -> Result<Vec<Scenario>, EvalError> {
    let mut all = Vec::new();
    for c in Category::ALL {
        all.extend(generate_scenarios(setup, c, n_per_category, seed, ranges)?);
    }
    Ok(all)
}

/// 1 = first option only, 2 = second only, 3 = both.
fn and_or(rng: &mut ChaCha8Rng) -> (bool, bool) {
    let m: u8 = rng.gen_range(1..=3);
    (m & 1 != 0, m & 2 != 0)
}

fn physical(rng: &mut ChaCha8Rng, world: &mut SimWorld, t: usize, r: &PerturbationRanges) -> Perturbation {
    let (scale, swap) = and_or(rng);
    let size_scale = scale.then(|| rng.gen_range(r.size_scale.0..=r.size_scale.1));
    let color = swap.then(|| {
        let current = world.objects[t].color_id.clone();
        let pool: Vec<&String> = r.colors.iter().filter(|c| **c != current).collect();
        (*pool.choose(rng).expect("at least two colors")).clone()
    });
    if let Some(s) = size_scale {
        world.objects[t].size_mm *= s;
    }
    if let Some(c) = &color {
        world.objects[t].color_id = c.clone();
    }
    Perturbation::Physical { size_scale, color }
}

fn inner_range(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    if hi - lo > 2.0 * margin {
        (lo + margin, hi - margin)
    } else {
        let c = 0.5 * (lo + hi);
        (c, c)
    }
}

fn motion(
    rng: &mut ChaCha8Rng,
    world: &mut SimWorld,
    task: &mut TaskSpec,
    t: usize,
    r: &PerturbationRanges,
) -> Perturbation {
    let ws = world.workspace;
    let (x0, x1) = inner_range(ws.min.x, ws.max.x, r.motion_margin_m);
    let (y0, y1) = inner_range(ws.min.y, ws.max.y, r.motion_margin_m);
    let mut target = world.objects[t].position;
    target.x = rng.gen_range(x0..=x1);
    target.y = rng.gen_range(y0..=y1);

    let headroom = |z: f64| (ws.max.z - r.motion_margin_m - z).max(0.0);
    let mut elevation_m = (r.max_elevation_m > 0.0 && rng.gen_bool(0.5)).then(|| rng.gen_range(0.0..=r.max_elevation_m));
    if let Some(e) = elevation_m.as_mut() {
        match &mut task.goal {
            GoalPredicate::PlaceAt { position, .. } => {
                *e = e.min(headroom(position.z));
                position.z += *e;
                if let Some(plate) = world.objects.iter_mut().find(|o| o.name == "plate") {
                    plate.position.z += *e;
                }
            }
            _ => {
                *e = e.min(headroom(target.z));
                target.z += *e;
            }
        }
    }
    target = ws.clamp(target);
    world.objects[t].position = target;
    Perturbation::Motion { target_position: target, elevation_m }
}

fn semantic(
    rng: &mut ChaCha8Rng,
    world: &mut SimWorld,
    task: &mut TaskSpec,
    t: usize,
    r: &PerturbationRanges,
) -> Perturbation {
    let noun = r.semantic_nouns.choose(rng).expect("non-empty nouns").clone();
    let instruction = semantic_instruction(&task.goal, &noun);
    world.objects[t].name = noun.clone();
    task.target_object = noun.clone();
    task.instruction = instruction.clone();
    Perturbation::Semantic { noun, instruction }
}

fn visual(
    rng: &mut ChaCha8Rng,
    world: &mut SimWorld,
    task: &TaskSpec,
    t: usize,
    r: &PerturbationRanges,
) -> Perturbation {
    let (add, recolor) = and_or(rng);
    let mut distractors = Vec::new();
    if add {
        let count = rng.gen_range(r.distractor_count.0..=r.distractor_count.1);
        let mut keep_clear = vec![world.objects[t].position];
        if let GoalPredicate::PlaceAt { position, .. } = &task.goal {
            keep_clear.push(*position);
        }
        let names: Vec<&String> = r
            .distractor_names
            .iter()
            .filter(|n| world.index_of(n).is_none())
            .collect::<Vec<_>>()
            .choose_multiple(rng, count)
            .copied()
            .collect();
        let ws = world.workspace;
        let (x0, x1) = inner_range(ws.min.x, ws.max.x, r.motion_margin_m);
        let (y0, y1) = inner_range(ws.min.y, ws.max.y, r.motion_margin_m);
        for name in names {
            let mut pos = None;
            for _ in 0..64 {
                let p = Vec3d::new(rng.gen_range(x0..=x1), rng.gen_range(y0..=y1), world.objects[t].position.z);
                if keep_clear.iter().all(|q| q.xy().distance(p.xy()) >= r.distractor_clearance_m) {
                    pos = Some(p);
                    break;
                }
            }
            let Some(position) = pos else { continue };
            keep_clear.push(position);
            let obj = SimObject {
                name: name.clone(),
                position,
                size_mm: rng.gen_range(40.0..=150.0),
                color_id: r.colors.choose(rng).expect("colors").clone(),
                held: false,
            };
            world.objects.push(obj.clone());
            distractors.push(obj);
        }
    }
    let background_id = recolor.then(|| {
        let pool: Vec<&String> = r.backgrounds.iter().filter(|b| **b != world.background_id).collect();
        (*pool.choose(rng).expect("at least two backgrounds")).clone()
    });
    if let Some(b) = &background_id {
        world.background_id = b.clone();
    }
    Perturbation::Visual { distractors, background_id }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_setups_are_valid() {
        for name in ["cut", "pick_place"] {
            let s = nominal_setup(name).unwrap();
            s.task.validate().unwrap();
            assert!(s.world.index_of(&s.task.target_object).is_some());
        }
        assert!(nominal_setup("juggle").is_err());
    }

    #[test]
    fn zero_scenarios_is_an_error() {
        let s = nominal_setup("cut").unwrap();
        assert_eq!(
            generate_scenarios(&s, Category::Seen, 0, 1, &PerturbationRanges::default()),
            Err(EvalError::NoScenarios)
        );
    }

    #[test]
    fn perturbation_matches_category() {
        let s = nominal_setup("pick_place").unwrap();
        let all = generate_suite(&s, 8, 3, &PerturbationRanges::default()).unwrap();
        assert_eq!(all.len(), 40);
        for sc in &all {
            assert_eq!(sc.perturbation.category(), sc.category);
            sc.task.validate().unwrap();
            assert!(sc.world.index_of(&sc.task.target_object).is_some());
        }
    }

    #[test]
    fn physical_scale_in_range() {
        let s = nominal_setup("cut").unwrap();
        for sc in generate_scenarios(&s, Category::Physical, 200, 9, &PerturbationRanges::default()).unwrap() {
            let Perturbation::Physical { size_scale, color } = &sc.perturbation else { panic!() };
            assert!(size_scale.is_some() || color.is_some());
            if let Some(k) = size_scale {
                assert!((0.7..=1.3).contains(k));
            }
            if let Some(c) = color {
                assert_ne!(c, "white");
            }
        }
    }

    #[test]
    fn visual_distractor_count() {
        let s = nominal_setup("pick_place").unwrap();
        for sc in generate_scenarios(&s, Category::Visual, 100, 5, &PerturbationRanges::default()).unwrap() {
            let Perturbation::Visual { distractors, background_id } = &sc.perturbation else { panic!() };
            assert!(distractors.len() <= 3);
            assert!(!distractors.is_empty() || background_id.is_some());
            assert_eq!(sc.world.objects.len(), 2 + distractors.len());
        }
    }
}
