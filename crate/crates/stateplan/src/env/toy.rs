//! Built-in "KeyDoor" toy world: three rooms, a key in a kitchen drawer, a
//! locked pantry door. Deterministic, desk-scale stand-in for a real text
//! environment.
//!
//! Reward schedule (raw): first kitchen entry 0.25, taking the key 0.25,
//! opening the unlocked pantry door 0.5; done at cumulative 1.0. Unlocking
//! itself pays nothing, which gives the planner a delayed-reward hop.

use super::{EnvAdapter, EnvError, StepOutcome, TaskInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Room {
    Hallway,
    Kitchen,
    Pantry,
}

/// The toy environment. `Clone` + `Eq` + `Hash` so search oracles can expand
/// world states directly. Score is tracked in quarter units to keep equality
/// exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToyWorld {
    room: Room,
    drawer_open: bool,
    has_key: bool,
    pantry_unlocked: bool,
    pantry_open: bool,
    kitchen_visited: bool,
    score_quarters: u8,
    done: bool,
}

impl Default for ToyWorld {
    fn default() -> Self {
        ToyWorld::new()
    }
}

impl ToyWorld {
    pub fn new() -> ToyWorld {
        ToyWorld {
            room: Room::Hallway,
            drawer_open: false,
            has_key: false,
            pantry_unlocked: false,
            pantry_open: false,
            kitchen_visited: false,
            score_quarters: 0,
            done: false,
        }
    }

    /// Cumulative raw reward so far.
    pub fn score(&self) -> f64 {
        f64::from(self.score_quarters) * 0.25
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The raw reward a completed run accumulates; the configured goal.
    pub const GOAL_REWARD: f64 = 1.0;

    fn objects(&self) -> Vec<String> {
        let mut objs: Vec<&str> = match self.room {
            Room::Hallway => {
                let mut v = vec!["kitchen", "pantry door"];
                if self.pantry_open {
                    v.push("pantry");
                }
                v
            }
            Room::Kitchen => {
                let mut v = vec!["hallway", "drawer"];
                if self.drawer_open && !self.has_key {
                    v.push("key");
                }
                v
            }
            Room::Pantry => vec!["hallway", "shelf"],
        };
        objs.sort_unstable();
        objs.into_iter().map(str::to_string).collect()
    }

    fn room_description(&self) -> String {
        let prose = match self.room {
            Room::Hallway => {
                let door = if self.pantry_open {
                    "The pantry door stands open."
                } else if self.pantry_unlocked {
                    "The pantry door is closed but unlocked."
                } else {
                    "The pantry door is locked."
                };
                format!("You are in the hallway. A doorway opens into the kitchen. {door}")
            }
            Room::Kitchen => {
                let drawer = if !self.drawer_open {
                    "A drawer is set into the counter, closed."
                } else if self.has_key {
                    "A drawer is set into the counter, open and empty."
                } else {
                    "A drawer is set into the counter; inside sits a brass key."
                };
                format!("You are in the kitchen. A doorway leads back to the hallway. {drawer}")
            }
            Room::Pantry => "You are in the pantry. Shelves of preserves line the walls. \
                             A doorway leads back to the hallway."
                .to_string(),
        };
        format!("{prose}\nYou can access: {}", self.objects().join(", "))
    }

    fn inventory_text(&self) -> String {
        if self.has_key {
            "You are carrying: a brass key.".to_string()
        } else {
            "You are carrying: nothing.".to_string()
        }
    }

    fn apply(&mut self, action: &str) -> (bool, String, u8) {
        match action {
            "look around" => (true, self.room_description(), 0),
            "inventory" => (true, self.inventory_text(), 0),
            "go kitchen" if self.room == Room::Hallway => {
                self.room = Room::Kitchen;
                let reward = if self.kitchen_visited { 0 } else { 1 };
                self.kitchen_visited = true;
                (true, self.room_description(), reward)
            }
            "go hallway" if self.room != Room::Hallway => {
                self.room = Room::Hallway;
                (true, self.room_description(), 0)
            }
            "go pantry" if self.room == Room::Hallway && self.pantry_open => {
                self.room = Room::Pantry;
                (true, self.room_description(), 0)
            }
            "go pantry" if self.room == Room::Hallway => {
                (false, "The pantry door is shut.".to_string(), 0)
            }
            "open drawer" if self.room == Room::Kitchen => {
                if self.drawer_open {
                    (false, "The drawer is already open.".to_string(), 0)
                } else {
                    self.drawer_open = true;
                    (
                        true,
                        "You slide the drawer open. Inside sits a brass key.".to_string(),
                        0,
                    )
                }
            }
            "pick up key" if self.room == Room::Kitchen && self.drawer_open && !self.has_key => {
                self.has_key = true;
                (true, "You take the brass key.".to_string(), 1)
            }
            "pick up key" => (false, "You don't see any key you can take.".to_string(), 0),
            "use key on pantry door" if self.room == Room::Hallway && self.has_key => {
                if self.pantry_unlocked {
                    (false, "The pantry door is already unlocked.".to_string(), 0)
                } else {
                    self.pantry_unlocked = true;
                    (
                        true,
                        "You unlock the pantry door with the brass key.".to_string(),
                        0,
                    )
                }
            }
            "open pantry door" if self.room == Room::Hallway => {
                if self.pantry_open {
                    (false, "The pantry door is already open.".to_string(), 0)
                } else if self.pantry_unlocked {
                    self.pantry_open = true;
                    (
                        true,
                        "You swing the pantry door open. The pantry lies before you.".to_string(),
                        2,
                    )
                } else {
                    (false, "The pantry door is locked.".to_string(), 0)
                }
            }
            _ => (
                false,
                "No known action matches that input.".to_string(),
                0,
            ),
        }
    }
}

impl EnvAdapter for ToyWorld {
    fn reset(&mut self) -> Result<String, EnvError> {
        *self = ToyWorld::new();
        Ok(self.room_description())
    }

    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        let (valid, observation, reward_quarters) = self.apply(action.trim());
        self.score_quarters += reward_quarters;
        if self.score_quarters >= 4 {
            self.done = true;
        }
        Ok(StepOutcome {
            observation,
            raw_reward: f64::from(reward_quarters) * 0.25,
            done: self.done,
            valid,
        })
    }

    fn describe(&mut self) -> Result<TaskInfo, EnvError> {
        Ok(TaskInfo {
            objective: "Unlock and open the pantry door.".to_string(),
            description: "an agent situated in a small house with a hallway, a kitchen and \
                          a pantry. Generate a sequence of actions to meet the objective. \
                          Keys open locks. Containers must be opened before taking what is \
                          inside. Do not make up new actions or objects."
                .to_string(),
        })
    }

    fn accessible_objects(&mut self) -> Result<Vec<String>, EnvError> {
        Ok(self.objects())
    }

    fn action_templates(&mut self) -> Result<Vec<String>, EnvError> {
        Ok([
            "go OBJ",
            "open OBJ",
            "pick up OBJ",
            "use OBJ on OBJ",
            "look around",
            "inventory",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect())
    }

    fn inventory(&mut self) -> Result<String, EnvError> {
        Ok(self.inventory_text())
    }
}

/// The shortest plan that solves the world; used by fixtures and docs.
pub const CANONICAL_PLAN: [&str; 6] = [
    "go kitchen",
    "open drawer",
    "pick up key",
    "go hallway",
    "use key on pantry door",
    "open pantry door",
];
