//! `run-program`: parse a program, run it in a seeded world, print the
//! trace.

use demosynth_core::dsl::parse;
use demosynth_core::exec::{run_program, Terminated};
use demosynth_core::world::{action_name, WorldState, PERCEPT_NAMES};

use crate::config::load_config;
use crate::{CliError, RunProgramArgs};

pub fn run(a: RunProgramArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    let seed = a.seed.unwrap_or(cfg.gen.seed);
    let steps = a.steps.unwrap_or(cfg.gen.exec.step_budget);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be ≥ 1".into()));
    }

    let text = std::fs::read_to_string(&a.file)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.file.display())))?;
    let ast = parse(&text, &cfg.gen.dsl)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.file.display())))?;
    let world = &cfg.gen.world;
    let init = WorldState::init(world, seed)?;
    let demo = run_program(&ast, &init, world, steps)?;

    println!("seed {seed}, step budget {steps}");
    let names: Vec<&str> = PERCEPT_NAMES[..world.q].to_vec();
    println!("percept order: {}", names.join(", "));
    println!("{:>4}  {:<width$}  action", "step", "percepts", width = world.q.max(8));
    for (t, (p, action)) in demo.steps.iter().enumerate() {
        let bits: String = p.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        println!("{t:>4}  {bits:<width$}  {}", action_name(*action), width = world.q.max(8));
    }
    let how = match demo.terminated {
        Terminated::Completed => "completed",
        Terminated::StepBudgetExceeded => "step budget exceeded",
    };
    println!("{} after {} steps", how, demo.steps.len());
    Ok(())
}
