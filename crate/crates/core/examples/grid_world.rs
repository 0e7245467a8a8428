//! Generate a map, print it, and walk a short scripted path.
//!
//! cargo run --example grid_world -- 7

use offline_distill::env::{self, Action, EnvConfig};

fn main() -> offline_distill::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = env::generate(&EnvConfig::default(), seed)?;
    println!("seed {seed}, shortest path {:?} steps", spec.distance_to_goal(spec.start));
    println!("{}", spec.render(None));

    let mut state = spec.reset();
    let mut total = 0.0;
    for a in [Action::Right, Action::Down, Action::Down, Action::Left, Action::Stay] {
        if state.terminated {
            break;
        }
        let out = state.step(a);
        total += out.reward;
        println!("{a:?}: reward {:+.1}, done {}", out.reward, out.done);
        state = out.state;
    }
    println!("{}", spec.render(Some(state.agent)));
    println!("return so far {total:.1}, observation length {}", state.observe().len());
    Ok(())
}
