//! Prints a ready-to-edit experiment config for the `gap-node` and `sweep`
//! subcommands: `cargo run --example default_config > config.json`.

fn main() {
    let cfg = genlab::experiment::circle_teacher_config(2026);
    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
}
