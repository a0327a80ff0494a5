use chain_routing::sim::{parse_scenario, run};
use std::path::Path;

fn main() {
    let name = std::env::args().nth(1).unwrap();
    let ticks: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(100);
    let path = format!("scenarios/{name}.scn");
    let text = std::fs::read_to_string(&path).unwrap();
    let scn = parse_scenario(&text, &name, Path::new("scenarios")).unwrap();
    let trace = run(&scn, ticks);
    print!("{}", trace.render());
}
