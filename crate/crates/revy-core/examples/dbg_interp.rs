use revy_core::interp::{check_dynamic, Bounds};
use revy_core::parser::parse_program;
use revy_core::span::SourceMap;
use revy_core::typecheck::typecheck;

fn main() {
    for set in [
        vec!["negative/badtoken.vy", "interfaces/token_iface.vy", "interfaces/receiver.vy"],
        vec!["positive/token.vy", "interfaces/receiver.vy"],
        vec!["positive/auction_derived.vy"],
    ] {
        println!("=== {:?}", set);
        let mut sm = SourceMap::new();
        let inputs: Vec<_> = set.iter().map(|r| {
            let p = std::path::Path::new("corpus").join(r);
            (r.to_string(), std::fs::read_to_string(&p).unwrap())
        }).collect();
        let program = parse_program(&mut sm, &inputs).unwrap();
        let typed = typecheck(program).unwrap();
        let bounds = Bounds { budget: 3, ..Bounds::default() };
        match check_dynamic(&typed, &sm, &bounds) {
            Ok(Some(v)) => println!("VIOLATION {}", serde_json::to_string_pretty(&v).unwrap()),
            Ok(None) => println!("pass"),
            Err(e) => println!("ERROR {e}"),
        }
    }
}
