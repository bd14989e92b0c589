//! Parser and typechecker behaviour on the bundled corpus and the named
//! edge cases.

use revy_core::ast::UnitKind;
use revy_core::parser::parse_program;
use revy_core::pretty;
use revy_core::span::SourceMap;
use revy_core::typecheck::typecheck;

fn corpus_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
}

fn read_corpus(rel: &str) -> (String, String) {
    let path = corpus_path(rel);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{rel}: {e}"));
    (rel.to_string(), text)
}

#[test]
fn auction_parses_to_six_fields_three_functions() {
    let mut sm = SourceMap::new();
    let program = parse_program(&mut sm, &[read_corpus("positive/auction.vy")]).expect("parse");
    let auction = program.unit("Auction").expect("Auction unit");
    assert_eq!(auction.kind, UnitKind::Contract);
    assert_eq!(auction.fields.len(), 6);
    assert_eq!(auction.functions.len(), 3);
    assert!(auction.no_derived_wei);
    assert_eq!(auction.specs.segment.len(), 1);
    assert_eq!(auction.specs.transitive.len(), 2);
    assert_eq!(auction.specs.function_constraints.len(), 1);
}

#[test]
fn empty_contract_with_one_field() {
    let mut sm = SourceMap::new();
    let src = "contract Tiny:\n    x: int\n";
    let program = parse_program(&mut sm, &[("tiny.vy".into(), src.into())]).expect("parse");
    let tiny = program.unit("Tiny").unwrap();
    assert_eq!(tiny.fields.len(), 1);
    assert!(tiny.functions.is_empty());
}

#[test]
fn missing_rhs_is_a_syntax_error_with_span() {
    let mut sm = SourceMap::new();
    let src = "contract Bad:\n    f: int\n\n    def g():\n        self.f =\n";
    let errs = parse_program(&mut sm, &[("bad.vy".into(), src.into())]).unwrap_err();
    assert!(!errs.is_empty());
    let (file, line, _col) = sm.line_col(errs[0].span);
    assert_eq!(file, "bad.vy");
    assert_eq!(line, 5);
}

#[test]
fn assignment_to_non_self_field_is_rejected() {
    let mut sm = SourceMap::new();
    let src = "contract Bad:\n    f: int\n\n    def g(other: address):\n        other.f = 1\n";
    let errs = parse_program(&mut sm, &[("bad.vy".into(), src.into())]).unwrap_err();
    assert!(errs[0].message.contains("only fields of `self`"));
}

#[test]
fn privacy_constraint_shape_is_checked() {
    let mut sm = SourceMap::new();
    let good = "interface T:\n    balances: map(address, uint)\n\
                \n    #@ privacy: forall({a: address}, msg.sender != a ==> self.balances[a] >= old(self.balances[a]))\n\
                \n    def transfer(frm: address, to: address, amount: uint):\n        pass\n";
    let bad = "interface U:\n    balances: map(address, uint)\n\
               \n    #@ privacy: forall({a: address}, self.balances[a] >= old(self.balances[a]))\n";
    let program = parse_program(
        &mut sm,
        &[("t.vy".into(), good.into()), ("u.vy".into(), bad.into())],
    )
    .expect("parse");
    let errs = typecheck(program).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].message.contains("privacy"));
}

#[test]
fn old_is_rejected_in_executable_code() {
    let mut sm = SourceMap::new();
    let src = "contract Bad:\n    f: int\n\n    def g():\n        self.f = old(self.f)\n";
    let program = parse_program(&mut sm, &[("bad.vy".into(), src.into())]).expect("parse");
    let errs = typecheck(program).unwrap_err();
    assert!(errs[0].message.contains("old"));
}

#[test]
fn corpus_round_trips_through_pretty_printer() {
    for rel in [
        "positive/auction.vy",
        "positive/token.vy",
        "positive/auction_derived.vy",
        "positive/token_simple.vy",
        "positive/auction_token.vy",
        "interfaces/token_iface.vy",
        "interfaces/receiver.vy",
        "negative/token_reordered.vy",
        "negative/steal_token.vy",
        "negative/badtoken.vy",
        "negative/dao.vy",
        "negative/auction_token_unguarded.vy",
    ] {
        let mut sm = SourceMap::new();
        let (name, text) = read_corpus(rel);
        let program =
            parse_program(&mut sm, &[(name.clone(), text)]).unwrap_or_else(|e| {
                panic!("{rel}: {}", e[0].render(&sm));
            });
        let printed: String = program
            .units
            .iter()
            .map(pretty::unit_to_string)
            .collect::<Vec<_>>()
            .join("\n");
        let mut sm2 = SourceMap::new();
        let reparsed = parse_program(&mut sm2, &[(name, printed.clone())])
            .unwrap_or_else(|e| panic!("{rel} reparse: {}\n---\n{printed}", e[0].render(&sm2)));
        let printed2: String = reparsed
            .units
            .iter()
            .map(pretty::unit_to_string)
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(printed, printed2, "{rel} not stable under pretty-printing");
    }
}

#[test]
fn typecheck_is_deterministic() {
    let srcs = vec![
        read_corpus("negative/badtoken.vy"),
        read_corpus("interfaces/token_iface.vy"),
    ];
    let render = |errs: Vec<revy_core::diag::Error>, sm: &SourceMap| -> Vec<String> {
        errs.iter().map(|e| e.render(sm)).collect()
    };
    let run = || {
        let mut sm = SourceMap::new();
        let program = parse_program(&mut sm, &srcs).expect("parse");
        match typecheck(program) {
            Ok(_) => Vec::new(),
            Err(errs) => render(errs, &sm),
        }
    };
    assert_eq!(run(), run());
}

#[test]
fn loops_unroll_and_private_functions_inline() {
    let mut sm = SourceMap::new();
    let src = "contract Loopy:\n    total: int\n\
               \n    def _bump(k: int) -> int:\n        v = k + 1\n        return v\n\
               \n    def run():\n        for i in range(3):\n            self.total += i\n        x = self._bump(4)\n        self.total += x\n";
    let program = parse_program(&mut sm, &[("loopy.vy".into(), src.into())]).expect("parse");
    let typed = typecheck(program).expect("typecheck");
    let unit = typed.unit("Loopy");
    // private function removed, loop unrolled into straight-line code
    assert!(unit.function("_bump").is_none());
    let run = unit.function("run").unwrap();
    assert!(run.body.len() >= 5);
    assert!(!run
        .body
        .iter()
        .any(|s| matches!(s.kind, revy_core::ast::StmtKind::For { .. }
            | revy_core::ast::StmtKind::PrivateCall { .. })));
}

#[test]
fn recursion_in_private_functions_is_rejected() {
    let mut sm = SourceMap::new();
    let src = "contract Rec:\n    x: int\n\
               \n    def _a():\n        self._a()\n\
               \n    def go():\n        self._a()\n";
    let program = parse_program(&mut sm, &[("rec.vy".into(), src.into())]).expect("parse");
    let errs = typecheck(program).unwrap_err();
    assert!(errs[0].message.contains("recursive"));
}
