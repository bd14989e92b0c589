//! Splitting lowered function bodies into local segments: maximal call-free
//! statement runs. Ghost commands stay inside their enclosing segment.

use crate::ast::{FunctionDef, Stmt, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    /// Segment ends at the external call / send at this body index.
    Call(usize),
    Return,
}

#[derive(Debug, Clone)]
pub struct Segment {
    /// Indices into the lowered body: `start..end` are the segment's
    /// call-free commands (the terminating call is *not* included).
    pub start: usize,
    pub end: usize,
    pub terminator: Terminator,
}

impl Segment {
    pub fn commands<'a>(&self, body: &'a [Stmt]) -> &'a [Stmt] {
        &body[self.start..self.end]
    }
}

pub fn is_call(s: &Stmt) -> bool {
    matches!(s.kind, StmtKind::Call { .. } | StmtKind::Send { .. })
}

/// Split a lowered (loop-free, inlined) function body into segments.
/// Concatenating the segments' commands with the calls at their terminators
/// reconstructs the body.
pub fn split_segments(f: &FunctionDef) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start = 0usize;
    for (i, s) in f.body.iter().enumerate() {
        debug_assert!(
            !matches!(s.kind, StmtKind::For { .. } | StmtKind::PrivateCall { .. }),
            "segment splitting requires a lowered body"
        );
        if is_call(s) {
            segments.push(Segment {
                start,
                end: i,
                terminator: Terminator::Call(i),
            });
            start = i + 1;
        }
    }
    segments.push(Segment {
        start,
        end: f.body.len(),
        terminator: Terminator::Return,
    });
    segments
}

/// Number of external calls in a lowered body.
pub fn call_count(f: &FunctionDef) -> usize {
    f.body.iter().filter(|s| is_call(s)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::span::SourceMap;

    fn parse_fn(body: &str) -> FunctionDef {
        let src = format!("contract C:\n    x: int\n    t: T\n\n    def f():\n{body}");
        let iface = "interface T:\n    def g():\n        pass\n";
        let mut sm = SourceMap::new();
        let program = crate::parser::parse_program(
            &mut sm,
            &[
                ("c.vy".to_string(), src),
                ("t.vy".to_string(), iface.to_string()),
            ],
        )
        .expect("parse");
        let typed = crate::typecheck::typecheck(program).expect("typecheck");
        typed.unit("C").function("f").unwrap().clone()
    }

    #[test]
    fn call_free_body_is_one_segment() {
        let f = parse_fn("        self.x = 1\n        assert self.x == 1\n");
        let segs = split_segments(&f);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].terminator, Terminator::Return);
        assert_eq!(segs[0].end - segs[0].start, 2);
    }

    #[test]
    fn split_at_send() {
        let f = parse_fn(
            "        self.x = 1\n        send(msg.sender, value=1)\n        self.x = 2\n",
        );
        let segs = split_segments(&f);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].terminator, Terminator::Call(1));
        assert_eq!(segs[1].terminator, Terminator::Return);
        assert_eq!(call_count(&f) + 1, segs.len());
    }

    #[test]
    fn single_call_body_gives_two_empty_segments() {
        let f = parse_fn("        self.t.g()\n");
        let segs = split_segments(&f);
        assert_eq!(segs.len(), 2);
        assert!(segs[0].commands(&f.body).is_empty());
        assert!(segs[1].commands(&f.body).is_empty());
    }
}
