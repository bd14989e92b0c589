//! Recursive-descent parser over the lexer's logical lines.

use crate::ast::*;
use crate::diag::{Error, ErrorKind, Errors};
use crate::lexer::{lex, AnnKind, Line, Tok};
use crate::span::{FileId, SourceMap, Span};

/// Parse one file's text; may contain several source units.
pub fn parse_file(file: FileId, text: &str) -> Result<Vec<SourceUnit>, Errors> {
    let lines = lex(file, text).map_err(|e| vec![e])?;
    let mut p = Parser {
        lines,
        pos: 0,
        file,
        errors: Vec::new(),
    };
    let units = p.parse_units();
    if p.errors.is_empty() {
        Ok(units)
    } else {
        Err(p.errors)
    }
}

/// Parse a set of named sources into a `Program`, registering them in `sources`.
pub fn parse_program(
    sources: &mut SourceMap,
    inputs: &[(String, String)],
) -> Result<Program, Errors> {
    let mut units = Vec::new();
    let mut errors = Vec::new();
    for (name, text) in inputs {
        let id = sources.add_file(name.clone(), text.clone());
        match parse_file(id, text) {
            Ok(mut us) => units.append(&mut us),
            Err(mut es) => errors.append(&mut es),
        }
    }
    if errors.is_empty() {
        Ok(Program { units })
    } else {
        Err(errors)
    }
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
    file: FileId,
    errors: Errors,
}

/// Cursor over one logical line's tokens.
struct Cur<'a> {
    toks: &'a [(Tok, Span)],
    i: usize,
    line_span: Span,
}

impl<'a> Cur<'a> {
    fn new(line: &'a Line) -> Self {
        Cur {
            toks: &line.toks,
            i: 0,
            line_span: line.span,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.i + 1).map(|(t, _)| t)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.i)
            .map(|(_, s)| *s)
            .unwrap_or(Span::new(self.line_span.file, self.line_span.hi as usize, self.line_span.hi as usize))
    }

    fn next(&mut self) -> Option<(Tok, Span)> {
        let t = self.toks.get(self.i).cloned();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<Span, Error> {
        match self.toks.get(self.i) {
            Some((tok, sp)) if tok == t => {
                self.i += 1;
                Ok(*sp)
            }
            Some((tok, sp)) => Err(Error::new(
                ErrorKind::Syntax,
                format!("expected {}, found {}", t.describe(), tok.describe()),
                *sp,
            )),
            None => Err(Error::new(
                ErrorKind::Syntax,
                format!("expected {} at end of line", t.describe()),
                self.span(),
            )),
        }
    }

    fn eat_ident(&mut self, name: &str) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) if s == name => {
                self.i += 1;
                true
            }
            _ => false,
        }
    }

    fn peek_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == name)
    }

    fn expect_ident(&mut self) -> Result<Ident, Error> {
        match self.next() {
            Some((Tok::Ident(s), sp)) => Ok(Ident::new(s, sp)),
            Some((tok, sp)) => Err(Error::new(
                ErrorKind::Syntax,
                format!("expected identifier, found {}", tok.describe()),
                sp,
            )),
            None => Err(Error::new(
                ErrorKind::Syntax,
                "expected identifier at end of line",
                self.span(),
            )),
        }
    }

    fn expect_keyword(&mut self, name: &str) -> Result<Span, Error> {
        match self.next() {
            Some((Tok::Ident(s), sp)) if s == name => Ok(sp),
            Some((tok, sp)) => Err(Error::new(
                ErrorKind::Syntax,
                format!("expected `{name}`, found {}", tok.describe()),
                sp,
            )),
            None => Err(Error::new(
                ErrorKind::Syntax,
                format!("expected `{name}` at end of line"),
                self.span(),
            )),
        }
    }

    fn expect_end(&mut self) -> Result<(), Error> {
        match self.toks.get(self.i) {
            None => Ok(()),
            Some((tok, sp)) => Err(Error::new(
                ErrorKind::Syntax,
                format!("unexpected trailing {}", tok.describe()),
                *sp,
            )),
        }
    }
}

impl Parser {
    fn peek_line(&self) -> Option<&Line> {
        self.lines.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Line> {
        let l = self.lines.get(self.pos);
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    fn error_here(&mut self, msg: impl Into<String>) {
        let span = self
            .peek_line()
            .map(|l| l.span)
            .unwrap_or(Span::new(self.file, 0, 0));
        self.errors.push(Error::new(ErrorKind::Syntax, msg, span));
    }

    /// Skip to the next line at or below `indent` (error recovery).
    fn recover_to_indent(&mut self, indent: usize) {
        while let Some(l) = self.peek_line() {
            if l.indent <= indent {
                break;
            }
            self.pos += 1;
        }
    }

    fn parse_units(&mut self) -> Vec<SourceUnit> {
        let mut units = Vec::new();
        while let Some(line) = self.peek_line() {
            if line.indent != 0 {
                self.error_here("expected a top-level `contract` or `interface` declaration");
                self.pos += 1;
                self.recover_to_indent(0);
                continue;
            }
            match self.parse_unit() {
                Some(u) => units.push(u),
                None => {
                    self.pos += 1;
                    self.recover_to_indent(0);
                }
            }
        }
        units
    }

    fn parse_unit(&mut self) -> Option<SourceUnit> {
        let line = self.bump()?.clone();
        let mut cur = Cur::new(&line);
        let kind = if cur.eat_ident("contract") {
            UnitKind::Contract
        } else if cur.eat_ident("interface") {
            UnitKind::Interface
        } else {
            self.errors.push(Error::new(
                ErrorKind::Syntax,
                "expected `contract` or `interface`",
                cur.span(),
            ));
            return None;
        };
        let header = (|| -> Result<(Ident, Vec<Ident>), Error> {
            let name = cur.expect_ident()?;
            let mut implements = Vec::new();
            if cur.eat_ident("implements") {
                loop {
                    implements.push(cur.expect_ident()?);
                    if !cur.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            cur.expect(&Tok::Colon)?;
            cur.expect_end()?;
            Ok((name, implements))
        })();
        let (name, implements) = match header {
            Ok(h) => h,
            Err(e) => {
                self.errors.push(e);
                return None;
            }
        };

        let mut unit = SourceUnit {
            kind,
            name,
            implements,
            fields: Vec::new(),
            resources: Vec::new(),
            specs: SpecSet::default(),
            functions: Vec::new(),
            no_derived_wei: false,
            span: line.span,
        };

        let body_indent = match self.peek_line() {
            Some(l) if l.indent > 0 => l.indent,
            _ => return Some(unit), // empty unit body
        };

        let mut pending_ensures: Vec<Spec> = Vec::new();
        let mut pending_performs: Vec<GhostCmd> = Vec::new();
        let mut pending_payable = false;

        while let Some(l) = self.peek_line() {
            if l.indent == 0 {
                break;
            }
            if l.indent != body_indent {
                self.error_here("inconsistent indentation in unit body");
                self.pos += 1;
                continue;
            }
            let line = self.bump().unwrap().clone();
            let mut cur = Cur::new(&line);
            let res: Result<(), Error> = (|| {
                match line.ann {
                    Some(AnnKind::Segment) => {
                        unit.specs.segment.push(Spec {
                            expr: parse_whole_expr(&mut cur)?,
                            span: line.span,
                        });
                    }
                    Some(AnnKind::Transitive) => {
                        unit.specs.transitive.push(Spec {
                            expr: parse_whole_expr(&mut cur)?,
                            span: line.span,
                        });
                    }
                    Some(AnnKind::FunctionConstraint) => {
                        unit.specs.function_constraints.push(Spec {
                            expr: parse_whole_expr(&mut cur)?,
                            span: line.span,
                        });
                    }
                    Some(AnnKind::Privacy) => {
                        unit.specs.privacy.push(Spec {
                            expr: parse_whole_expr(&mut cur)?,
                            span: line.span,
                        });
                    }
                    Some(AnnKind::Resource) => {
                        let decl = parse_resource_decl(&mut cur, line.span)?;
                        unit.resources.push(decl);
                    }
                    Some(AnnKind::NoDerivedWei) => {
                        unit.no_derived_wei = true;
                    }
                    Some(AnnKind::Ensures) => {
                        pending_ensures.push(Spec {
                            expr: parse_whole_expr(&mut cur)?,
                            span: line.span,
                        });
                    }
                    Some(AnnKind::Performs) => {
                        pending_performs.push(parse_ghost_cmd(&mut cur)?);
                    }
                    Some(AnnKind::StabilityHint) | Some(AnnKind::Ghost) => {
                        return Err(Error::new(
                            ErrorKind::Annotation,
                            "this annotation is only valid inside a function body",
                            line.span,
                        ));
                    }
                    None => {
                        if cur.peek_ident("def") {
                            let f = self.parse_function(
                                &mut cur,
                                line.span,
                                body_indent,
                                std::mem::take(&mut pending_ensures),
                                std::mem::take(&mut pending_performs),
                                pending_payable,
                                unit.kind,
                            )?;
                            pending_payable = false;
                            unit.functions.push(f);
                        } else if cur.eat(&Tok::At) {
                            let deco = cur.expect_ident()?;
                            cur.expect_end()?;
                            if deco.name == "payable" {
                                pending_payable = true;
                            } else {
                                return Err(Error::new(
                                    ErrorKind::Syntax,
                                    format!("unknown decorator `@{}`", deco.name),
                                    deco.span,
                                ));
                            }
                        } else {
                            // field declaration: name: type
                            let name = cur.expect_ident()?;
                            cur.expect(&Tok::Colon)?;
                            let ty = parse_type(&mut cur)?;
                            cur.expect_end()?;
                            unit.fields.push(FieldDecl {
                                name,
                                ty,
                                span: line.span,
                            });
                        }
                    }
                }
                Ok(())
            })();
            if let Err(e) = res {
                self.errors.push(e);
                self.recover_to_indent(body_indent);
            }
        }
        if !pending_ensures.is_empty() || !pending_performs.is_empty() || pending_payable {
            self.errors.push(Error::new(
                ErrorKind::Annotation,
                "dangling function annotation with no following `def`",
                unit.span,
            ));
        }
        Some(unit)
    }

    #[allow(clippy::too_many_arguments)]
    fn parse_function(
        &mut self,
        cur: &mut Cur,
        def_span: Span,
        def_indent: usize,
        ensures: Vec<Spec>,
        performs: Vec<GhostCmd>,
        payable: bool,
        unit_kind: UnitKind,
    ) -> Result<FunctionDef, Error> {
        cur.expect_keyword("def")?;
        let name = cur.expect_ident()?;
        cur.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        if !cur.eat(&Tok::RParen) {
            loop {
                let pname = cur.expect_ident()?;
                cur.expect(&Tok::Colon)?;
                let ty = parse_type(cur)?;
                params.push(Param { name: pname, ty });
                if cur.eat(&Tok::RParen) {
                    break;
                }
                cur.expect(&Tok::Comma)?;
            }
        }
        let ret = if cur.eat(&Tok::Arrow) {
            Some(parse_type(cur)?)
        } else {
            None
        };
        cur.expect(&Tok::Colon)?;
        cur.expect_end()?;

        let body_indent = match self.peek_line() {
            Some(l) if l.indent > def_indent => l.indent,
            _ => {
                return Err(Error::new(
                    ErrorKind::Syntax,
                    "expected an indented function body",
                    def_span,
                ))
            }
        };
        let body = self.parse_block(body_indent)?;
        if unit_kind == UnitKind::Interface {
            let only_pass = body.len() == 1 && matches!(body[0].kind, StmtKind::Pass);
            if !only_pass {
                return Err(Error::new(
                    ErrorKind::Structure,
                    "interface function bodies must be a single `pass`",
                    def_span,
                ));
            }
        }
        Ok(FunctionDef {
            name,
            params,
            ret,
            payable,
            body,
            ensures,
            performs,
            span: def_span,
        })
    }

    fn parse_block(&mut self, indent: usize) -> Result<Vec<Stmt>, Error> {
        let mut stmts = Vec::new();
        while let Some(l) = self.peek_line() {
            if l.indent < indent {
                break;
            }
            if l.indent > indent {
                return Err(Error::new(
                    ErrorKind::Syntax,
                    "unexpected indentation",
                    l.span,
                ));
            }
            let line = self.bump().unwrap().clone();
            let stmt = self.parse_stmt(&line, indent)?;
            stmts.push(stmt);
        }
        Ok(stmts)
    }

    fn parse_stmt(&mut self, line: &Line, indent: usize) -> Result<Stmt, Error> {
        let mut cur = Cur::new(line);
        let span = line.span;
        match line.ann {
            Some(AnnKind::Ghost) => {
                let g = parse_ghost_cmd(&mut cur)?;
                cur.expect_end()?;
                return Ok(Stmt {
                    kind: StmtKind::Ghost(g),
                    span,
                });
            }
            Some(AnnKind::StabilityHint) => {
                let e = parse_whole_expr(&mut cur)?;
                return Ok(Stmt {
                    kind: StmtKind::StabilityHint(e),
                    span,
                });
            }
            Some(_) => {
                return Err(Error::new(
                    ErrorKind::Annotation,
                    "contract-level annotation inside a function body",
                    span,
                ));
            }
            None => {}
        }

        if cur.eat_ident("pass") {
            cur.expect_end()?;
            return Ok(Stmt {
                kind: StmtKind::Pass,
                span,
            });
        }
        if cur.eat_ident("assert") {
            let e = parse_whole_expr(&mut cur)?;
            return Ok(Stmt {
                kind: StmtKind::Assert(e),
                span,
            });
        }
        if cur.eat_ident("return") {
            let value = if cur.at_end() {
                None
            } else {
                Some(parse_whole_expr(&mut cur)?)
            };
            return Ok(Stmt {
                kind: StmtKind::Return(value),
                span,
            });
        }
        if cur.peek_ident("send") && cur.peek2() == Some(&Tok::LParen) {
            cur.next();
            cur.next();
            let to = parse_expr(&mut cur)?;
            cur.expect(&Tok::Comma)?;
            if cur.peek_ident("value") && cur.peek2() == Some(&Tok::Assign) {
                cur.next();
                cur.next();
            }
            let value = parse_expr(&mut cur)?;
            cur.expect(&Tok::RParen)?;
            cur.expect_end()?;
            return Ok(Stmt {
                kind: StmtKind::Send { to, value },
                span,
            });
        }
        if cur.eat_ident("for") {
            let var = cur.expect_ident()?;
            cur.expect_keyword("in")?;
            cur.expect_keyword("range")?;
            cur.expect(&Tok::LParen)?;
            let count = match cur.next() {
                Some((Tok::Int(n), _)) if n >= 0 => n as u64,
                _ => {
                    return Err(Error::new(
                        ErrorKind::Syntax,
                        "`range` expects a non-negative integer literal",
                        span,
                    ))
                }
            };
            cur.expect(&Tok::RParen)?;
            cur.expect(&Tok::Colon)?;
            cur.expect_end()?;
            let body_indent = match self.peek_line() {
                Some(l) if l.indent > indent => l.indent,
                _ => {
                    return Err(Error::new(
                        ErrorKind::Syntax,
                        "expected an indented loop body",
                        span,
                    ))
                }
            };
            let body = self.parse_block(body_indent)?;
            return Ok(Stmt {
                kind: StmtKind::For { var, count, body },
                span,
            });
        }

        // Remaining forms: assignment, local declaration, or a call statement.
        if let Some(call) = try_parse_call_stmt(&mut cur, None)? {
            cur.expect_end()?;
            return Ok(Stmt { kind: call, span });
        }

        // self.f[...] (=|+=|-=) expr
        if cur.peek_ident("self") && cur.peek2() == Some(&Tok::Dot) {
            cur.next();
            cur.next();
            let field = cur.expect_ident()?;
            let mut keys = Vec::new();
            while cur.eat(&Tok::LBracket) {
                keys.push(parse_expr(&mut cur)?);
                cur.expect(&Tok::RBracket)?;
            }
            let op = parse_assign_op(&mut cur)?;
            let value = parse_whole_expr(&mut cur)?;
            return Ok(Stmt {
                kind: StmtKind::Assign {
                    target: LValue::SelfField { field, keys },
                    op,
                    value,
                },
                span,
            });
        }

        // `other.f = e` is a statement shape we reject with a dedicated
        // message: only fields of self are assignable.
        if matches!(cur.peek(), Some(Tok::Ident(_)))
            && cur.peek2() == Some(&Tok::Dot)
            && cur
                .toks
                .iter()
                .skip(cur.i)
                .any(|(t, _)| matches!(t, Tok::Assign | Tok::PlusAssign | Tok::MinusAssign))
        {
            return Err(Error::new(
                ErrorKind::Type,
                "only fields of `self` are assignable",
                span,
            ));
        }

        // name[: type] (=|+=|-=) expr, or name = <call>
        let name = cur.expect_ident()?;
        if cur.eat(&Tok::Colon) {
            let ty = parse_type(&mut cur)?;
            cur.expect(&Tok::Assign)?;
            if let Some(call) = try_parse_call_stmt(&mut cur, Some(name.clone()))? {
                cur.expect_end()?;
                return Ok(Stmt { kind: call, span });
            }
            let value = parse_whole_expr(&mut cur)?;
            return Ok(Stmt {
                kind: StmtKind::LocalDecl {
                    name,
                    ty: Some(ty),
                    value,
                },
                span,
            });
        }
        let op = parse_assign_op(&mut cur)?;
        if op == AssignOp::Set {
            if let Some(call) = try_parse_call_stmt(&mut cur, Some(name.clone()))? {
                cur.expect_end()?;
                return Ok(Stmt { kind: call, span });
            }
        }
        let value = parse_whole_expr(&mut cur)?;
        Ok(Stmt {
            kind: StmtKind::Assign {
                target: LValue::Local(name),
                op,
                value,
            },
            span,
        })
    }
}

fn parse_assign_op(cur: &mut Cur) -> Result<AssignOp, Error> {
    match cur.next() {
        Some((Tok::Assign, _)) => Ok(AssignOp::Set),
        Some((Tok::PlusAssign, _)) => Ok(AssignOp::Add),
        Some((Tok::MinusAssign, _)) => Ok(AssignOp::Sub),
        Some((tok, sp)) => Err(Error::new(
            ErrorKind::Syntax,
            format!("expected an assignment operator, found {}", tok.describe()),
            sp,
        )),
        None => Err(Error::new(
            ErrorKind::Syntax,
            "expected an assignment operator at end of line",
            cur.span(),
        )),
    }
}

/// Try to parse `self.f.fun(args)`, `Iface(e).fun(args)` or `self._f(args)`
/// from the current position. Backtracks and returns Ok(None) when the shape
/// does not match a call statement.
fn try_parse_call_stmt(cur: &mut Cur, result: Option<Ident>) -> Result<Option<StmtKind>, Error> {
    let save = cur.i;
    // self.f.fun(...) | self._f(...)
    if cur.peek_ident("self") && cur.peek2() == Some(&Tok::Dot) {
        cur.next();
        cur.next();
        let first = match cur.next() {
            Some((Tok::Ident(s), sp)) => Ident::new(s, sp),
            _ => {
                cur.i = save;
                return Ok(None);
            }
        };
        if cur.peek() == Some(&Tok::LParen) && first.name.starts_with('_') {
            cur.next();
            let args = parse_call_args(cur)?;
            return Ok(Some(StmtKind::PrivateCall {
                result,
                fun: first,
                args: args.positional,
            }));
        }
        if cur.peek() == Some(&Tok::Dot) {
            cur.next();
            let fun = match cur.next() {
                Some((Tok::Ident(s), sp)) => Ident::new(s, sp),
                _ => {
                    cur.i = save;
                    return Ok(None);
                }
            };
            if cur.eat(&Tok::LParen) {
                let args = parse_call_args(cur)?;
                return Ok(Some(StmtKind::Call {
                    result,
                    target: CallTarget::SelfField { field: first, fun },
                    args: args.positional,
                    value: args.value,
                }));
            }
        }
        cur.i = save;
        return Ok(None);
    }
    // Iface(e).fun(...)
    if let Some(Tok::Ident(name)) = cur.peek() {
        let name = name.clone();
        if cur.peek2() == Some(&Tok::LParen) && !is_expr_keyword(&name) {
            // Look ahead to `).ident(` to disambiguate from a parenthesized
            // expression; scan for the matching close paren.
            let mut depth = 0usize;
            let mut j = cur.i + 1;
            let mut close = None;
            while j < cur.toks.len() {
                match cur.toks[j].0 {
                    Tok::LParen => depth += 1,
                    Tok::RParen => {
                        depth -= 1;
                        if depth == 0 {
                            close = Some(j);
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            if let Some(close) = close {
                let looks_like_call = matches!(cur.toks.get(close + 1).map(|(t, _)| t), Some(Tok::Dot))
                    && matches!(cur.toks.get(close + 2).map(|(t, _)| t), Some(Tok::Ident(_)))
                    && matches!(cur.toks.get(close + 3).map(|(t, _)| t), Some(Tok::LParen));
                if looks_like_call {
                    let iface = match cur.next() {
                        Some((Tok::Ident(s), sp)) => Ident::new(s, sp),
                        _ => unreachable!(),
                    };
                    cur.expect(&Tok::LParen)?;
                    let addr = parse_expr(cur)?;
                    cur.expect(&Tok::RParen)?;
                    cur.expect(&Tok::Dot)?;
                    let fun = cur.expect_ident()?;
                    cur.expect(&Tok::LParen)?;
                    let args = parse_call_args(cur)?;
                    return Ok(Some(StmtKind::Call {
                        result,
                        target: CallTarget::Cast { iface, addr, fun },
                        args: args.positional,
                        value: args.value,
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn is_expr_keyword(name: &str) -> bool {
    matches!(
        name,
        "not"
            | "and"
            | "or"
            | "if"
            | "else"
            | "old"
            | "old_pre"
            | "old_last"
            | "old_call"
            | "sum"
            | "trusted"
            | "forall"
            | "send"
    )
}

struct CallArgs {
    positional: Vec<Expr>,
    value: Option<Expr>,
}

/// Arguments of an external call; the opening paren is already consumed and
/// the closing paren is consumed here. Only `value=` is a valid keyword.
fn parse_call_args(cur: &mut Cur) -> Result<CallArgs, Error> {
    let mut args = CallArgs {
        positional: Vec::new(),
        value: None,
    };
    if cur.eat(&Tok::RParen) {
        return Ok(args);
    }
    loop {
        if cur.peek_ident("value") && cur.peek2() == Some(&Tok::Assign) {
            cur.next();
            cur.next();
            args.value = Some(parse_expr(cur)?);
        } else {
            args.positional.push(parse_expr(cur)?);
        }
        if cur.eat(&Tok::RParen) {
            break;
        }
        cur.expect(&Tok::Comma)?;
    }
    Ok(args)
}

fn parse_type(cur: &mut Cur) -> Result<Type, Error> {
    let name = cur.expect_ident()?;
    let ty = match name.name.as_str() {
        "bool" => Type::Bool,
        "int" | "int128" | "int256" => Type::Int,
        "uint" | "uint256" | "wei_value" | "timestamp" => Type::Uint,
        "address" => Type::Address,
        "map" => {
            cur.expect(&Tok::LParen)?;
            let k = parse_type(cur)?;
            cur.expect(&Tok::Comma)?;
            let v = parse_type(cur)?;
            cur.expect(&Tok::RParen)?;
            Type::Map(Box::new(k), Box::new(v))
        }
        other => Type::Interface(other.to_string()),
    };
    Ok(ty)
}

fn parse_resource_decl(cur: &mut Cur, span: Span) -> Result<ResourceDecl, Error> {
    let name = cur.expect_ident()?;
    if cur.eat(&Tok::LParen) {
        cur.expect(&Tok::RParen)?;
    }
    let derived_from = if cur.eat_ident("derived") {
        cur.expect_keyword("from")?;
        Some(parse_resource_ref(cur)?)
    } else {
        None
    };
    cur.expect_end()?;
    Ok(ResourceDecl {
        name,
        derived_from,
        span,
    })
}

fn parse_resource_ref(cur: &mut Cur) -> Result<ResourceRef, Error> {
    let name = cur.expect_ident()?;
    match name.name.as_str() {
        "wei" => Ok(ResourceRef::Wei),
        "creator" => {
            cur.expect(&Tok::LParen)?;
            let inner = parse_resource_ref(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(ResourceRef::Creator(Box::new(inner)))
        }
        other => Ok(ResourceRef::Named(other.to_string())),
    }
}

/// `[R]` or `[R1 <-> R2]` after a ghost command keyword.
fn parse_resource_brackets(cur: &mut Cur) -> Result<(ResourceRef, Option<ResourceRef>), Error> {
    cur.expect(&Tok::LBracket)?;
    let r1 = parse_resource_ref(cur)?;
    let r2 = if cur.eat(&Tok::Exchange) {
        Some(parse_resource_ref(cur)?)
    } else {
        None
    };
    cur.expect(&Tok::RBracket)?;
    Ok((r1, r2))
}

struct GhostArgs {
    positional: Vec<Expr>,
    to: Option<Expr>,
    from: Option<Expr>,
    actor: Option<Expr>,
    times: Option<Expr>,
}

fn parse_ghost_args(cur: &mut Cur) -> Result<GhostArgs, Error> {
    cur.expect(&Tok::LParen)?;
    let mut out = GhostArgs {
        positional: Vec::new(),
        to: None,
        from: None,
        actor: None,
        times: None,
    };
    if cur.eat(&Tok::RParen) {
        return Ok(out);
    }
    loop {
        let kw = match cur.peek() {
            Some(Tok::Ident(s))
                if matches!(s.as_str(), "to" | "from" | "actor" | "times")
                    && cur.peek2() == Some(&Tok::Assign) =>
            {
                Some(s.clone())
            }
            _ => None,
        };
        if let Some(kw) = kw {
            cur.next();
            cur.next();
            let e = parse_expr(cur)?;
            let slot = match kw.as_str() {
                "to" => &mut out.to,
                "from" => &mut out.from,
                "actor" => &mut out.actor,
                "times" => &mut out.times,
                _ => unreachable!(),
            };
            if slot.is_some() {
                return Err(Error::new(
                    ErrorKind::Annotation,
                    format!("duplicate keyword argument `{kw}`"),
                    cur.span(),
                ));
            }
            *slot = Some(e);
        } else {
            out.positional.push(parse_expr(cur)?);
        }
        if cur.eat(&Tok::RParen) {
            break;
        }
        cur.expect(&Tok::Comma)?;
    }
    Ok(out)
}

/// Ghost commands and effect templates share one grammar.
fn parse_ghost_cmd(cur: &mut Cur) -> Result<GhostCmd, Error> {
    let kw = cur.expect_ident()?;
    let span = kw.span;
    let err = |msg: &str| Error::new(ErrorKind::Annotation, msg.to_string(), span);
    match kw.name.as_str() {
        "create" => {
            let (res, r2) = parse_resource_brackets(cur)?;
            if r2.is_some() {
                return Err(err("`create` takes a single resource"));
            }
            let mut a = parse_ghost_args(cur)?;
            if a.positional.len() != 1 {
                return Err(err("`create[R](amount, ...)` takes one positional argument"));
            }
            Ok(GhostCmd::Create {
                res,
                amount: a.positional.remove(0),
                to: a.to,
                actor: a.actor,
            })
        }
        "destroy" => {
            let (res, r2) = parse_resource_brackets(cur)?;
            if r2.is_some() {
                return Err(err("`destroy` takes a single resource"));
            }
            let mut a = parse_ghost_args(cur)?;
            if a.positional.len() != 1 {
                return Err(err("`destroy[R](amount, ...)` takes one positional argument"));
            }
            Ok(GhostCmd::Destroy {
                res,
                amount: a.positional.remove(0),
                actor: a.actor,
            })
        }
        "transfer" => {
            let (res, r2) = parse_resource_brackets(cur)?;
            if r2.is_some() {
                return Err(err("`transfer` takes a single resource"));
            }
            let mut a = parse_ghost_args(cur)?;
            let (amount, to) = match (a.positional.len(), a.to.take()) {
                (1, Some(to)) => (a.positional.remove(0), to),
                (2, None) => {
                    let amount = a.positional.remove(0);
                    let to = a.positional.remove(0);
                    (amount, to)
                }
                _ => return Err(err("`transfer[R]` expects (amount, to=...)")),
            };
            Ok(GhostCmd::Transfer {
                res,
                amount,
                to,
                from: a.from,
            })
        }
        "offer" | "revoke" => {
            let (res1, res2) = parse_resource_brackets(cur)?;
            let res2 = res2.ok_or_else(|| err("expected `[R1 <-> R2]`"))?;
            let mut a = parse_ghost_args(cur)?;
            // Either (a1, a2, to=..., [from=...], [times=...]) or the
            // positional form (a1, a2, from, to[, times]).
            let (a1, a2, from, to, times) = match a.positional.len() {
                2 => {
                    let a1 = a.positional.remove(0);
                    let a2 = a.positional.remove(0);
                    let to = a.to.take().ok_or_else(|| err("missing `to=`"))?;
                    (a1, a2, a.from.take(), to, a.times.take())
                }
                4 | 5 => {
                    let a1 = a.positional.remove(0);
                    let a2 = a.positional.remove(0);
                    let from = a.positional.remove(0);
                    let to = a.positional.remove(0);
                    let times = if a.positional.is_empty() {
                        a.times.take()
                    } else {
                        Some(a.positional.remove(0))
                    };
                    (a1, a2, Some(from), to, times)
                }
                _ => return Err(err("expected (a1, a2, to=..., times=...)")),
            };
            let times = times.unwrap_or(Expr::new(ExprKind::IntLit(1), span));
            let g = if kw.name == "offer" {
                GhostCmd::Offer {
                    res1,
                    res2,
                    a1,
                    a2,
                    to,
                    from,
                    times,
                }
            } else {
                GhostCmd::Revoke {
                    res1,
                    res2,
                    a1,
                    a2,
                    to,
                    from,
                    times,
                }
            };
            Ok(g)
        }
        "exchange" => {
            let (res1, res2) = parse_resource_brackets(cur)?;
            let res2 = res2.ok_or_else(|| err("expected `[R1 <-> R2]`"))?;
            let mut a = parse_ghost_args(cur)?;
            if a.positional.len() != 4 {
                return Err(err("`exchange[R1 <-> R2]` expects (a1, a2, from, to)"));
            }
            let a1 = a.positional.remove(0);
            let a2 = a.positional.remove(0);
            let from = a.positional.remove(0);
            let to = a.positional.remove(0);
            let times = a
                .times
                .take()
                .unwrap_or(Expr::new(ExprKind::IntLit(1), span));
            Ok(GhostCmd::Exchange {
                res1,
                res2,
                a1,
                a2,
                from,
                to,
                times,
            })
        }
        "trust" => {
            let mut a = parse_ghost_args(cur)?;
            if a.positional.len() != 2 {
                return Err(err("`trust` expects (address, bool)"));
            }
            let who = a.positional.remove(0);
            let value = a.positional.remove(0);
            Ok(GhostCmd::Trust { who, value })
        }
        other => Err(Error::new(
            ErrorKind::Annotation,
            format!("unknown ghost command `{other}`"),
            span,
        )),
    }
}

fn parse_whole_expr(cur: &mut Cur) -> Result<Expr, Error> {
    let e = parse_expr(cur)?;
    cur.expect_end()?;
    Ok(e)
}

// Precedence: implies < ternary < or < and < not < comparison < additive <
// multiplicative < unary minus < postfix < atom.
fn parse_expr(cur: &mut Cur) -> Result<Expr, Error> {
    parse_implies(cur)
}

fn parse_implies(cur: &mut Cur) -> Result<Expr, Error> {
    let lhs = parse_ternary(cur)?;
    if cur.eat(&Tok::Implies) {
        let rhs = parse_implies(cur)?;
        let span = lhs.span.to(rhs.span);
        return Ok(Expr::new(
            ExprKind::Binary {
                op: BinOp::Implies,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ));
    }
    Ok(lhs)
}

fn parse_ternary(cur: &mut Cur) -> Result<Expr, Error> {
    let then = parse_or(cur)?;
    if cur.eat_ident("if") {
        let cond = parse_or(cur)?;
        cur.expect_keyword("else")?;
        let els = parse_ternary(cur)?;
        let span = then.span.to(els.span);
        return Ok(Expr::new(
            ExprKind::Cond {
                cond: Box::new(cond),
                then: Box::new(then),
                els: Box::new(els),
            },
            span,
        ));
    }
    Ok(then)
}

fn parse_or(cur: &mut Cur) -> Result<Expr, Error> {
    let mut lhs = parse_and(cur)?;
    while cur.eat_ident("or") {
        let rhs = parse_and(cur)?;
        let span = lhs.span.to(rhs.span);
        lhs = Expr::new(
            ExprKind::Binary {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        );
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cur) -> Result<Expr, Error> {
    let mut lhs = parse_not(cur)?;
    while cur.eat_ident("and") {
        let rhs = parse_not(cur)?;
        let span = lhs.span.to(rhs.span);
        lhs = Expr::new(
            ExprKind::Binary {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        );
    }
    Ok(lhs)
}

fn parse_not(cur: &mut Cur) -> Result<Expr, Error> {
    if cur.peek_ident("not") {
        let sp = cur.span();
        cur.next();
        let e = parse_not(cur)?;
        let span = sp.to(e.span);
        return Ok(Expr::new(
            ExprKind::Unary {
                op: UnOp::Not,
                expr: Box::new(e),
            },
            span,
        ));
    }
    parse_comparison(cur)
}

fn parse_comparison(cur: &mut Cur) -> Result<Expr, Error> {
    let lhs = parse_additive(cur)?;
    let op = match cur.peek() {
        Some(Tok::EqEq) => Some(BinOp::Eq),
        Some(Tok::NotEq) => Some(BinOp::Ne),
        Some(Tok::Lt) => Some(BinOp::Lt),
        Some(Tok::Le) => Some(BinOp::Le),
        Some(Tok::Gt) => Some(BinOp::Gt),
        Some(Tok::Ge) => Some(BinOp::Ge),
        _ => None,
    };
    if let Some(op) = op {
        cur.next();
        let rhs = parse_additive(cur)?;
        let span = lhs.span.to(rhs.span);
        return Ok(Expr::new(
            ExprKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ));
    }
    Ok(lhs)
}

fn parse_additive(cur: &mut Cur) -> Result<Expr, Error> {
    let mut lhs = parse_multiplicative(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => BinOp::Add,
            Some(Tok::Minus) => BinOp::Sub,
            _ => break,
        };
        cur.next();
        let rhs = parse_multiplicative(cur)?;
        let span = lhs.span.to(rhs.span);
        lhs = Expr::new(
            ExprKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        );
    }
    Ok(lhs)
}

fn parse_multiplicative(cur: &mut Cur) -> Result<Expr, Error> {
    let mut lhs = parse_unary(cur)?;
    loop {
        let op = match cur.peek() {
            Some(Tok::Star) => BinOp::Mul,
            Some(Tok::Slash) => BinOp::Div,
            Some(Tok::Percent) => BinOp::Mod,
            _ => break,
        };
        cur.next();
        let rhs = parse_unary(cur)?;
        let span = lhs.span.to(rhs.span);
        lhs = Expr::new(
            ExprKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        );
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cur) -> Result<Expr, Error> {
    if cur.peek() == Some(&Tok::Minus) {
        let sp = cur.span();
        cur.next();
        let e = parse_unary(cur)?;
        let span = sp.to(e.span);
        return Ok(Expr::new(
            ExprKind::Unary {
                op: UnOp::Neg,
                expr: Box::new(e),
            },
            span,
        ));
    }
    parse_postfix(cur)
}

fn parse_postfix(cur: &mut Cur) -> Result<Expr, Error> {
    let mut e = parse_atom(cur)?;
    loop {
        if cur.peek() == Some(&Tok::Dot) {
            cur.next();
            let field = cur.expect_ident()?;
            let span = e.span.to(field.span);
            if field.name == "balance" {
                e = Expr::new(ExprKind::Balance(Box::new(e)), span);
            } else if let ExprKind::SelfAddr = e.kind {
                e = Expr::new(
                    ExprKind::SelfField {
                        field,
                        keys: Vec::new(),
                    },
                    span,
                );
            } else {
                e = Expr::new(
                    ExprKind::ExtField {
                        target: Box::new(e),
                        field,
                        keys: Vec::new(),
                    },
                    span,
                );
            }
            continue;
        }
        if cur.peek() == Some(&Tok::LBracket) {
            cur.next();
            let key = parse_expr(cur)?;
            let close = cur.expect(&Tok::RBracket)?;
            let span = e.span.to(close);
            match &mut e.kind {
                ExprKind::SelfField { keys, .. }
                | ExprKind::ExtField { keys, .. } => {
                    keys.push(key);
                    e.span = span;
                }
                ExprKind::Allocated { owner, .. } => {
                    if owner.is_some() {
                        return Err(Error::new(
                            ErrorKind::Syntax,
                            "allocated[R][owner] takes a single owner index",
                            span,
                        ));
                    }
                    *owner = Some(Box::new(key));
                    e.span = span;
                }
                _ => {
                    return Err(Error::new(
                        ErrorKind::Syntax,
                        "this expression cannot be indexed",
                        span,
                    ));
                }
            }
            continue;
        }
        break;
    }
    Ok(e)
}

fn parse_atom(cur: &mut Cur) -> Result<Expr, Error> {
    let sp = cur.span();
    match cur.next() {
        Some((Tok::Int(n), sp)) => Ok(Expr::new(ExprKind::IntLit(n), sp)),
        Some((Tok::LParen, _)) => {
            let e = parse_expr(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        Some((Tok::Ident(name), sp)) => parse_ident_atom(cur, name, sp),
        Some((tok, sp)) => Err(Error::new(
            ErrorKind::Syntax,
            format!("expected an expression, found {}", tok.describe()),
            sp,
        )),
        None => Err(Error::new(
            ErrorKind::Syntax,
            "expected an expression at end of line",
            sp,
        )),
    }
}

fn parse_ident_atom(cur: &mut Cur, name: String, sp: Span) -> Result<Expr, Error> {
    match name.as_str() {
        "True" => Ok(Expr::new(ExprKind::BoolLit(true), sp)),
        "False" => Ok(Expr::new(ExprKind::BoolLit(false), sp)),
        "self" => Ok(Expr::new(ExprKind::SelfAddr, sp)),
        "result" => Ok(Expr::new(ExprKind::Result, sp)),
        "msg" => {
            cur.expect(&Tok::Dot)?;
            let f = cur.expect_ident()?;
            let span = sp.to(f.span);
            match f.name.as_str() {
                "sender" => Ok(Expr::new(ExprKind::MsgSender, span)),
                "value" => Ok(Expr::new(ExprKind::MsgValue, span)),
                _ => Err(Error::new(
                    ErrorKind::Syntax,
                    "unknown `msg` field (expected sender or value)",
                    span,
                )),
            }
        }
        "block" => {
            cur.expect(&Tok::Dot)?;
            let f = cur.expect_ident()?;
            let span = sp.to(f.span);
            match f.name.as_str() {
                "timestamp" => Ok(Expr::new(ExprKind::BlockTimestamp, span)),
                _ => Err(Error::new(
                    ErrorKind::Syntax,
                    "unknown `block` field (expected timestamp)",
                    span,
                )),
            }
        }
        "old" | "old_pre" | "old_last" | "old_call" => {
            let label = match name.as_str() {
                "old" => None,
                "old_pre" => Some(OldLabel::Pre),
                "old_last" => Some(OldLabel::Last),
                "old_call" => Some(OldLabel::Call),
                _ => unreachable!(),
            };
            cur.expect(&Tok::LParen)?;
            let e = parse_expr(cur)?;
            let close = cur.expect(&Tok::RParen)?;
            Ok(Expr::new(
                ExprKind::Old {
                    label,
                    expr: Box::new(e),
                },
                sp.to(close),
            ))
        }
        "sum" => {
            cur.expect(&Tok::LParen)?;
            let e = parse_expr(cur)?;
            let close = cur.expect(&Tok::RParen)?;
            Ok(Expr::new(ExprKind::Sum(Box::new(e)), sp.to(close)))
        }
        "allocated" => {
            cur.expect(&Tok::LBracket)?;
            let res = parse_resource_ref(cur)?;
            let close = cur.expect(&Tok::RBracket)?;
            Ok(Expr::new(
                ExprKind::Allocated { res, owner: None },
                sp.to(close),
            ))
        }
        "offered" => {
            cur.expect(&Tok::LBracket)?;
            let res1 = parse_resource_ref(cur)?;
            cur.expect(&Tok::Exchange)?;
            let res2 = parse_resource_ref(cur)?;
            cur.expect(&Tok::RBracket)?;
            cur.expect(&Tok::LParen)?;
            let a1 = parse_expr(cur)?;
            cur.expect(&Tok::Comma)?;
            let a2 = parse_expr(cur)?;
            cur.expect(&Tok::Comma)?;
            let from = parse_expr(cur)?;
            cur.expect(&Tok::Comma)?;
            let to = parse_expr(cur)?;
            let close = cur.expect(&Tok::RParen)?;
            Ok(Expr::new(
                ExprKind::Offered {
                    res1,
                    res2,
                    a1: Box::new(a1),
                    a2: Box::new(a2),
                    from: Box::new(from),
                    to: Box::new(to),
                },
                sp.to(close),
            ))
        }
        "trusted" => {
            cur.expect(&Tok::LParen)?;
            let who = parse_expr(cur)?;
            cur.expect(&Tok::Comma)?;
            let by = parse_expr(cur)?;
            let close = cur.expect(&Tok::RParen)?;
            Ok(Expr::new(
                ExprKind::Trusted {
                    who: Box::new(who),
                    by: Box::new(by),
                },
                sp.to(close),
            ))
        }
        "forall" => {
            cur.expect(&Tok::LParen)?;
            cur.expect(&Tok::LBrace)?;
            let mut vars = Vec::new();
            loop {
                let v = cur.expect_ident()?;
                cur.expect(&Tok::Colon)?;
                let ty = parse_type(cur)?;
                vars.push((v, ty));
                if cur.eat(&Tok::RBrace) {
                    break;
                }
                cur.expect(&Tok::Comma)?;
            }
            cur.expect(&Tok::Comma)?;
            let body = parse_expr(cur)?;
            let close = cur.expect(&Tok::RParen)?;
            Ok(Expr::new(
                ExprKind::Forall {
                    vars,
                    body: Box::new(body),
                },
                sp.to(close),
            ))
        }
        _ => Ok(Expr::new(ExprKind::Local(Ident::new(name, sp)), sp)),
    }
}
