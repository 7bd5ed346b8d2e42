//! Bidirectional normalizer between Prolog-style logical forms (the Jobs
//! query syntax) and [`LfTree`].
//!
//! `answer(company(J,'microsoft'),job(J))` becomes the bracketed tree
//! `(answer (company J 'microsoft') (job J))`: a functor application turns
//! into a subtree headed by the functor leaf, a bare parenthesized group
//! (as in `not((goal,goal)))`) into a subtree whose first child is itself a
//! subtree, and argument commas are dropped. The mapping is bijective on
//! that grammar, so rendering recovers the original byte-for-byte and
//! exact-match comparison can happen on either side.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lftree::{LfNode, LfTree};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Comma,
    Atom(String),
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '(' => {
                tokens.push(Tok::Open);
                i += 1;
            }
            ')' => {
                tokens.push(Tok::Close);
                i += 1;
            }
            ',' => {
                tokens.push(Tok::Comma);
                i += 1;
            }
            '\'' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] as char != '\'' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(Error::Parse {
                        position: start,
                        message: "unterminated quoted constant".into(),
                    });
                }
                i += 1;
                tokens.push(Tok::Atom(s[start..i].to_string()));
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_whitespace() || matches!(c, '(' | ')' | ',' | '\'') {
                        break;
                    }
                    i += 1;
                }
                tokens.push(Tok::Atom(s[start..i].to_string()));
            }
        }
    }
    Ok(tokens)
}

struct Cursor {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next() {
            Some(Tok::Close) => Ok(()),
            other => Err(Error::Parse {
                position: self.pos,
                message: format!("expected ')', got {other:?}"),
            }),
        }
    }

    fn term(&mut self) -> Result<LfNode> {
        match self.next() {
            Some(Tok::Atom(atom)) => {
                if self.peek() == Some(&Tok::Open) {
                    self.next();
                    let mut children = alloc::vec![LfNode::Leaf(atom)];
                    if self.peek() == Some(&Tok::Close) {
                        self.next();
                        return Ok(LfNode::Subtree(children));
                    }
                    children.extend(self.term_list()?);
                    self.expect_close()?;
                    Ok(LfNode::Subtree(children))
                } else {
                    Ok(LfNode::Leaf(atom))
                }
            }
            Some(Tok::Open) => {
                let children = self.term_list()?;
                self.expect_close()?;
                Ok(LfNode::Subtree(children))
            }
            other => Err(Error::Parse {
                position: self.pos,
                message: format!("expected term, got {other:?}"),
            }),
        }
    }

    fn term_list(&mut self) -> Result<Vec<LfNode>> {
        let mut items = alloc::vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.next();
            items.push(self.term()?);
        }
        Ok(items)
    }
}

/// Parses a Prolog-style logical form into a tree. The top level may be a
/// comma-separated conjunction.
pub fn parse_prolog(s: &str) -> Result<LfTree> {
    let tokens = lex(s)?;
    if tokens.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty logical form".into(),
        });
    }
    let mut cursor = Cursor { tokens, pos: 0 };
    let root_children = cursor.term_list()?;
    if cursor.pos != cursor.tokens.len() {
        return Err(Error::Parse {
            position: cursor.pos,
            message: "trailing tokens after logical form".into(),
        });
    }
    Ok(LfTree { root_children })
}

/// Renders a tree back to Prolog syntax; inverse of [`parse_prolog`] on its
/// image. A subtree headed by a leaf renders as a functor application, any
/// other subtree as a parenthesized group; arguments join with bare commas.
pub fn render_prolog(tree: &LfTree) -> Result<String> {
    fn node(n: &LfNode, out: &mut String) -> Result<()> {
        match n {
            LfNode::Leaf(tok) => out.push_str(tok),
            LfNode::Subtree(children) => match children.split_first() {
                None => {
                    return Err(Error::Structure(
                        "cannot render empty subtree as Prolog".into(),
                    ))
                }
                Some((LfNode::Leaf(head), args)) => {
                    out.push_str(head);
                    out.push('(');
                    for (i, arg) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        node(arg, out)?;
                    }
                    out.push(')');
                }
                Some((first @ LfNode::Subtree(_), rest)) => {
                    out.push('(');
                    node(first, out)?;
                    for arg in rest {
                        out.push(',');
                        node(arg, out)?;
                    }
                    out.push(')');
                }
            },
        }
        Ok(())
    }
    let mut out = String::new();
    for (i, child) in tree.root_children.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        node(child, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_jobs_style_queries() {
        for s in [
            "answer(company(J,'microsoft'),job(J),not((req_deg(J,'bscs'))))",
            "job(ANS),salary_greater_than(ANS,40000,year)",
            "answer(req_exp(J),language(J,'c++'))",
            "answer(loc(J,'austin'),(job(J),title(J,'engineer')))",
        ] {
            let t = parse_prolog(s).unwrap();
            assert_eq!(render_prolog(&t).unwrap(), s);
            // Bijective through the bracketed side as well.
            let via_sexpr = LfTree::parse(&t.serialize()).unwrap();
            assert_eq!(via_sexpr, t);
        }
    }

    #[test]
    fn normalized_shape_matches_bracketed_form() {
        let t = parse_prolog("answer(company(J,'microsoft'),job(J))").unwrap();
        assert_eq!(t.serialize(), "(answer (company J 'microsoft') (job J))");
    }

    #[test]
    fn bare_group_keeps_subtree_first_child() {
        let t = parse_prolog("not((a(X),b(X)))").unwrap();
        match &t.root_children[0] {
            LfNode::Subtree(children) => {
                assert_eq!(children[0], LfNode::Leaf("not".into()));
                match &children[1] {
                    LfNode::Subtree(group) => {
                        assert!(matches!(group[0], LfNode::Subtree(_)));
                        assert_eq!(group.len(), 2);
                    }
                    other => panic!("expected group, got {other:?}"),
                }
            }
            other => panic!("expected application, got {other:?}"),
        }
        assert_eq!(render_prolog(&t).unwrap(), "not((a(X),b(X)))");
    }

    #[test]
    fn whitespace_is_normalized_away() {
        let t = parse_prolog("job(ANS), salary_greater_than(ANS, 40000, year)").unwrap();
        assert_eq!(
            render_prolog(&t).unwrap(),
            "job(ANS),salary_greater_than(ANS,40000,year)"
        );
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_prolog("").is_err());
        assert!(parse_prolog("f(a,").is_err());
        assert!(parse_prolog("f(a))").is_err());
        assert!(parse_prolog("f 'oops").is_err());
    }

    #[test]
    fn nullary_application_round_trips() {
        let t = parse_prolog("f()").unwrap();
        assert_eq!(
            t.root_children[0],
            LfNode::Subtree(alloc::vec![LfNode::Leaf("f".into())])
        );
        assert_eq!(render_prolog(&t).unwrap(), "f()");
    }
}
