//! Constituency trees: s-expression reading and writing, binarization, and a
//! right-branching fallback for text that has no parser output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A constituency parse tree.
///
/// Freshly parsed trees keep their n-ary shape. After [`ParseTree::binarize`]
/// every `Node` has exactly two children and every token sits in a `Leaf`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseTree {
    Leaf {
        /// Pre-terminal tag, `None` for a bare atom.
        label: Option<String>,
        token: String,
    },
    Node {
        label: String,
        children: Vec<ParseTree>,
    },
}

impl ParseTree {
    pub fn leaf(token: impl Into<String>) -> Self {
        ParseTree::Leaf {
            label: None,
            token: token.into(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree::Node {
            label: label.into(),
            children,
        }
    }

    /// Read a single s-expression such as `(S (NP (DT the) (NN deal)) (VP closes))`.
    /// A node whose only child is a bare token, like `(DT the)`, becomes a
    /// tagged [`ParseTree::Leaf`].
    pub fn parse(sexpr: &str) -> Result<ParseTree> {
        let toks = lex(sexpr)?;
        let mut pos = 0;
        let tree = parse_node(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(Error::Tree(format!(
                "trailing input after position {pos} of {}",
                toks.len()
            )));
        }
        Ok(tree)
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ParseTree::Leaf { label, .. } => label.as_deref(),
            ParseTree::Node { label, .. } => Some(label),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf { .. })
    }

    /// Tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens(&self, out: &mut Vec<String>) {
        match self {
            ParseTree::Leaf { token, .. } => out.push(token.clone()),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ParseTree::Leaf { .. } => 1,
            ParseTree::Node { children, .. } => children.iter().map(ParseTree::leaf_count).sum(),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            ParseTree::Leaf { .. } => 0,
            ParseTree::Node { children, .. } => {
                1 + children
                    .iter()
                    .map(ParseTree::internal_count)
                    .sum::<usize>()
            }
        }
    }

    pub fn is_binary(&self) -> bool {
        match self {
            ParseTree::Leaf { .. } => true,
            ParseTree::Node { children, .. } => {
                children.len() == 2 && children.iter().all(ParseTree::is_binary)
            }
        }
    }

    /// Convert to a strictly binary tree with the same leaf order.
    ///
    /// Nodes with more than two children are folded left, introducing
    /// `@<label>` nodes: `(S a b c)` becomes `(S (@S a b) c)`. Unary chains
    /// collapse into their lowest node with the labels joined by `|`, so
    /// `(A (B x))` becomes the leaf `(A|B x)`.
    pub fn binarize(&self) -> Result<ParseTree> {
        let n = self.leaf_count();
        if n < 2 {
            return Err(Error::Tree(format!(
                "cannot binarize a tree with {n} leaf; at least 2 required"
            )));
        }
        Ok(binarize_rec(self, None))
    }

    /// Right-branching binary tree over `tokens`, every internal label `X`.
    ///
    /// ```
    /// use taboo_core::corpus::ParseTree;
    /// let t = ParseTree::right_branching(&["a", "b", "c"]).unwrap();
    /// assert_eq!(t.to_string(), "(X a (X b c))");
    /// ```
    pub fn right_branching<S: AsRef<str>>(tokens: &[S]) -> Result<ParseTree> {
        if tokens.len() < 2 {
            return Err(Error::Tree(format!(
                "right-branching tree needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut iter = tokens.iter().rev();
        let last = ParseTree::leaf(iter.next().unwrap().as_ref());
        Ok(iter.fold(last, |acc, tok| {
            ParseTree::node("X", vec![ParseTree::leaf(tok.as_ref()), acc])
        }))
    }
}

fn binarize_rec(tree: &ParseTree, prefix: Option<String>) -> ParseTree {
    let join = |inner: &str| match &prefix {
        Some(p) => format!("{p}|{inner}"),
        None => inner.to_string(),
    };
    match tree {
        ParseTree::Leaf { label, token } => {
            let label = match (&prefix, label) {
                (None, l) => l.clone(),
                (Some(p), None) => Some(p.clone()),
                (Some(_), Some(l)) => Some(join(l)),
            };
            ParseTree::Leaf {
                label,
                token: token.clone(),
            }
        }
        ParseTree::Node { label, children } => {
            let label = join(label);
            match children.len() {
                0 => unreachable!("parser rejects empty nodes"),
                1 => binarize_rec(&children[0], Some(label)),
                2 => ParseTree::Node {
                    children: children.iter().map(|c| binarize_rec(c, None)).collect(),
                    label,
                },
                _ => {
                    let synthetic = format!("@{label}");
                    let mut bin = children.iter().map(|c| binarize_rec(c, None));
                    let first = bin.next().unwrap();
                    let mut rest: Vec<ParseTree> = bin.collect();
                    let last = rest.pop().unwrap();
                    let folded = rest.into_iter().fold(first, |acc, c| {
                        ParseTree::node(synthetic.clone(), vec![acc, c])
                    });
                    ParseTree::node(label, vec![folded, last])
                }
            }
        }
    }
}

pub(crate) fn escape_token(tok: &str) -> String {
    tok.replace('(', "-LRB-").replace(')', "-RRB-")
}

pub(crate) fn unescape_token(tok: &str) -> String {
    tok.replace("-LRB-", "(").replace("-RRB-", ")")
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf { label: None, token } => f.write_str(&escape_token(token)),
            ParseTree::Leaf {
                label: Some(l),
                token,
            } => write!(f, "({l} {})", escape_token(token)),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, PartialEq)]
enum Lex<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(s: &str) -> Result<Vec<Lex<'_>>> {
    let mut out = Vec::new();
    let mut depth: i64 = 0;
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | ')' => {
                if let Some(st) = start.take() {
                    out.push(Lex::Atom(&s[st..i]));
                }
                if ch == '(' {
                    depth += 1;
                    out.push(Lex::Open);
                } else {
                    depth -= 1;
                    if depth < 0 {
                        return Err(Error::Tree(format!("unbalanced ')' at byte {i}")));
                    }
                    out.push(Lex::Close);
                }
            }
            c if c.is_whitespace() => {
                if let Some(st) = start.take() {
                    out.push(Lex::Atom(&s[st..i]));
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(st) = start {
        out.push(Lex::Atom(&s[st..]));
    }
    if depth != 0 {
        return Err(Error::Tree(format!(
            "unbalanced parentheses: {depth} unclosed"
        )));
    }
    Ok(out)
}

fn parse_node(toks: &[Lex<'_>], pos: &mut usize) -> Result<ParseTree> {
    match toks.get(*pos) {
        Some(Lex::Open) => {}
        Some(Lex::Atom(a)) => {
            return Err(Error::Tree(format!("expected '(' but found atom {a:?}")));
        }
        Some(Lex::Close) => return Err(Error::Tree("unexpected ')'".into())),
        None => return Err(Error::Tree("empty input".into())),
    }
    *pos += 1;
    let label = match toks.get(*pos) {
        Some(Lex::Atom(a)) => {
            *pos += 1;
            (*a).to_string()
        }
        Some(Lex::Close) => return Err(Error::Tree("empty node '()'".into())),
        _ => return Err(Error::Tree("node without a label".into())),
    };
    let mut children = Vec::new();
    loop {
        match toks.get(*pos) {
            Some(Lex::Close) => {
                *pos += 1;
                break;
            }
            Some(Lex::Open) => children.push(parse_node(toks, pos)?),
            Some(Lex::Atom(a)) => {
                children.push(ParseTree::leaf(unescape_token(a)));
                *pos += 1;
            }
            None => return Err(Error::Tree("unexpected end of input".into())),
        }
    }
    if children.is_empty() {
        return Err(Error::Tree(format!("node {label:?} has no children")));
    }
    if let [ParseTree::Leaf { label: None, token }] = children.as_mut_slice() {
        return Ok(ParseTree::Leaf {
            label: Some(label),
            token: std::mem::take(token),
        });
    }
    Ok(ParseTree::Node { label, children })
}
