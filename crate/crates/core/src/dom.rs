//! Tag-soup tolerant HTML parsing into an arena tree, plus XPath generation
//! and resolution.

use std::fmt;

/// Elements that never take children.
pub const VOID_ELEMENTS: [&str; 14] = [
    "AREA", "BASE", "BR", "COL", "EMBED", "HR", "IMG", "INPUT", "LINK", "META", "PARAM", "SOURCE",
    "TRACK", "WBR",
];

/// Start tags that implicitly close an open `P`.
const CLOSES_P: [&str; 28] = [
    "ADDRESS", "ARTICLE", "ASIDE", "BLOCKQUOTE", "DETAILS", "DIV", "DL", "FIELDSET", "FIGCAPTION",
    "FIGURE", "FOOTER", "FORM", "H1", "H2", "H3", "H4", "H5", "H6", "HEADER", "HR", "MAIN", "NAV",
    "OL", "P", "PRE", "SECTION", "TABLE", "UL",
];

/// Elements at which the search for an implicitly closed element stops.
/// Elements that may appear inside an unclosed head without ending it.
const HEAD_CONTENT: [&str; 8] = ["TITLE", "META", "LINK", "STYLE", "SCRIPT", "BASE", "NOSCRIPT", "TEMPLATE"];

const SCOPE_BOUNDARY: [&str; 9] =
    ["HTML", "BODY", "TABLE", "TD", "TH", "UL", "OL", "DL", "BUTTON"];

const RAW_TEXT: [&str; 4] = ["SCRIPT", "STYLE", "TEXTAREA", "TITLE"];

/// Elements whose first occurrence among siblings is written without a
/// positional predicate in generated XPaths.
const SINGLETON_STEPS: [&str; 3] = ["HTML", "HEAD", "BODY"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Element { tag: String, attrs: Vec<(String, String)> },
    Text(String),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// 1-based line of the opening tag (or first character of a text run).
    pub source_line: usize,
}

/// Parsed document. Nodes are stored in document order, so `NodeId`
/// ordering is document order.
#[derive(Debug, Clone)]
pub struct DocTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomError {
    #[error("empty document")]
    EmptyDocument,
    #[error("node {0} is not an element of this tree")]
    NotInTree(usize),
}

impl DocTree {
    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Uppercase tag name, or `None` for text nodes.
    pub fn tag(&self, id: NodeId) -> Option<&str> {
        match &self.nodes.get(id.0)?.kind {
            NodeKind::Element { tag, .. } => Some(tag),
            NodeKind::Text(_) => None,
        }
    }

    pub fn is_tag(&self, id: NodeId, name: &str) -> bool {
        self.tag(id) == Some(name)
    }

    pub fn attrs(&self, id: NodeId) -> &[(String, String)] {
        match &self.nodes[id.0].kind {
            NodeKind::Element { attrs, .. } => attrs,
            NodeKind::Text(_) => &[],
        }
    }

    /// Attribute value by lowercase name.
    pub fn attr(&self, id: NodeId, name: &str) -> Option<&str> {
        self.attrs(id).iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Attribute value if present and not blank.
    pub fn nonblank_attr(&self, id: NodeId, name: &str) -> Option<&str> {
        self.attr(id, name).filter(|v| !v.trim().is_empty())
    }

    /// All element ids in document order.
    pub fn elements(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Element { .. }))
            .map(|(i, _)| NodeId(i))
    }

    pub fn elements_named<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.elements().filter(move |&id| self.is_tag(id, tag))
    }

    pub fn element_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id.0]
            .children
            .iter()
            .copied()
            .filter(|&c| matches!(self.nodes[c.0].kind, NodeKind::Element { .. }))
    }

    /// Element descendants of `id` in document order, excluding `id`.
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.nodes[id.0].children.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            if matches!(self.nodes[n.0].kind, NodeKind::Element { .. }) {
                out.push(n);
            }
            stack.extend(self.nodes[n.0].children.iter().rev().copied());
        }
        out
    }

    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.nodes[id.0].parent, move |&p| self.nodes[p.0].parent)
    }

    /// Concatenated text of all descendant text nodes.
    pub fn text_content(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_text(id, &mut out);
        out
    }

    fn collect_text(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id.0].kind {
            NodeKind::Text(t) => out.push_str(t),
            NodeKind::Element { .. } => {
                for &c in &self.nodes[id.0].children {
                    self.collect_text(c, out);
                }
            }
        }
    }

    /// Serializes the element back to HTML, leaving out the element's own
    /// `id` attribute when `omit_own_id` is set.
    pub fn outer_html(&self, id: NodeId, omit_own_id: bool) -> String {
        let mut out = String::new();
        self.write_html(id, omit_own_id, &mut out);
        out
    }

    fn write_html(&self, id: NodeId, omit_id: bool, out: &mut String) {
        match &self.nodes[id.0].kind {
            NodeKind::Text(t) => out.push_str(&escape_text(t)),
            NodeKind::Element { tag, attrs } => {
                let name = tag.to_ascii_lowercase();
                out.push('<');
                out.push_str(&name);
                for (k, v) in attrs {
                    if omit_id && k == "id" {
                        continue;
                    }
                    out.push(' ');
                    out.push_str(k);
                    out.push_str("=\"");
                    out.push_str(&v.replace('&', "&amp;").replace('"', "&quot;"));
                    out.push('"');
                }
                out.push('>');
                if VOID_ELEMENTS.contains(&tag.as_str()) {
                    return;
                }
                for &c in &self.nodes[id.0].children {
                    self.write_html(c, false, out);
                }
                out.push_str("</");
                out.push_str(&name);
                out.push('>');
            }
        }
    }

    /// Absolute XPath of an element, e.g. `/html/body/div[4]/p[2]/img[1]`.
    ///
    /// Every step carries a 1-based position among same-tag element
    /// siblings, except the first `html`, `head` or `body` at its level.
    pub fn xpath_of(&self, id: NodeId) -> Result<String, DomError> {
        if self.tag(id).is_none() {
            return Err(DomError::NotInTree(id.0));
        }
        let mut steps = Vec::new();
        let mut current = Some(id);
        while let Some(n) = current {
            let tag = self.tag(n).expect("ancestors of elements are elements");
            let position = match self.nodes[n.0].parent {
                None => 1,
                Some(p) => {
                    1 + self
                        .element_children(p)
                        .take_while(|&c| c != n)
                        .filter(|&c| self.is_tag(c, tag))
                        .count()
                }
            };
            let name = tag.to_ascii_lowercase();
            if position == 1 && SINGLETON_STEPS.contains(&tag) {
                steps.push(name);
            } else {
                steps.push(format!("{name}[{position}]"));
            }
            current = self.nodes[n.0].parent;
        }
        steps.reverse();
        Ok(format!("/{}", steps.join("/")))
    }

    /// Resolves an absolute positional XPath of the form produced by
    /// [`DocTree::xpath_of`]; a step without a predicate means `[1]`.
    pub fn resolve_xpath(&self, path: &str) -> Option<NodeId> {
        let steps = parse_xpath(path)?;
        let (first, rest) = steps.split_first()?;
        let root = self.root();
        if !self.tag(root)?.eq_ignore_ascii_case(&first.0) || first.1 != 1 {
            return None;
        }
        let mut current = root;
        for (name, position) in rest {
            current = self
                .element_children(current)
                .filter(|&c| self.tag(c).is_some_and(|t| t.eq_ignore_ascii_case(name)))
                .nth(position - 1)?;
        }
        Some(current)
    }
}

/// Splits `/a/b[2]/c` into `[("a",1),("b",2),("c",1)]`.
pub fn parse_xpath(path: &str) -> Option<Vec<(String, usize)>> {
    let body = path.strip_prefix('/')?;
    body.split('/')
        .map(|step| {
            let (name, position) = match step.find('[') {
                Some(open) => {
                    let inner = step[open + 1..].strip_suffix(']')?;
                    (&step[..open], inner.parse::<usize>().ok().filter(|&n| n >= 1)?)
                }
                None => (step, 1),
            };
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return None;
            }
            Some((name.to_ascii_lowercase(), position))
        })
        .collect()
}

/// Rewrites an XPath with lowercase names and explicit predicates on every
/// step, so that equivalent spellings compare equal.
pub fn normalize_xpath(path: &str) -> Option<String> {
    let steps = parse_xpath(path)?;
    Some(steps.iter().map(|(n, p)| format!("/{n}[{p}]")).collect())
}

fn escape_text(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Start { name: String, attrs: Vec<(String, String)>, self_closing: bool, offset: usize },
    End { name: String },
    Text { text: String, offset: usize },
}

/// Parses an HTML start tag such as `<img src="a.jpg" alt>` into its
/// uppercase name and attributes. Returns `None` unless the text begins with
/// a start tag.
pub fn parse_start_tag(text: &str) -> Option<(String, Vec<(String, String)>)> {
    let mut lexer = Lexer { src: text, pos: 0, tokens: Vec::new() };
    if !text.starts_with('<') {
        return None;
    }
    lexer.pos = 1;
    match lexer.start_tag(0)? {
        Token::Start { name, attrs, .. } => Some((name, attrs)),
        _ => None,
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn run(mut self) -> Vec<Token> {
        let mut text_start = self.pos;
        while self.pos < self.src.len() {
            let rest = self.rest();
            if !rest.starts_with('<') {
                let next = rest.find('<').map_or(self.src.len(), |i| self.pos + i);
                self.pos = next;
                continue;
            }
            let tag_offset = self.pos;
            let consumed = if let Some(comment) = rest.strip_prefix("<!--") {
                self.flush_text(text_start, tag_offset);
                let end = comment.find("-->").map_or(self.src.len(), |i| self.pos + 4 + i + 3);
                self.pos = end;
                true
            } else if rest.starts_with("<!") || rest.starts_with("<?") {
                self.flush_text(text_start, tag_offset);
                let end = rest.find('>').map_or(self.src.len(), |i| self.pos + i + 1);
                self.pos = end;
                true
            } else if rest.starts_with("</") && rest[2..].starts_with(|c: char| c.is_ascii_alphabetic()) {
                self.flush_text(text_start, tag_offset);
                self.pos += 2;
                let name = self.name();
                let end = self.rest().find('>').map_or(self.src.len(), |i| self.pos + i + 1);
                self.pos = end;
                self.tokens.push(Token::End { name });
                true
            } else if rest[1..].starts_with(|c: char| c.is_ascii_alphabetic()) {
                self.flush_text(text_start, tag_offset);
                self.pos += 1;
                match self.start_tag(tag_offset) {
                    Some(token) => {
                        let raw = match &token {
                            Token::Start { name, self_closing: false, .. }
                                if RAW_TEXT.contains(&name.as_str()) =>
                            {
                                Some(name.clone())
                            }
                            _ => None,
                        };
                        self.tokens.push(token);
                        if let Some(name) = raw {
                            self.raw_text(&name);
                        }
                    }
                    None => self.pos = self.src.len(),
                }
                true
            } else {
                // A stray `<` is text.
                self.pos += 1;
                false
            };
            if consumed {
                text_start = self.pos;
            }
        }
        self.flush_text(text_start, self.src.len());
        self.tokens
    }

    fn flush_text(&mut self, start: usize, end: usize) {
        if start < end {
            self.tokens.push(Token::Text { text: decode_entities(&self.src[start..end]), offset: start });
        }
    }

    fn raw_text(&mut self, name: &str) {
        let close = format!("</{}", name.to_ascii_lowercase());
        let rest = self.rest();
        let lower = rest.to_ascii_lowercase();
        let end = lower.find(&close).unwrap_or(rest.len());
        if end > 0 {
            let text = &rest[..end];
            let text = if name == "SCRIPT" || name == "STYLE" { text.to_string() } else { decode_entities(text) };
            self.tokens.push(Token::Text { text, offset: self.pos });
        }
        self.pos += end;
    }

    fn name(&mut self) -> String {
        let rest = self.rest();
        let len = rest
            .find(|c: char| c.is_ascii_whitespace() || c == '>' || c == '/')
            .unwrap_or(rest.len());
        self.pos += len;
        rest[..len].to_ascii_uppercase()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Lexes a start tag whose `<` has already been consumed.
    fn start_tag(&mut self, offset: usize) -> Option<Token> {
        let name = self.name();
        let mut attrs: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;
        loop {
            self.skip_ws();
            let rest = self.rest();
            if rest.is_empty() {
                return None;
            }
            if let Some(after) = rest.strip_prefix("/>") {
                self_closing = true;
                self.pos = self.src.len() - after.len();
                break;
            }
            if rest.starts_with('>') {
                self.pos += 1;
                break;
            }
            if rest.starts_with('/') {
                self.pos += 1;
                continue;
            }
            let key_len = rest
                .find(|c: char| c.is_ascii_whitespace() || c == '>' || c == '=' || c == '/')
                .unwrap_or(rest.len())
                .max(1);
            let key = rest[..key_len].to_ascii_lowercase();
            self.pos += key_len;
            self.skip_ws();
            let mut value = String::new();
            if self.rest().starts_with('=') {
                self.pos += 1;
                self.skip_ws();
                let rest = self.rest();
                match rest.chars().next() {
                    Some(q @ ('"' | '\'')) => {
                        let body = &rest[1..];
                        let end = body.find(q).unwrap_or(body.len());
                        value = decode_entities(&body[..end]);
                        self.pos += 1 + end + usize::from(end < body.len());
                    }
                    Some(_) => {
                        let end = rest
                            .find(|c: char| c.is_ascii_whitespace() || c == '>')
                            .unwrap_or(rest.len());
                        value = decode_entities(&rest[..end]);
                        self.pos += end;
                    }
                    None => {}
                }
            }
            if !attrs.iter().any(|(k, _)| *k == key) {
                attrs.push((key, value));
            }
        }
        Some(Token::Start { name, attrs, self_closing, offset })
    }
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let window = rest.char_indices().nth(12).map_or(rest.len(), |(i, _)| i);
        let semi = rest[..window].find(';');
        let decoded = semi.and_then(|end| {
            let entity = &rest[1..end];
            let ch = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            ch.map(|c| (c, end + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Parses HTML leniently: unclosed elements are closed implicitly, unknown
/// elements are kept, void elements never receive children. Content outside
/// a single `html` element is placed under a synthesized one.
pub fn parse_html(text: &str) -> Result<DocTree, DomError> {
    if text.trim().is_empty() {
        return Err(DomError::EmptyDocument);
    }
    let line_starts: Vec<usize> = std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let line_of = |offset: usize| line_starts.partition_point(|&s| s <= offset);

    let tokens = Lexer { src: text, pos: 0, tokens: Vec::new() }.run();
    let mut builder = TreeBuilder { nodes: Vec::new(), stack: Vec::new() };

    // The root is the first `html` start tag when it precedes any other
    // element; otherwise a synthesized HTML element.
    let first_start = tokens.iter().find_map(|t| match t {
        Token::Start { name, attrs, offset, .. } => Some((name, attrs, *offset)),
        _ => None,
    });
    let explicit_root = matches!(first_start, Some((name, _, _)) if name == "HTML");
    let (root_attrs, root_line) = match first_start {
        Some((_, attrs, offset)) if explicit_root => (attrs.clone(), line_of(offset)),
        _ => (Vec::new(), 1),
    };
    builder.nodes.push(Node {
        kind: NodeKind::Element { tag: "HTML".into(), attrs: root_attrs },
        parent: None,
        children: Vec::new(),
        source_line: root_line,
    });
    builder.stack.push(NodeId(0));

    let mut skipped_root = !explicit_root;
    for token in tokens {
        match token {
            Token::Start { name, attrs, self_closing, offset } => {
                if name == "HTML" {
                    if !skipped_root {
                        skipped_root = true;
                    } else {
                        builder.merge_root_attrs(attrs);
                    }
                    continue;
                }
                builder.start(name, attrs, self_closing, line_of(offset));
            }
            Token::End { name } => builder.end(&name),
            Token::Text { text, offset } => builder.text(text, line_of(offset)),
        }
    }
    Ok(DocTree { nodes: builder.nodes })
}

struct TreeBuilder {
    nodes: Vec<Node>,
    stack: Vec<NodeId>,
}

impl TreeBuilder {
    fn current(&self) -> NodeId {
        *self.stack.last().expect("root is never popped")
    }

    fn tag(&self, id: NodeId) -> &str {
        match &self.nodes[id.0].kind {
            NodeKind::Element { tag, .. } => tag,
            NodeKind::Text(_) => "",
        }
    }

    fn push_node(&mut self, kind: NodeKind, line: usize) -> NodeId {
        let parent = self.current();
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { kind, parent: Some(parent), children: Vec::new(), source_line: line.max(1) });
        self.nodes[parent.0].children.push(id);
        id
    }

    fn merge_root_attrs(&mut self, attrs: Vec<(String, String)>) {
        if let NodeKind::Element { attrs: existing, .. } = &mut self.nodes[0].kind {
            for (k, v) in attrs {
                if !existing.iter().any(|(e, _)| *e == k) {
                    existing.push((k, v));
                }
            }
        }
    }

    /// Position in the stack of the nearest open `tag`, searching no further
    /// than the first scope boundary.
    fn open_in_scope(&self, tag: &str, boundaries: &[&str]) -> Option<usize> {
        for (i, &id) in self.stack.iter().enumerate().rev().take(self.stack.len() - 1) {
            let t = self.tag(id);
            if t == tag {
                return Some(i);
            }
            if boundaries.contains(&t) {
                return None;
            }
        }
        None
    }

    fn close_implied(&mut self, name: &str) {
        if !HEAD_CONTENT.contains(&name) {
            if let Some(i) = self.stack.iter().position(|&id| self.tag(id) == "HEAD") {
                self.stack.truncate(i);
            }
        }
        if CLOSES_P.contains(&name) {
            if let Some(i) = self.open_in_scope("P", &SCOPE_BOUNDARY) {
                self.stack.truncate(i);
            }
        }
        let siblings: &[&str] = match name {
            "LI" => &["LI"],
            "DT" | "DD" => &["DT", "DD"],
            "OPTION" => &["OPTION"],
            "TR" => &["TR"],
            "TD" | "TH" => &["TD", "TH"],
            _ => &[],
        };
        let boundaries: &[&str] = match name {
            "LI" => &["UL", "OL"],
            "DT" | "DD" => &["DL"],
            "OPTION" => &["SELECT", "DATALIST"],
            "TR" => &["TABLE", "TBODY", "THEAD", "TFOOT"],
            _ => &["TR", "TABLE"],
        };
        for sibling in siblings {
            if let Some(i) = self.open_in_scope(sibling, boundaries) {
                self.stack.truncate(i);
                break;
            }
        }
        if name.len() == 2 && name.starts_with('H') && name.as_bytes()[1].is_ascii_digit() {
            let top = self.tag(self.current());
            if top.len() == 2 && top.starts_with('H') && top.as_bytes()[1].is_ascii_digit() {
                self.stack.pop();
            }
        }
    }

    fn start(&mut self, name: String, attrs: Vec<(String, String)>, self_closing: bool, line: usize) {
        self.close_implied(&name);
        let is_void = VOID_ELEMENTS.contains(&name.as_str());
        let id = self.push_node(NodeKind::Element { tag: name, attrs }, line);
        if !is_void && !self_closing {
            self.stack.push(id);
        }
    }

    fn end(&mut self, name: &str) {
        if name == "HTML" || VOID_ELEMENTS.contains(&name) {
            return;
        }
        if let Some(i) = self.stack.iter().skip(1).rposition(|&id| self.tag(id) == name) {
            self.stack.truncate(i + 1);
        } else if name == "P" {
            // `</p>` with no open p yields an empty paragraph.
            let line = self.nodes[self.current().0].source_line;
            self.push_node(NodeKind::Element { tag: "P".into(), attrs: Vec::new() }, line);
        }
    }

    fn text(&mut self, text: String, line: usize) {
        let parent = self.current();
        if let Some(&last) = self.nodes[parent.0].children.last() {
            if let NodeKind::Text(existing) = &mut self.nodes[last.0].kind {
                existing.push_str(&text);
                return;
            }
        }
        self.push_node(NodeKind::Text(text), line);
    }
}
