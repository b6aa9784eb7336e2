//! DOT export checked by a small recursive-descent parser for the subset
//! of the graph-description grammar it emits.

use discourse_mt::graph::{enumerate_pairs, export_dot, Direction, DiscourseGraph, Edge, RelationLabel};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Str(String),
    Arrow,
    Punct(char),
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let mut it = src.chars().peekable();
    while let Some(&c) = it.peek() {
        if c.is_whitespace() {
            it.next();
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = it.peek().filter(|c| c.is_ascii_alphanumeric() || **c == '_') {
                s.push(c);
                it.next();
            }
            out.push(Tok::Id(s));
        } else if c == '"' {
            it.next();
            let mut s = String::new();
            loop {
                match it.next().ok_or("unterminated string")? {
                    '"' => break,
                    '\\' => s.push(it.next().ok_or("dangling escape")?),
                    c => s.push(c),
                }
            }
            out.push(Tok::Str(s));
        } else if c == '-' {
            it.next();
            if it.next() != Some('>') {
                return Err("expected ->".into());
            }
            out.push(Tok::Arrow);
        } else if "{}[];=,".contains(c) {
            out.push(Tok::Punct(c));
            it.next();
        } else {
            return Err(format!("unexpected {c:?}"));
        }
    }
    Ok(out)
}

type Attrs = Vec<(String, String)>;

#[derive(Debug, Default)]
struct Parsed {
    nodes: Vec<String>,
    edges: Vec<(String, String, Attrs)>,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Result<Tok, String> {
        let t = self.toks.get(self.pos).cloned().ok_or("unexpected end")?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, t: Tok) -> Result<(), String> {
        let got = self.next()?;
        if got == t {
            Ok(())
        } else {
            Err(format!("expected {t:?}, got {got:?}"))
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next()? {
            Tok::Id(s) | Tok::Str(s) => Ok(s),
            t => Err(format!("expected id, got {t:?}")),
        }
    }

    fn attrs(&mut self) -> Result<Attrs, String> {
        let mut out = Vec::new();
        if self.toks.get(self.pos) != Some(&Tok::Punct('[')) {
            return Ok(out);
        }
        self.pos += 1;
        loop {
            if self.toks.get(self.pos) == Some(&Tok::Punct(']')) {
                self.pos += 1;
                return Ok(out);
            }
            let k = self.id()?;
            self.expect(Tok::Punct('='))?;
            out.push((k, self.id()?));
            if self.toks.get(self.pos) == Some(&Tok::Punct(',')) {
                self.pos += 1;
            }
        }
    }

    fn graph(&mut self) -> Result<Parsed, String> {
        self.expect(Tok::Id("digraph".into()))?;
        if let Some(Tok::Id(_) | Tok::Str(_)) = self.toks.get(self.pos) {
            self.pos += 1;
        }
        self.expect(Tok::Punct('{'))?;
        let mut g = Parsed::default();
        loop {
            if self.toks.get(self.pos) == Some(&Tok::Punct('}')) {
                self.pos += 1;
                break;
            }
            let head = self.id()?;
            if self.toks.get(self.pos) == Some(&Tok::Arrow) {
                self.pos += 1;
                let tail = self.id()?;
                let a = self.attrs()?;
                g.edges.push((head, tail, a));
            } else {
                self.attrs()?;
                if !matches!(head.as_str(), "node" | "edge" | "graph") {
                    g.nodes.push(head);
                }
            }
            self.expect(Tok::Punct(';'))?;
        }
        if self.pos != self.toks.len() {
            return Err("trailing input".into());
        }
        Ok(g)
    }
}

fn parse(src: &str) -> Result<Parsed, String> {
    Parser {
        toks: lex(src)?,
        pos: 0,
    }
    .graph()
}

#[test]
fn empty_graph_has_only_nodes() {
    let g = parse(&export_dot(&DiscourseGraph::empty(2, 10))).unwrap();
    assert_eq!(g.nodes, ["1", "2"]);
    assert!(g.edges.is_empty());
}

#[test]
fn every_export_parses_with_one_statement_per_edge() {
    let mut seed = 7u64;
    let mut next = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (seed >> 33) as usize
    };
    for n in 0..25 {
        let mut g = DiscourseGraph::empty(n, 4);
        for (i, j) in enumerate_pairs(n, 4) {
            if next() % 3 == 0 {
                let label = RelationLabel::ALL[next() % RelationLabel::ALL.len()];
                let backward = next() % 2 == 0;
                g.edges.push(Edge {
                    src: if backward { j } else { i },
                    dst: if backward { i } else { j },
                    label,
                    direction: if backward {
                        Direction::Backward
                    } else {
                        Direction::Forward
                    },
                    reason: "quoted \"reason\"".into(),
                });
            }
        }
        let dot = export_dot(&g);
        let parsed = parse(&dot).unwrap_or_else(|e| panic!("{e}\n{dot}"));
        assert_eq!(parsed.nodes.len(), n);
        assert_eq!(parsed.edges.len(), g.edges.len());
        for (e, (s, d, attrs)) in g.edges.iter().zip(&parsed.edges) {
            assert_eq!(
                (s.parse::<usize>().unwrap(), d.parse::<usize>().unwrap()),
                (e.src, e.dst)
            );
            assert!(attrs.contains(&("label".to_string(), e.label.as_str().to_string())));
        }
        assert_eq!(export_dot(&g), dot, "deterministic");
    }
}
