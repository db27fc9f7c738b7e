//! Random expressions are generated together with their value, computed by a
//! separate evaluator over the generator's own tree, then rendered to text
//! and compared with `parse(..).eval(..)`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mixhess_core::exprs::parse;

enum Node {
    Num(f64),
    X,
    Y,
    R,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    /// `a / (1 + b^2)`, never singular
    SafeDiv(Box<Node>, Box<Node>),
    /// `abs(a)^p`, p a small integer
    Pow(Box<Node>, u32),
    Sin(Box<Node>),
    Cos(Box<Node>),
    /// `sqrt(abs(a))`
    SqrtAbs(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

fn gen(rng: &mut StdRng, depth: u32) -> Node {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..4) {
            0 => Node::Num((rng.gen_range(-50.0f64..50.0) * 100.0).round() / 100.0),
            1 => Node::X,
            2 => Node::Y,
            _ => Node::R,
        };
    }
    let op = rng.gen_range(0..11);
    let mut sub = || Box::new(gen(rng, depth - 1));
    let pick = sub();
    match op {
        0 => Node::Neg(pick),
        1 => Node::Add(pick, sub()),
        2 => Node::Sub(pick, sub()),
        3 => Node::Mul(pick, sub()),
        4 => Node::SafeDiv(pick, sub()),
        5 => Node::Pow(pick, depth % 4),
        6 => Node::Sin(pick),
        7 => Node::Cos(pick),
        8 => Node::SqrtAbs(pick),
        9 => Node::Min(pick, sub()),
        _ => Node::Max(pick, sub()),
    }
}

fn value(n: &Node, x: f64, y: f64) -> f64 {
    let v = |n: &Node| value(n, x, y);
    match n {
        Node::Num(c) => *c,
        Node::X => x,
        Node::Y => y,
        Node::R => (x * x + y * y).sqrt(),
        Node::Neg(a) => -v(a),
        Node::Add(a, b) => v(a) + v(b),
        Node::Sub(a, b) => v(a) - v(b),
        Node::Mul(a, b) => v(a) * v(b),
        Node::SafeDiv(a, b) => v(a) / (1.0 + v(b).powf(2.0)),
        Node::Pow(a, p) => v(a).abs().powf(*p as f64),
        Node::Sin(a) => v(a).sin(),
        Node::Cos(a) => v(a).cos(),
        Node::SqrtAbs(a) => v(a).abs().sqrt(),
        Node::Min(a, b) => v(a).min(v(b)),
        Node::Max(a, b) => v(a).max(v(b)),
    }
}

/// Minimal parentheses are not attempted: every compound is wrapped, with
/// random spacing.
fn render(n: &Node, rng: &mut StdRng) -> String {
    let sp = |rng: &mut StdRng| if rng.gen_bool(0.3) { " " } else { "" };
    match n {
        Node::Num(c) => {
            if *c < 0.0 {
                format!("({c})")
            } else {
                format!("{c}")
            }
        }
        Node::X => "x".into(),
        Node::Y => "y".into(),
        Node::R => "r".into(),
        Node::Neg(a) => format!("(-{})", render(a, rng)),
        Node::Add(a, b) => format!("({}{}+{}{})", render(a, rng), sp(rng), sp(rng), render(b, rng)),
        Node::Sub(a, b) => format!("({}{}-{}{})", render(a, rng), sp(rng), sp(rng), render(b, rng)),
        Node::Mul(a, b) => format!("({}*{})", render(a, rng), render(b, rng)),
        Node::SafeDiv(a, b) => format!("({} / (1 + {}^2))", render(a, rng), render(b, rng)),
        Node::Pow(a, p) => format!("(abs({})^{p})", render(a, rng)),
        Node::Sin(a) => format!("sin({})", render(a, rng)),
        Node::Cos(a) => format!("cos({})", render(a, rng)),
        Node::SqrtAbs(a) => format!("sqrt(abs({}))", render(a, rng)),
        Node::Min(a, b) => format!("min({},{}{})", render(a, rng), sp(rng), render(b, rng)),
        Node::Max(a, b) => format!("max({},{}{})", render(a, rng), sp(rng), render(b, rng)),
    }
}

#[test]
fn random_expressions_match_independent_evaluation() {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut compared = 0;
    while compared < 100 {
        let tree = gen(&mut rng, 5);
        let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let want = value(&tree, x, y);
        if !want.is_finite() || want.abs() > 1e12 {
            continue;
        }
        let src = render(&tree, &mut rng);
        let expr = parse(&src).unwrap_or_else(|e| panic!("{src}: {e}"));
        let got = expr.eval(x, y).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{src} at ({x}, {y}): {got} vs {want}");
        // printing and reparsing keeps the value
        let again = parse(&expr.to_string()).unwrap().eval(x, y).unwrap();
        assert_eq!(again.to_bits(), got.to_bits(), "{src}");
        compared += 1;
    }
}
