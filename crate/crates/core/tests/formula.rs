//! Parser round-trips and evaluation-order soundness on random models.

use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use simaudit::formula::{parse_formula, BinOp, CellInput, CellRef, Expr, Function, Model, Range};

const FORMULAS: &[&str] = &[
    "=1",
    "=-1",
    "=0.5",
    "=1e-7",
    "=2.5E3",
    "=A1",
    "=ZZ999",
    "=a1+b2",
    "=B2*(1+B4)",
    "=(B2*(1+B4))",
    "=1-2-3",
    "=1-(2-3)",
    "=2^3^2",
    "=2^(3^2)",
    "=-2^2",
    "=-(2^2)",
    "=--A1",
    "=A1*-B1",
    "=A1/B1/C1",
    "=A1/(B1/C1)",
    "=A1+B1*C1",
    "=(A1+B1)*C1",
    "=A1=B1",
    "=A1<>B1",
    "=A1<B1",
    "=A1<=B1",
    "=A1>B1",
    "=A1>=B1",
    "=(A1<B1)=1",
    "=A1+1>B1*2",
    "=SUM(A1:A10)",
    "=SUM(A1,B2,3)",
    "=SUM(A1:B3,C4,5)",
    "=sum(a1:a3)",
    "=AVERAGE(A1:C1)",
    "=MIN(A1,B1)",
    "=MAX(0,A1-B1)",
    "=ABS(-A1)",
    "=SQRT(A1)",
    "=LN(A1)",
    "=EXP(A1*0.1)",
    "=IF(A1>0,B1,C1)",
    "=IF(A1,1,IF(B1,2,3))",
    "=NPV(0.1, C2:C5)",
    "=NPV(B7,C17:G17)-B8",
    "=NPV(0.08,A1,A2,A3)",
    "=IRR(A1:E1)",
    "=IRR(A1:E1,0.2)",
    "=LOOKUP(A1,B1:C5)",
    "=LOOKUP(A1,B1:C5,0)",
    "=LOOKUP(A1,B1:C5,1)",
    "= 1 + 2 * 3 ",
    "=A1\u{2212}B1",
    "=MAX(0, C16-(D14-D15))",
    "=(((A1)))",
    "=A1^-1",
    "=B3:A1=B3:A1",
];

#[test]
fn at_least_fifty_formulas_round_trip() {
    let mut parsed = 0;
    for text in FORMULAS {
        let Ok(expr) = parse_formula(text) else {
            continue;
        };
        parsed += 1;
        let rendered = expr.to_formula();
        let again =
            parse_formula(&rendered).unwrap_or_else(|e| panic!("{text} -> {rendered}: {e}"));
        assert_eq!(expr, again, "{text} -> {rendered}");
    }
    assert!(parsed >= 50, "only {parsed} formulas parsed");
}

#[test]
fn precedence_shapes() {
    let e = parse_formula("=1-2-3").unwrap();
    assert_eq!(e.to_formula(), "=1.0-2.0-3.0");
    let e = parse_formula("=1-(2-3)").unwrap();
    assert_eq!(e.to_formula(), "=1.0-(2.0-3.0)");
    // unary minus binds tighter than ^, which is left-associative
    let m = Model::build([
        CellInput::new("A1".parse().unwrap(), "=-2^2"),
        CellInput::new("A2".parse().unwrap(), "=2^3^2"),
    ])
    .unwrap();
    let v = m.evaluate(&BTreeMap::new()).unwrap();
    assert_eq!(v.get("A1".parse().unwrap()), Some(4.0));
    assert_eq!(v.get("A2".parse().unwrap()), Some(64.0));
}

fn cell() -> impl Strategy<Value = CellRef> {
    (0u16..30, 1u32..60).prop_map(|(c, r)| CellRef::new(c, r).unwrap())
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(0.5),
        Just(1e-7),
        Just(1e21),
        Just(3.0),
        (0u32..10_000).prop_map(|k| f64::from(k) / 100.0),
        (0.0..1e6f64),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![number().prop_map(Expr::Number), cell().prop_map(Expr::Ref)];
    leaf.prop_recursive(5, 40, 4, |inner| {
        let ops = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
            Just(BinOp::Eq),
            Just(BinOp::Ne),
            Just(BinOp::Lt),
            Just(BinOp::Le),
            Just(BinOp::Gt),
            Just(BinOp::Ge),
        ];
        let range = (cell(), cell()).prop_map(|(start, end)| Expr::Range(Range { start, end }));
        let any_arg = prop_oneof![inner.clone(), range];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (
                prop_oneof![
                    Just(Function::Abs),
                    Just(Function::Sqrt),
                    Just(Function::Ln),
                    Just(Function::Exp)
                ],
                inner.clone()
            )
                .prop_map(|(func, a)| Expr::Call {
                    func,
                    args: vec![a]
                }),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| Expr::Call {
                func: Function::If,
                args: vec![a, b, c]
            }),
            (
                prop_oneof![
                    Just(Function::Sum),
                    Just(Function::Average),
                    Just(Function::Min),
                    Just(Function::Max)
                ],
                prop::collection::vec(any_arg.clone(), 1..4)
            )
                .prop_map(|(func, args)| Expr::Call { func, args }),
            (inner, prop::collection::vec(any_arg, 1..3)).prop_map(|(rate, mut rest)| {
                rest.insert(0, rate);
                Expr::Call {
                    func: Function::Npv,
                    args: rest,
                }
            }),
        ]
    })
}

proptest! {
    #[test]
    fn rendering_reparses_to_the_same_tree(e in expr()) {
        let text = e.to_formula();
        let back = parse_formula(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e);
    }

    /// Random DAG over shuffled addresses: the evaluation order puts every
    /// precedent first and values match a memoised recursive oracle.
    #[test]
    fn topological_order_is_sound(
        n in 2usize..40,
        edges in prop::collection::vec((0usize..40, 0usize..40), 0..120),
        perm_seed in any::<u64>(),
    ) {
        // address for node i: a permutation of A1..
        let mut addrs: Vec<CellRef> = (0..n).map(|i| CellRef::new((i % 7) as u16, (i / 7 + 1) as u32).unwrap()).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            addrs.swap(i, (s >> 33) as usize % (i + 1));
        }
        // node i may depend on nodes j < i only
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in edges {
            let (a, b) = (a % n, b % n);
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                if !deps[hi].contains(&lo) {
                    deps[hi].push(lo);
                }
            }
        }
        let inputs: Vec<CellInput> = (0..n).map(|i| {
            let mut f = format!("={}", i + 1);
            for &d in &deps[i] {
                f.push_str(&format!("+0.5*{}", addrs[d]));
            }
            CellInput::new(addrs[i], f)
        }).collect();
        let model = Model::build(inputs).unwrap();

        let order = model.order();
        let pos: HashMap<CellRef, usize> = order.iter().enumerate().map(|(p, c)| (*c, p)).collect();
        prop_assert_eq!(order.len(), n);
        for def in model.cells() {
            for p in &def.precedents {
                prop_assert!(pos[p] < pos[&def.cell]);
            }
        }

        fn oracle(i: usize, deps: &[Vec<usize>], memo: &mut Vec<Option<f64>>) -> f64 {
            if let Some(v) = memo[i] { return v; }
            let mut v = (i + 1) as f64;
            for &d in &deps[i] { v += 0.5 * oracle(d, deps, memo); }
            memo[i] = Some(v);
            v
        }
        let eval = model.evaluate(&BTreeMap::new()).unwrap();
        let mut memo = vec![None; n];
        for (i, &a) in addrs.iter().enumerate() {
            prop_assert_eq!(eval.get(a), Some(oracle(i, &deps, &mut memo)));
        }
    }
}
