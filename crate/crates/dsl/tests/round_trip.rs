use elastic_dsl::ast::{BinOp, UnOp};
use elastic_dsl::{parse_kernel, print_kernel, Builtin, Direction, Expr, Kernel, Param, Stmt};
use proptest::prelude::*;

const OPS: [BinOp; 13] = [
    BinOp::Or,
    BinOp::And,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Rem,
];

/// Expressions over the local `v`, the array `a` and the physical builtins.
fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0i64..1000).prop_map(Expr::Int),
        Just(Expr::var("v")),
        prop::sample::select(Builtin::PHYSICAL.to_vec()).prop_map(Expr::Builtin),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (prop::sample::select(OPS.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
            (prop::bool::ANY, inner.clone())
                .prop_map(|(neg, e)| Expr::Unary(if neg { UnOp::Neg } else { UnOp::Not }, Box::new(e))),
            inner.prop_map(|e| Expr::Index("a".into(), Box::new(e))),
        ]
    })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let simple = prop_oneof![
        expr().prop_map(|value| Stmt::Assign {
            name: "v".into(),
            value
        }),
        (expr(), expr()).prop_map(|(index, value)| Stmt::Store {
            array: "b".into(),
            index,
            value
        }),
    ];
    simple.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            (
                expr(),
                prop::collection::vec(inner.clone(), 0..3),
                prop::collection::vec(inner.clone(), 0..3)
            )
                .prop_map(|(cond, then, otherwise)| Stmt::If { cond, then, otherwise }),
            (
                expr(),
                expr(),
                prop::option::of(expr()),
                prop::collection::vec(inner, 0..3)
            )
                .prop_map(|(start, end, step, body)| Stmt::For {
                    var: "j".into(),
                    start,
                    end,
                    step,
                    body
                }),
        ]
    })
}

fn kernel() -> impl Strategy<Value = Kernel> {
    (expr(), prop::collection::vec(stmt(), 0..5)).prop_map(|(init, rest)| {
        let mut body = vec![
            Stmt::Let {
                name: "v".into(),
                value: Expr::Int(0),
            },
            Stmt::Assign {
                name: "v".into(),
                value: init,
            },
        ];
        body.extend(rest);
        Kernel {
            name: "k".into(),
            params: vec![
                Param {
                    name: "a".into(),
                    direction: Direction::In,
                    len: 8,
                },
                Param {
                    name: "b".into(),
                    direction: Direction::Out,
                    len: 8,
                },
            ],
            body,
            elastic: None,
        }
    })
}

proptest! {
    #[test]
    fn parse_inverts_print(k in kernel()) {
        let text = print_kernel(&k);
        let parsed = parse_kernel(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(parsed, k);
    }
}
