//! Property tests for structural invariants: formula printing/parsing,
//! network representations and round trips, CSV serialization, RNG
//! substream determinism, and density model shape constraints.

use netsem::estimators::density::BinnedDensityModel;
use netsem::estimators::plogis;
use netsem::exprlang::{parse, BinOp, Expr, Func, IndexBound, IndexItem};
use netsem::netgraph::NetworkMatrix;
use netsem::simengine::{Dataset, RngFactory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------------------
// formula AST generation

fn arb_index_bound() -> impl Strategy<Value = IndexBound> {
    prop_oneof![
        (0u32..20).prop_map(IndexBound::Lit),
        Just(IndexBound::Kmax),
    ]
}

fn arb_index_item() -> impl Strategy<Value = IndexItem> {
    prop_oneof![
        arb_index_bound().prop_map(IndexItem::Single),
        (arb_index_bound(), arb_index_bound()).prop_filter_map(
            "literal ranges must be ascending",
            |(lo, hi)| match (lo, hi) {
                // the parser rejects descending literal ranges outright
                (IndexBound::Lit(a), IndexBound::Lit(b)) if a > b => None,
                _ => Some(IndexItem::Range(lo, hi)),
            }
        ),
    ]
}

fn arb_var_name() -> impl Strategy<Value = String> {
    // prefixed so generated names can never collide with function names
    "v[A-Za-z0-9_.]{0,6}".prop_map(|s| s)
}

fn arb_binop() -> impl Strategy<Value = BinOp> {
    prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Lt),
        Just(BinOp::Gt),
        Just(BinOp::Le),
        Just(BinOp::Ge),
        Just(BinOp::Eq),
        Just(BinOp::Ne),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        // negative literals would print as unary minus, changing the AST
        (0.0..1e6f64).prop_map(Expr::Num),
        arb_var_name().prop_map(Expr::Var),
        (arb_var_name(), prop::collection::vec(arb_index_item(), 1..3))
            .prop_map(|(var, indices)| Expr::FriendRef { var, indices }),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (arb_binop(), inner.clone(), inner.clone()).prop_map(|(op, lhs, rhs)| {
                Expr::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                }
            }),
            inner.clone().prop_map(|e| Expr::Unary {
                negate: true,
                expr: Box::new(e),
            }),
            (inner.clone(), any::<bool>()).prop_map(|(a, na_rm)| Expr::Call {
                func: if na_rm { Func::Mean } else { Func::Sum },
                args: vec![a],
                na_rm,
            }),
            inner.clone().prop_map(|a| Expr::Call {
                func: Func::Plogis,
                args: vec![a],
                na_rm: false,
            }),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, e)| Expr::Call {
                func: Func::Ifelse,
                args: vec![c, t, e],
                na_rm: false,
            }),
            prop::collection::vec(inner, 2..4).prop_map(|args| Expr::Call {
                func: Func::Max,
                args,
                na_rm: false,
            }),
        ]
    })
}

proptest! {
    /// Printing an AST and parsing the result reproduces the AST exactly.
    #[test]
    fn expr_display_parse_round_trip(e in arb_expr()) {
        let printed = e.to_string();
        let reparsed = parse(&printed)
            .unwrap_or_else(|err| panic!("failed to reparse {printed:?}: {err}"));
        prop_assert_eq!(e, reparsed);
    }

    /// The parser returns an error (never panics) on arbitrary input.
    #[test]
    fn parser_total_on_garbage(src in "\\PC{0,40}") {
        let _ = parse(&src);
    }
}

// ---------------------------------------------------------------------------
// network invariants and round trips

fn arb_adjacency() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1usize..12).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut adj = vec![vec![0u8; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let b = u8::from(bits[i * n + j]);
                    adj[i][j] = b;
                    adj[j][i] = b;
                }
            }
            adj
        })
    })
}

proptest! {
    /// Adjacency, edge-list, and CSV representations all round trip.
    #[test]
    fn network_representation_round_trips(adj in arb_adjacency()) {
        let net = NetworkMatrix::from_adjacency(&adj).unwrap();
        prop_assert_eq!(net.to_adjacency(), adj);

        let from_edges = NetworkMatrix::from_edges(net.n(), &net.edge_list()).unwrap();
        prop_assert_eq!(from_edges.to_adjacency(), net.to_adjacency());

        let from_csv = NetworkMatrix::from_csv_string(&net.to_csv_string()).unwrap();
        prop_assert_eq!(from_csv.to_adjacency(), net.to_adjacency());
    }

    /// Random graphs are symmetric with no self loops, sorted friend rows,
    /// and kmax equal to the maximum friend count.
    #[test]
    fn gnp_structural_invariants(n in 1usize..40, p in 0.0..1.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let net = NetworkMatrix::gen_gnp(n, p, &mut rng).unwrap();
        prop_assert_eq!(net.n(), n);
        let mut max_deg = 0;
        for i in 0..n {
            let row = net.row(i);
            max_deg = max_deg.max(row.len());
            prop_assert!(row.windows(2).all(|w| w[0] < w[1]), "row not strictly ascending");
            for &j in row {
                prop_assert!(j >= 1 && j as usize <= n, "friend index out of range");
                prop_assert_ne!(j as usize, i + 1, "self loop");
                prop_assert!(
                    net.row((j - 1) as usize).contains(&((i + 1) as u32)),
                    "asymmetric edge"
                );
            }
        }
        prop_assert_eq!(net.kmax(), max_deg);
    }

    /// Small-world rewiring preserves the lattice edge count.
    #[test]
    fn small_world_edge_count_invariant(
        n in 7usize..60,
        nei in 1usize..4,
        p in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        prop_assume!(n >= 2 * nei + 1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let net = NetworkMatrix::gen_small_world(n, 1, nei, p, &mut rng).unwrap();
        prop_assert_eq!(net.edge_list().len(), n * nei);
    }
}

// ---------------------------------------------------------------------------
// dataset CSV round trip (including missing values)

fn arb_cell() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -1e9..1e9f64,
        1 => Just(f64::NAN),
        1 => (-30i32..30).prop_map(f64::from),
    ]
}

proptest! {
    /// Writing a dataset to CSV and reading it back is lossless; missing
    /// values (NaN) survive as empty cells.
    #[test]
    fn dataset_csv_round_trip(
        n in 1usize..20,
        k in 1usize..5,
        values in prop::collection::vec(arb_cell(), 1..100),
    ) {
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|c| (0..n).map(|r| values[(c * n + r) % values.len()]).collect())
            .collect();
        let ds = Dataset {
            n,
            names: (0..k).map(|c| format!("c{c}")).collect(),
            cols,
            network: None,
        };
        let back = Dataset::from_csv_string(&ds.to_csv_string()).unwrap();
        prop_assert_eq!(&back.names, &ds.names);
        prop_assert_eq!(back.n, ds.n);
        for (a, b) in ds.cols.iter().zip(&back.cols) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!(
                    (x.is_nan() && y.is_nan()) || x == y,
                    "cell changed: {} vs {}", x, y
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// RNG substreams

proptest! {
    /// The same (seed, path) always yields the same stream, and the stream
    /// is independent of when the factory was constructed.
    #[test]
    fn substream_reproducible(seed in any::<u64>(), path in "[a-z/0-9]{1,20}") {
        let a: Vec<u64> = (0..4).scan(RngFactory::new(seed).substream(&path), |r, _| {
            Some(r.gen::<u64>())
        }).collect();
        let b: Vec<u64> = (0..4).scan(RngFactory::new(seed).substream(&path), |r, _| {
            Some(r.gen::<u64>())
        }).collect();
        prop_assert_eq!(a, b);
    }

    /// Distinct substream paths give distinct streams.
    #[test]
    fn substream_paths_distinct(seed in any::<u64>(), tag in 0u32..1000) {
        let f = RngFactory::new(seed);
        let x = f.substream(&format!("p/{tag}")).gen::<u64>();
        let y = f.substream(&format!("p/{}", tag + 1)).gen::<u64>();
        prop_assert_ne!(x, y);
    }
}

// ---------------------------------------------------------------------------
// numeric helpers

proptest! {
    /// The logistic link maps into [0, 1] and is monotone.
    #[test]
    fn plogis_bounded_monotone(x in -1e6..1e6f64, d in 0.0..10.0f64) {
        let p = plogis(x);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(plogis(x + d) >= p);
    }

    /// Fitted density bins are strictly ascending, cover the data range,
    /// and the density is nonnegative (zero outside the support).
    #[test]
    fn binned_density_shape(seed in any::<u64>(), n in 60usize..200) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let xcond: Vec<Vec<f64>> = (0..n).map(|_| vec![]).collect();
        let m = BinnedDensityModel::fit(&v, &xcond, 50).unwrap();
        let cuts = m.cuts();
        prop_assert!(cuts.windows(2).all(|w| w[0] < w[1]), "cuts not ascending");
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((cuts[0] - lo).abs() < 1e-12 && (cuts[cuts.len() - 1] - hi).abs() < 1e-12);
        for &x in &[lo - 1.0, lo, (lo + hi) / 2.0, hi, hi + 1.0] {
            let d = m.density(x, &[]);
            prop_assert!(d >= 0.0 && d.is_finite());
        }
        prop_assert_eq!(m.density(lo - 1e-9, &[]), 0.0);
        prop_assert_eq!(m.density(hi + 1e-9, &[]), 0.0);
    }
}
