//! The order book against a brute-force reference matcher.

mod support;

use proptest::prelude::*;
use safe_exec::book::Side;
use support::matcher::{self, Op};

#[test]
fn exhaustive_three_order_sequences() {
    matcher::exhaustive_three_order_sequences();
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        8 => (0..3u32, prop::bool::ANY, prop::option::weighted(0.85, 97..=103i64), 1..=6u64).prop_map(
            |(trader, buy, price, qty)| Op::Submit {
                trader,
                side: if buy { Side::Buy } else { Side::Sell },
                price,
                qty
            }
        ),
        1 => (0..10usize).prop_map(Op::Cancel),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 5_000, ..ProptestConfig::default() })]

    #[test]
    fn random_sequences_up_to_ten_orders(ops in prop::collection::vec(op_strategy(), 1..=10)) {
        matcher::run_both(&ops);
    }
}

#[test]
fn full_days_never_self_match() {
    matcher::full_days_never_self_match(&[3, 17]);
}
