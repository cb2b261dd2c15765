//! Random elections and the method-scoring properties checked over them.

use num_traits::Zero;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use votelab_core::ballot::*;
use votelab_core::ids::OptionId;
use votelab_core::rational::{frac, int, Rational};

pub fn option_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("o{i}")).collect()
}

pub fn question(n: usize, specs: Vec<VotingMethodSpec>) -> Question {
    let names = option_names(n);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Question::with_option_ids("q", &refs, specs).unwrap()
}

pub fn spec_for(method: MethodId) -> VotingMethodSpec {
    VotingMethodSpec::standard(method, &MethodParams::default())
}

/// A valid raw ballot for `method` over `n` options.
pub fn ballot_strategy(method: MethodId, n: usize) -> BoxedStrategy<RawBallotInput> {
    let ids: Vec<OptionId> = option_names(n).into_iter().map(OptionId::from).collect();
    match method {
        MethodId::Mv => (0..n)
            .prop_map(move |i| RawBallotInput::SingleChoice(ids[i].clone()))
            .boxed(),
        MethodId::Cav | MethodId::Sv | MethodId::Av => {
            let levels = spec_for(method).score_levels.clone();
            proptest::collection::vec(0..levels.len(), n)
                .prop_map(move |picks| {
                    RawBallotInput::PerOptionScore(
                        ids.iter().cloned().zip(picks.iter().map(|&p| levels[p])).collect(),
                    )
                })
                .boxed()
        }
        MethodId::Mbc => (Just(ids.clone()).prop_shuffle(), 1..=n)
            .prop_map(|(order, m)| RawBallotInput::RankedSubset(order[..m].to_vec()))
            .boxed(),
        MethodId::Qv => proptest::collection::vec(0u32..=6, n)
            .prop_filter("within QV budget", |v| {
                v.iter().map(|x| x * x).sum::<u32>() <= MethodParams::DEFAULT_QV_BUDGET
            })
            .prop_map(move |v| RawBallotInput::IntegerAllocation(ids.iter().cloned().zip(v).collect()))
            .boxed(),
        MethodId::Cumulative => proptest::collection::vec(0u32..=4, n)
            .prop_filter("within cumulative total", |v| {
                v.iter().sum::<u32>() <= MethodParams::DEFAULT_CUMULATIVE_TOTAL
            })
            .prop_map(move |v| RawBallotInput::IntegerAllocation(ids.iter().cloned().zip(v).collect()))
            .boxed(),
    }
}

/// Method, option count, and up to 40 valid ballots.
pub type Election = (MethodId, usize, Vec<RawBallotInput>);

pub fn election() -> impl Strategy<Value = Election> {
    (prop::sample::select(MethodId::ALL.to_vec()), 2usize..=7).prop_flat_map(|(m, n)| {
        (Just(m), Just(n), proptest::collection::vec(ballot_strategy(m, n), 0..40))
    })
}

pub fn election_and_seed() -> impl Strategy<Value = (Election, u64)> {
    (election(), any::<u64>())
}

pub fn plurality_case() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2usize..=7, proptest::collection::vec(0usize..7, 0..60))
}

pub fn mbc_extension_case() -> impl Strategy<Value = (usize, u64, usize)> {
    (2usize..=8, any::<u64>(), 1usize..8)
}

pub fn normalized(q: &Question, spec: &VotingMethodSpec, ballots: &[RawBallotInput]) -> Vec<ScoreVector> {
    ballots
        .iter()
        .map(|b| normalize_scores(q, spec, b).expect("strategy emits valid ballots"))
        .collect()
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

pub fn realized_scores_are_admissible((m, n, ballots): Election) -> Result<(), TestCaseError> {
    let spec = spec_for(m);
    let q = question(n, vec![spec.clone()]);
    for sv in normalized(&q, &spec, &ballots) {
        prop_assert_eq!(sv.len(), n);
        prop_assert!(sv.is_admissible(&spec, n), "{:?}", sv);
        if m == MethodId::Mbc {
            for s in &sv.scores {
                prop_assert!((s * int(n as i64)).is_integer() && *s >= int(0) && *s <= int(1));
            }
        }
    }
    Ok(())
}

pub fn shares_sum_to_one_hundred((m, n, ballots): Election) -> Result<(), TestCaseError> {
    let spec = spec_for(m);
    let q = question(n, vec![spec.clone()]);
    let t = aggregate(&q, &spec, &normalized(&q, &spec, &ballots)).unwrap();
    match &t.shares {
        Some(shares) => prop_assert_eq!(shares.iter().copied().sum::<Rational>(), int(100)),
        None => prop_assert!(t.aggregates.iter().all(|a| a.is_zero())),
    }
    // ranking partitions the options with strictly decreasing group values
    let flat: Vec<&OptionId> = t.ranking.iter().flatten().collect();
    prop_assert_eq!(flat.len(), n);
    let value = |o: &OptionId| t.aggregates[q.option_index(o).unwrap()];
    for pair in t.ranking.windows(2) {
        prop_assert!(value(&pair[0][0]) > value(&pair[1][0]));
    }
    for group in &t.ranking {
        prop_assert!(group.iter().all(|o| value(o) == value(&group[0])));
    }
    Ok(())
}

pub fn aggregation_ignores_ballot_order(((m, n, ballots), seed): (Election, u64)) -> Result<(), TestCaseError> {
    let spec = spec_for(m);
    let q = question(n, vec![spec.clone()]);
    let reordered = shuffled(&ballots, seed);
    prop_assert_eq!(
        aggregate(&q, &spec, &normalized(&q, &spec, &ballots)).unwrap(),
        aggregate(&q, &spec, &normalized(&q, &spec, &reordered)).unwrap()
    );
    Ok(())
}

pub fn relabeling_permutes_aggregates(((m, n, ballots), seed): (Election, u64)) -> Result<(), TestCaseError> {
    let spec = spec_for(m);
    let q = question(n, vec![spec.clone()]);
    let perm = shuffled(&(0..n).collect::<Vec<_>>(), seed);
    // the relabeled question lists the same options in permuted canonical order
    let mut relabeled = q.clone();
    relabeled.options = perm.iter().map(|&i| q.options[i].clone()).collect();
    let a = aggregate(&q, &spec, &normalized(&q, &spec, &ballots)).unwrap();
    let b = aggregate(&relabeled, &spec, &normalized(&relabeled, &spec, &ballots)).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        prop_assert_eq!(b.aggregates[j], a.aggregates[i]);
        if let (Some(sa), Some(sb)) = (&a.shares, &b.shares) {
            prop_assert_eq!(sb[j], sa[i]);
        }
    }
    let sets = |t: &TallyResult| {
        t.ranking
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort();
                g
            })
            .collect::<Vec<_>>()
    };
    prop_assert_eq!(sets(&a), sets(&b));
    Ok(())
}

pub fn mv_tally_is_plurality_count((n, picks): (usize, Vec<usize>)) -> Result<(), TestCaseError> {
    let spec = VotingMethodSpec::mv();
    let q = question(n, vec![spec.clone()]);
    let ballots: Vec<RawBallotInput> = picks
        .iter()
        .map(|p| RawBallotInput::SingleChoice(format!("o{}", p % n + 1).into()))
        .collect();
    let t = aggregate(&q, &spec, &normalized(&q, &spec, &ballots)).unwrap();
    for i in 0..n {
        let count = picks.iter().filter(|p| *p % n == i).count() as i64;
        prop_assert_eq!(t.aggregates[i], int(count));
    }
    Ok(())
}

/// Ranking one more option raises every already-ranked option by `1/n`.
pub fn mbc_rewards_longer_rankings((n, seed, m): (usize, u64, usize)) -> Result<(), TestCaseError> {
    let m = m.min(n - 1);
    let spec = VotingMethodSpec::mbc();
    let q = question(n, vec![spec.clone()]);
    let ids = shuffled(&q.option_ids(), seed);
    let short = normalize_scores(&q, &spec, &RawBallotInput::RankedSubset(ids[..m].to_vec())).unwrap();
    let long = normalize_scores(&q, &spec, &RawBallotInput::RankedSubset(ids[..=m].to_vec())).unwrap();
    for o in &ids[..m] {
        let i = q.option_index(o).unwrap();
        prop_assert_eq!(long.scores[i], short.scores[i] + frac(1, n as i64));
    }
    let added = q.option_index(&ids[m]).unwrap();
    prop_assert!(long.scores[added] > short.scores[added]);
    Ok(())
}

/// Runs one property for `cases` random inputs with a fixed seed.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    property: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(
        proptest::test_runner::RngAlgorithm::ChaCha,
    ));
    runner.run(&strategy, property).map_err(|e| match e {
        TestError::Fail(reason, value) => format!("{reason} for {value:?}"),
        TestError::Abort(reason) => format!("aborted: {reason}"),
    })
}

/// The six scoring properties by name, each run for `cases` inputs.
pub fn suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("mbc monotone under ranking extension", check(cases, mbc_extension_case(), mbc_rewards_longer_rankings)),
        ("realized scores admissible", check(cases, election(), realized_scores_are_admissible)),
        ("mv tally equals plurality count", check(cases, plurality_case(), mv_tally_is_plurality_count)),
        ("shares sum to exactly 100", check(cases, election(), shares_sum_to_one_hundred)),
        ("aggregation invariant under ballot order", check(cases, election_and_seed(), aggregation_ignores_ballot_order)),
        ("relabeling equivariance", check(cases, election_and_seed(), relabeling_permutes_aggregates)),
    ]
}
