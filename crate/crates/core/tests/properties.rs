use num_traits::Zero;
use proptest::prelude::*;

use votelab_core::ballot::*;
use votelab_core::consistency::{build_rank_profile, consistency_report, RankProfile};
use votelab_core::ids::{OptionId, QuestionId};
use votelab_core::rational::{self, frac, int, Rational};
use votelab_testkit::scoring::{self, election, election_and_seed, normalized, option_names, question, spec_for};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn realized_scores_are_admissible(e in election()) {
        scoring::realized_scores_are_admissible(e)?;
    }

    #[test]
    fn shares_sum_to_exactly_one_hundred(e in election()) {
        scoring::shares_sum_to_one_hundred(e)?;
    }

    #[test]
    fn aggregation_ignores_ballot_order(c in election_and_seed()) {
        scoring::aggregation_ignores_ballot_order(c)?;
    }

    #[test]
    fn relabeling_permutes_aggregates(c in election_and_seed()) {
        scoring::relabeling_permutes_aggregates(c)?;
    }

    #[test]
    fn mv_tally_is_plurality_count(c in scoring::plurality_case()) {
        scoring::mv_tally_is_plurality_count(c)?;
    }

    #[test]
    fn mbc_rewards_longer_rankings(c in scoring::mbc_extension_case()) {
        scoring::mbc_rewards_longer_rankings(c)?;
    }

    #[test]
    fn zero_ballots_never_change_the_ranking((m, n, ballots) in election(), extra in 1usize..5) {
        let spec = spec_for(m);
        let q = question(n, vec![spec.clone()]);
        let mut scores = normalized(&q, &spec, &ballots);
        let before = aggregate(&q, &spec, &scores).unwrap();
        scores.extend(std::iter::repeat_n(ScoreVector::zeros(m, n), extra));
        let after = aggregate(&q, &spec, &scores).unwrap();
        prop_assert_eq!(before.ranking, after.ranking);
        prop_assert_eq!(before.shares, after.shares);
    }

    #[test]
    fn inadmissible_levels_are_rejected(n in 2usize..=6, numer in 0i64..100, denom in 1i64..100) {
        let level = frac(numer, denom);
        for spec in [VotingMethodSpec::cav(), VotingMethodSpec::sv()] {
            let q = question(n, vec![spec.clone()]);
            let mut levels: Vec<(String, Rational)> =
                option_names(n).into_iter().map(|o| (o, Rational::zero())).collect();
            levels[0].1 = level;
            let input = RawBallotInput::PerOptionScore(
                levels.into_iter().map(|(o, l)| (OptionId::from(o), l)).collect(),
            );
            let ok = validate_ballot(&q, &spec, &input).is_ok();
            prop_assert_eq!(ok, spec.score_levels.contains(&level));
        }
    }

    #[test]
    fn rationals_round_trip_through_text(numer in -10_000i64..10_000, denom in 1i64..10_000) {
        let r = frac(numer, denom);
        prop_assert_eq!(rational::parse(&rational::to_fraction_string(&r)).unwrap(), r);
        let json = serde_json::to_string(&RawBallotInput::PerOptionScore(
            [(OptionId::from("o1"), r)].into_iter().collect(),
        )).unwrap();
        let back: RawBallotInput = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, RawBallotInput::PerOptionScore([(OptionId::from("o1"), r)].into_iter().collect()));
    }
}

fn profile_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (2usize..=6, 2usize..=6).prop_flat_map(|(methods, n)| {
        proptest::collection::vec(Just((0..n).collect::<Vec<_>>()).prop_shuffle(), methods)
    })
}

fn to_profile(rankings: &[Vec<usize>], labels: &[String]) -> RankProfile {
    let methods = MethodId::ALL;
    RankProfile::from_rankings(
        QuestionId::from("q"),
        rankings
            .iter()
            .enumerate()
            .map(|(k, r)| (methods[k], r.iter().map(|&i| OptionId::from(labels[i].clone())).collect()))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn consistency_bounds_and_unanimity(rankings in profile_strategy()) {
        let n = rankings[0].len();
        let m = rankings.len() as i64;
        let labels = option_names(n);
        let report = consistency_report(&to_profile(&rankings, &labels));
        for (k, c) in report.per_rank.iter().enumerate() {
            prop_assert!(*c >= frac(1, m) && *c <= int(1));
            prop_assert!((c * int(m)).is_integer());
            let unanimous = rankings.iter().all(|r| r[k] == rankings[0][k]);
            prop_assert_eq!(*c == int(1), unanimous);
        }
        prop_assert_eq!(report.mean, rational::mean(&report.per_rank));
    }

    #[test]
    fn consistency_ignores_labels(rankings in profile_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = rankings[0].len();
        let labels = option_names(n);
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = consistency_report(&to_profile(&rankings, &labels));
        let b = consistency_report(&to_profile(&rankings, &shuffled));
        prop_assert_eq!(a.per_rank, b.per_rank);
    }

    #[test]
    fn duplicating_a_method_keeps_mode_counts(rankings in profile_strategy(), pick in any::<prop::sample::Index>()) {
        prop_assume!(rankings.len() < MethodId::ALL.len());
        let n = rankings[0].len();
        let labels = option_names(n);
        let before = consistency_report(&to_profile(&rankings, &labels));
        let mut more = rankings.clone();
        more.push(rankings[pick.index(rankings.len())].clone());
        let after = consistency_report(&to_profile(&more, &labels));
        for k in 1..=n {
            prop_assert!(after.agreeing_methods(k) >= before.agreeing_methods(k));
            prop_assert_eq!(after.per_rank[k - 1], frac(after.agreeing_methods(k), more.len() as i64));
        }
    }
}

#[test]
fn rank_profile_rejects_duplicate_methods() {
    let spec = VotingMethodSpec::mv();
    let q = question(3, vec![spec.clone()]);
    let t = aggregate(&q, &spec, &[]).unwrap();
    assert!(build_rank_profile(&[t.clone(), t]).is_err());
}
