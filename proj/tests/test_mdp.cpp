#include <doctest.h>

#include <cmath>
#include <random>

#include "prc/mdp.hpp"

using namespace prc;

TEST_CASE("build_mdp transition structure") {
    SUBCASE("rows sum to one") {
        ChainParams params;
        const auto mdp = build_mdp(params);
        for (std::size_t s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < 2; ++a) {
                double total = 0.0;
                for (double p : mdp.transition[s][a]) total += p;
                CHECK(std::abs(total - 1.0) <= 1e-12);
            }
    }
    SUBCASE("deterministic advance when d=0, p=1") {
        ChainParams params;
        params.n_states = 3;
        params.d = 0.0;
        params.p = 1.0;
        const auto mdp = build_mdp(params);
        for (std::size_t s = 0; s < 3; ++s) CHECK(mdp.transition[s][0][s + 1] == 1.0);
    }
    SUBCASE("worked two-state example") {
        ChainParams params;
        params.n_states = 2;
        params.d = 0.5;
        params.p = 0.6;
        const auto mdp = build_mdp(params);
        CHECK(mdp.transition[0][0][mdp.dropout] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(mdp.transition[0][0][1] == doctest::Approx(0.3).epsilon(1e-15));
        CHECK(mdp.transition[0][0][0] == doctest::Approx(0.2).epsilon(1e-15));
        // From the last progress state, advancing enters the goal.
        CHECK(mdp.transition[1][0][mdp.goal] == doctest::Approx(0.3).epsilon(1e-15));
    }
    SUBCASE("invalid parameters rejected") {
        ChainParams params;
        params.gamma = 1.0;
        CHECK_THROWS(build_mdp(params));
        params.gamma = 0.9;
        params.p = 0.0;
        CHECK_THROWS(build_mdp(params));
        params.p = 0.5;
        params.d = 1.0;
        CHECK_THROWS(build_mdp(params));
    }
}

TEST_CASE("value iteration degenerate policies") {
    SUBCASE("gamma=0 with positive cost rests everywhere") {
        ChainParams params;
        params.gamma = 0.0;
        params.pt_cost = 0.05;
        const auto sol = value_iteration(build_mdp(params), 0.0);
        for (auto a : sol.policy) CHECK(a == Action::Rest);
    }
    SUBCASE("free therapy with no dropout exercises everywhere") {
        ChainParams params;
        params.gamma = 0.9;
        params.pt_cost = 0.0;
        params.d = 0.0;
        const auto sol = value_iteration(build_mdp(params), params.gamma);
        for (auto a : sol.policy) CHECK(a == Action::Pt);
    }
    SUBCASE("zero cost and zero gamma ties toward REST") {
        ChainParams params;
        params.gamma = 0.0;
        params.pt_cost = 0.0;
        const auto sol = value_iteration(build_mdp(params), 0.0);
        for (auto a : sol.policy) CHECK(a == Action::Rest);
    }
}

TEST_CASE("value iteration agrees with exhaustive policy search") {
    SUBCASE("all five standard patient profiles at N=10") {
        for (auto t : {PatientType::UnderConfident, PatientType::OverConfident, PatientType::Myopic,
                       PatientType::FarSighted, PatientType::Stubborn}) {
            const auto profile = PatientProfile::standard(t);
            const auto mdp = build_mdp(profile.initial);
            const auto fast = value_iteration(mdp, profile.initial.gamma);
            const auto slow = brute_force_policy_search(mdp, profile.initial.gamma);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                CHECK(std::abs(fast.values[s] - slow.values[s]) <= 1e-6);
                CHECK(fast.policy[s] == slow.policy[s]);
            }
        }
    }
    SUBCASE("random parameter draws") {
        std::mt19937_64 rng(1234);
        std::uniform_real_distribution<double> gamma(0.0, 0.95), p(0.05, 1.0), d(0.0, 0.9),
            cost(0.0, 0.3);
        std::uniform_int_distribution<std::size_t> n(1, 10);
        for (int trial = 0; trial < 50; ++trial) {
            ChainParams params;
            params.n_states = n(rng);
            params.gamma = gamma(rng);
            params.p = p(rng);
            params.d = d(rng);
            params.pt_cost = cost(rng);
            const auto mdp = build_mdp(params);
            const auto fast = value_iteration(mdp, params.gamma);
            const auto slow = brute_force_policy_search(mdp, params.gamma);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                CHECK(std::abs(fast.values[s] - slow.values[s]) <= 1e-6);
                CHECK(fast.policy[s] == slow.policy[s]);
            }
        }
    }
    SUBCASE("single-state chain") {
        ChainParams params;
        params.n_states = 1;
        const auto mdp = build_mdp(params);
        const auto fast = value_iteration(mdp, params.gamma);
        const auto slow = brute_force_policy_search(mdp, params.gamma);
        CHECK(std::abs(fast.values[0] - slow.values[0]) <= 1e-6);
        CHECK(fast.policy[0] == slow.policy[0]);
    }
}

TEST_CASE("PT set grows with gamma") {
    // With cost but no dropout risk, patience can only enlarge the set of
    // states where exercising is optimal.
    std::size_t prev = 0;
    for (double g : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95}) {
        ChainParams params;
        params.gamma = g;
        params.d = 0.0;
        params.pt_cost = 0.05;
        const auto sol = value_iteration(build_mdp(params), g);
        const std::size_t count = pt_state_count(sol.policy);
        CHECK(count >= prev);
        prev = count;
    }
}

TEST_CASE("intervention classification") {
    CHECK(classify_intervention("focus on your long-term recovery") ==
          std::set<InterventionTag>{InterventionTag::LongTerm});
    CHECK(classify_intervention("PT is proven effective") ==
          std::set<InterventionTag>{InterventionTag::Efficacy});
    CHECK(classify_intervention("hello").empty());
    CHECK(classify_intervention("Long-Term gains are PROVEN") ==
          std::set<InterventionTag>{InterventionTag::LongTerm, InterventionTag::Efficacy});

    SUBCASE("wordlists come from the config") {
        ClassifierConfig cfg;
        cfg.long_term_keywords = {"marathon"};
        cfg.efficacy_keywords = {};
        CHECK(classify_intervention("think of the marathon", cfg) ==
              std::set<InterventionTag>{InterventionTag::LongTerm});
        CHECK(classify_intervention("focus on your long-term recovery", cfg).empty());
    }
}

TEST_CASE("parameter updates") {
    ChainParams params;
    params.gamma = 0.10;
    params.p = 0.6;
    params.d = 0.1;

    CHECK(update_params(params, {}).gamma == params.gamma);

    SUBCASE("long-term raises gamma") {
        const auto out = update_params(params, {InterventionTag::LongTerm});
        CHECK(out.gamma == doctest::Approx(0.15).epsilon(1e-12));
        CHECK(out.p == params.p);
    }
    SUBCASE("efficacy raises p and lowers d") {
        const auto out = update_params(params, {InterventionTag::Efficacy});
        CHECK(out.p == doctest::Approx(0.65).epsilon(1e-12));
        CHECK(out.d == doctest::Approx(0.05).epsilon(1e-12));
    }
    SUBCASE("stubbornness scales the step") {
        const auto out = update_params(params, {InterventionTag::LongTerm}, 0.5);
        CHECK(out.gamma == doctest::Approx(0.125).epsilon(1e-12));
    }
    SUBCASE("clamping at the range ends") {
        ChainParams high = params;
        high.gamma = 0.98;
        CHECK(update_params(high, {InterventionTag::LongTerm}).gamma == 0.99);
        ChainParams low = params;
        low.d = 0.02;
        CHECK(update_params(low, {InterventionTag::Efficacy}).d == 0.01);
    }
    SUBCASE("parameters stay legal under any tag sequence") {
        std::mt19937_64 rng(8);
        ChainParams current = params;
        for (int step = 0; step < 200; ++step) {
            std::set<InterventionTag> tags;
            if (rng() & 1) tags.insert(InterventionTag::LongTerm);
            if (rng() & 1) tags.insert(InterventionTag::Efficacy);
            current = update_params(current, tags);
            CHECK(current.gamma < 1.0);
            CHECK(current.p <= 0.99);
            CHECK(current.d >= 0.01);
            CHECK_NOTHROW(current.validate());
        }
    }
}

TEST_CASE("simulation runs") {
    const std::string push =
        "Keep your long-term recovery in focus; this therapy is proven effective.";

    SUBCASE("combined schedule drives far-sighted patient to all-PT") {
        const auto profile = PatientProfile::standard(PatientType::FarSighted);
        const auto t = run_simulation(profile, 7, scripted_agent({push}));
        REQUIRE(t.rounds.size() == 7);
        const auto& final_policy = t.rounds.back().policy_after;
        CHECK(pt_state_count(final_policy) == final_policy.size());

        // Replaying the updates by hand reproduces the transcript.
        ChainParams params = profile.initial;
        for (const auto& r : t.rounds) {
            params = update_params(params, classify_intervention(push),
                                   profile.stubbornness_multiplier);
            CHECK(params.gamma == doctest::Approx(r.params_after.gamma).epsilon(1e-15));
            CHECK(params.p == doctest::Approx(r.params_after.p).epsilon(1e-15));
            CHECK(params.d == doctest::Approx(r.params_after.d).epsilon(1e-15));
            const auto sol = value_iteration(build_mdp(params), params.gamma);
            CHECK(sol.policy == r.policy_after);
        }
    }
    SUBCASE("no tags: constant parameters and policy") {
        const auto profile = PatientProfile::standard(PatientType::Myopic);
        const auto t = run_simulation(profile, 5, scripted_agent({"hello there"}));
        for (const auto& r : t.rounds) {
            CHECK(r.tags.empty());
            CHECK(r.params_after.gamma == profile.initial.gamma);
            CHECK(r.policy_after == t.rounds.front().policy_after);
        }
    }
    SUBCASE("fixed seed reproduces a byte-identical transcript") {
        const auto profile = PatientProfile::standard(PatientType::Stubborn);
        const auto a = run_simulation(profile, 7, scripted_agent({push, "hello"}), 42);
        const auto b = run_simulation(profile, 7, scripted_agent({push, "hello"}), 42);
        CHECK(to_json(a).dump() == to_json(b).dump());
    }
    SUBCASE("stubbornness halves every step") {
        const auto normal = run_simulation(PatientProfile::standard(PatientType::Myopic), 3,
                                           scripted_agent({push}));
        const auto stubborn = run_simulation(PatientProfile::standard(PatientType::Stubborn), 3,
                                             scripted_agent({push}));
        // Same initial (gamma, p, d); the stubborn patient moves half as far.
        const double normal_step =
            normal.rounds[0].params_after.gamma - normal.rounds[0].params_before.gamma;
        const double stubborn_step =
            stubborn.rounds[0].params_after.gamma - stubborn.rounds[0].params_before.gamma;
        CHECK(stubborn_step == doctest::Approx(normal_step / 2).epsilon(1e-12));
    }
}

TEST_CASE("standard profiles carry the documented initial parameters") {
    auto check = [](PatientType t, double g, double p, double d) {
        const auto prof = PatientProfile::standard(t);
        CHECK(prof.initial.gamma == g);
        CHECK(prof.initial.p == p);
        CHECK(prof.initial.d == d);
    };
    check(PatientType::UnderConfident, 0.6, 0.1, 0.1);
    check(PatientType::OverConfident, 0.6, 0.9, 0.1);
    check(PatientType::Myopic, 0.1, 0.6, 0.1);
    check(PatientType::FarSighted, 0.9, 0.6, 0.1);
    check(PatientType::Stubborn, 0.1, 0.6, 0.1);
    CHECK(PatientProfile::standard(PatientType::Stubborn).stubbornness_multiplier == 0.5);
}
