#pragma once

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace prc {

enum class Action { Pt, Rest };

inline std::string to_string(Action a) { return a == Action::Pt ? "PT" : "REST"; }

/// Chain-of-care patient model: N progress states plus an absorbing goal
/// and an absorbing dropout state. PT advances with probability p after
/// surviving disengagement (probability d) at per-step cost c; reaching the
/// goal is worth R, collected one discount step out. REST holds the state
/// at zero reward.
struct ChainParams {
    std::size_t n_states = 10;
    double gamma = 0.9;
    double p = 0.6;          // advance probability under PT
    double d = 0.1;          // disengage probability under PT
    double pt_cost = 0.05;
    double completion_reward = 1.0;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must be in (0,1]");
        if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("d must be in [0,1)");
        if (pt_cost < 0.0) throw std::invalid_argument("pt_cost must be nonnegative");
        if (n_states == 0) throw std::invalid_argument("need at least one state");
    }
};

enum class PatientType { UnderConfident, OverConfident, Myopic, FarSighted, Stubborn };

inline std::string to_string(PatientType t) {
    switch (t) {
        case PatientType::UnderConfident: return "UNDER_CONFIDENT";
        case PatientType::OverConfident: return "OVER_CONFIDENT";
        case PatientType::Myopic: return "MYOPIC";
        case PatientType::FarSighted: return "FAR_SIGHTED";
        case PatientType::Stubborn: return "STUBBORN";
    }
    throw std::logic_error("bad PatientType");
}

inline PatientType patient_type_from_string(const std::string& s) {
    if (s == "UNDER_CONFIDENT") return PatientType::UnderConfident;
    if (s == "OVER_CONFIDENT") return PatientType::OverConfident;
    if (s == "MYOPIC") return PatientType::Myopic;
    if (s == "FAR_SIGHTED") return PatientType::FarSighted;
    if (s == "STUBBORN") return PatientType::Stubborn;
    throw std::invalid_argument("unknown patient type: " + s);
}

struct PatientProfile {
    PatientType type;
    ChainParams initial;
    double stubbornness_multiplier = 1.0;  // in (0,1]

    static PatientProfile standard(PatientType t, std::size_t n_states = 10) {
        PatientProfile prof;
        prof.type = t;
        prof.initial.n_states = n_states;
        switch (t) {
            case PatientType::UnderConfident:
                prof.initial.gamma = 0.6; prof.initial.p = 0.1; prof.initial.d = 0.1; break;
            case PatientType::OverConfident:
                prof.initial.gamma = 0.6; prof.initial.p = 0.9; prof.initial.d = 0.1; break;
            case PatientType::Myopic:
                prof.initial.gamma = 0.1; prof.initial.p = 0.6; prof.initial.d = 0.1; break;
            case PatientType::FarSighted:
                prof.initial.gamma = 0.9; prof.initial.p = 0.6; prof.initial.d = 0.1; break;
            case PatientType::Stubborn:
                prof.initial.gamma = 0.1; prof.initial.p = 0.6; prof.initial.d = 0.1;
                prof.stubbornness_multiplier = 0.5;
                break;
        }
        return prof;
    }
};

/// Explicit tables for the chain MDP. States 0..N-1 are progress states;
/// GOAL (= N) and DROPOUT (= N+1) are absorbing, with fixed terminal values
/// R and 0. Transition rows cover all N+2 states.
struct ChainMdp {
    std::size_t n_states;
    std::size_t goal;
    std::size_t dropout;
    double pt_cost;
    double goal_value;
    // transition[s][action index][s'], for s < n_states; action 0 = PT, 1 = REST
    std::vector<std::vector<std::vector<double>>> transition;
};

inline ChainMdp build_mdp(const ChainParams& params) {
    params.validate();
    const std::size_t n = params.n_states;
    ChainMdp mdp{n, n, n + 1, params.pt_cost, params.completion_reward, {}};
    mdp.transition.assign(n, std::vector<std::vector<double>>(2, std::vector<double>(n + 2, 0.0)));
    for (std::size_t s = 0; s < n; ++s) {
        auto& pt = mdp.transition[s][0];
        pt[mdp.dropout] = params.d;
        pt[s + 1] += (1.0 - params.d) * params.p;           // s+1 == goal when s == n-1
        pt[s] += (1.0 - params.d) * (1.0 - params.p);
        auto& rest = mdp.transition[s][1];
        rest[s] = 1.0;
    }
    return mdp;
}

/// Deterministic stationary policy over the progress states.
using Policy = std::vector<Action>;

struct Solution {
    std::vector<double> values;  // per progress state
    Policy policy;
};

namespace detail {

/// One-step action values under fixed terminal values V(GOAL)=R, V(DROPOUT)=0.
inline std::pair<double, double> q_values(const ChainMdp& mdp, double gamma,
                                          const std::vector<double>& v, std::size_t s) {
    auto expect = [&](const std::vector<double>& row) {
        double e = 0.0;
        for (std::size_t t = 0; t < mdp.n_states; ++t) e += row[t] * v[t];
        e += row[mdp.goal] * mdp.goal_value;
        // dropout contributes 0
        return e;
    };
    const double q_pt = -mdp.pt_cost + gamma * expect(mdp.transition[s][0]);
    const double q_rest = gamma * expect(mdp.transition[s][1]);
    return {q_pt, q_rest};
}

}  // namespace detail

/// Value iteration to sup-norm Bellman residual < tol. Ties break toward
/// REST so "PT strictly preferred" statements stay sharp.
inline Solution value_iteration(const ChainMdp& mdp, double gamma, double tol = 1e-9,
                                std::size_t max_iter = 100000) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
    std::vector<double> v(mdp.n_states, 0.0);
    double residual = 0.0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        residual = 0.0;
        std::vector<double> next(mdp.n_states);
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            const auto [q_pt, q_rest] = detail::q_values(mdp, gamma, v, s);
            next[s] = std::max(q_pt, q_rest);
            residual = std::max(residual, std::abs(next[s] - v[s]));
        }
        v = std::move(next);
        if (residual < tol) break;
    }
    if (residual >= tol)
        throw std::runtime_error("value_iteration: no convergence after max_iter sweeps");
    Policy policy(mdp.n_states, Action::Rest);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto [q_pt, q_rest] = detail::q_values(mdp, gamma, v, s);
        if (q_pt > q_rest) policy[s] = Action::Pt;
    }
    return {std::move(v), std::move(policy)};
}

/// Exact reference: evaluate every deterministic stationary policy and keep
/// the best. Only feasible for small chains.
inline Solution brute_force_policy_search(const ChainMdp& mdp, double gamma) {
    if (mdp.n_states > 12) throw std::invalid_argument("brute force limited to N <= 12");
    const std::size_t n = mdp.n_states;

    auto evaluate = [&](const Policy& pi) {
        std::vector<double> v(n, 0.0);
        for (std::size_t iter = 0; iter < 2000000; ++iter) {
            double residual = 0.0;
            std::vector<double> next(n);
            for (std::size_t s = 0; s < n; ++s) {
                const auto [q_pt, q_rest] = detail::q_values(mdp, gamma, v, s);
                next[s] = pi[s] == Action::Pt ? q_pt : q_rest;
                residual = std::max(residual, std::abs(next[s] - v[s]));
            }
            v = std::move(next);
            if (residual < 1e-13) break;
        }
        return v;
    };

    Solution best;
    bool have_best = false;
    for (std::uint64_t bits = 0; bits < (1ULL << n); ++bits) {
        Policy pi(n);
        for (std::size_t s = 0; s < n; ++s)
            pi[s] = (bits >> s) & 1 ? Action::Pt : Action::Rest;
        auto v = evaluate(pi);
        if (!have_best) {
            best = {v, pi};
            have_best = true;
            continue;
        }
        bool better = false, worse = false;
        for (std::size_t s = 0; s < n; ++s) {
            if (v[s] > best.values[s] + 1e-10) better = true;
            if (v[s] < best.values[s] - 1e-10) worse = true;
        }
        if (better && !worse) best = {v, pi};
    }
    // Re-derive the canonical tie-broken policy from the optimal values.
    for (std::size_t s = 0; s < n; ++s) {
        const auto [q_pt, q_rest] = detail::q_values(mdp, gamma, best.values, s);
        best.policy[s] = q_pt > q_rest ? Action::Pt : Action::Rest;
    }
    return best;
}

enum class InterventionTag { LongTerm, Efficacy };

inline std::string to_string(InterventionTag t) {
    return t == InterventionTag::LongTerm ? "LONG_TERM" : "EFFICACY";
}

struct ClassifierConfig {
    std::vector<std::string> long_term_keywords{"long-term", "long term", "future",
                                                "down the road", "years from now", "lasting"};
    std::vector<std::string> efficacy_keywords{"effective", "efficacy", "proven", "evidence",
                                               "works", "success rate"};
};

/// Scripted keyword classifier over intervention messages. Case-insensitive
/// substring match against the configured wordlists.
inline std::set<InterventionTag> classify_intervention(const std::string& message,
                                                       const ClassifierConfig& cfg = {}) {
    std::string lower = message;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::set<InterventionTag> tags;
    for (const auto& kw : cfg.long_term_keywords)
        if (lower.find(kw) != std::string::npos) tags.insert(InterventionTag::LongTerm);
    for (const auto& kw : cfg.efficacy_keywords)
        if (lower.find(kw) != std::string::npos) tags.insert(InterventionTag::Efficacy);
    return tags;
}

struct UpdateDeltas {
    double gamma = 0.05;
    double p = 0.05;
    double d = 0.05;
};

/// Apply intervention effects, scaled by stubbornness, clamped to legal
/// ranges.
inline ChainParams update_params(const ChainParams& params, const std::set<InterventionTag>& tags,
                                 double stubbornness_multiplier = 1.0,
                                 const UpdateDeltas& deltas = {}) {
    ChainParams out = params;
    const double m = stubbornness_multiplier;
    if (tags.count(InterventionTag::LongTerm))
        out.gamma = std::min(out.gamma + m * deltas.gamma, 0.99);
    if (tags.count(InterventionTag::Efficacy)) {
        out.p = std::min(out.p + m * deltas.p, 0.99);
        out.d = std::max(out.d - m * deltas.d, 0.01);
    }
    return out;
}

/// The app agent sees the conversation so far and the patient's latest
/// optimal policy, never the parameters themselves.
using AppAgent = std::function<std::string(std::size_t round, const std::vector<std::string>& history,
                                           const Policy& visible_policy)>;

/// Fixed message per round (cycled when rounds exceed the script).
inline AppAgent scripted_agent(std::vector<std::string> messages) {
    return [messages = std::move(messages)](std::size_t round, const std::vector<std::string>&,
                                            const Policy&) {
        if (messages.empty()) return std::string{};
        return messages[round % messages.size()];
    };
}

struct RoundRecord {
    std::size_t round;
    std::string message;
    std::set<InterventionTag> tags;
    ChainParams params_before;
    ChainParams params_after;
    Policy policy_after;
};

struct Transcript {
    PatientProfile profile;
    UpdateDeltas deltas;
    std::uint64_t seed = 0;
    std::vector<RoundRecord> rounds;
};

inline nlohmann::json to_json(const ChainParams& p) {
    return {{"n_states", p.n_states}, {"gamma", p.gamma},   {"p", p.p},
            {"d", p.d},               {"pt_cost", p.pt_cost}, {"completion_reward", p.completion_reward}};
}

inline nlohmann::json to_json(const Transcript& t) {
    nlohmann::json j;
    j["patient_type"] = to_string(t.profile.type);
    j["stubbornness_multiplier"] = t.profile.stubbornness_multiplier;
    j["initial_params"] = to_json(t.profile.initial);
    j["deltas"] = {{"gamma", t.deltas.gamma}, {"p", t.deltas.p}, {"d", t.deltas.d}};
    j["seed"] = t.seed;
    j["rounds"] = nlohmann::json::array();
    for (const auto& r : t.rounds) {
        nlohmann::json jr;
        jr["round"] = r.round;
        jr["message"] = r.message;
        jr["tags"] = nlohmann::json::array();
        for (auto tag : r.tags) jr["tags"].push_back(to_string(tag));
        jr["params_before"] = to_json(r.params_before);
        jr["params_after"] = to_json(r.params_after);
        jr["policy_after"] = nlohmann::json::array();
        for (auto a : r.policy_after) jr["policy_after"].push_back(to_string(a));
        j["rounds"].push_back(jr);
    }
    return j;
}

/// Multi-round intervention loop: message, classify, update, re-solve.
inline Transcript run_simulation(const PatientProfile& profile, std::size_t rounds,
                                 const AppAgent& agent, std::uint64_t seed = 0,
                                 const ClassifierConfig& classifier = {},
                                 const UpdateDeltas& deltas = {}) {
    Transcript transcript{profile, deltas, seed, {}};
    ChainParams params = profile.initial;
    std::vector<std::string> history;
    Policy visible = value_iteration(build_mdp(params), params.gamma).policy;
    for (std::size_t r = 0; r < rounds; ++r) {
        const std::string message = agent(r, history, visible);
        const auto tags = classify_intervention(message, classifier);
        const ChainParams before = params;
        params = update_params(params, tags, profile.stubbornness_multiplier, deltas);
        visible = value_iteration(build_mdp(params), params.gamma).policy;
        transcript.rounds.push_back({r, message, tags, before, params, visible});
        history.push_back(message);
    }
    return transcript;
}

inline std::size_t pt_state_count(const Policy& pi) {
    return static_cast<std::size_t>(std::count(pi.begin(), pi.end(), Action::Pt));
}

}  // namespace prc
