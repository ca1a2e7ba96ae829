#pragma once

// Independent brute-force references. These deliberately avoid the library's
// inference path: everything is computed by enumerating the full joint table.

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "prc/concept_model.hpp"
#include "prc/dist.hpp"

namespace prc::oracle {

/// Posterior by full (theta, z) joint enumeration: build every row of
/// P(theta, z), keep rows whose z contains x, condition on the event.
inline std::optional<Dist> brute_force_posterior(const ConceptSpace& space, const TokenString& x,
                                                 MatchMode mode = MatchMode::Subsequence) {
    struct Row {
        std::string concept_id;
        double mass;
        bool kept;
    };
    std::vector<Row> rows;
    for (const auto& c : space.concepts())
        for (const auto& [z, pz] : c.output_dist.table())
            rows.push_back({c.id, space.prior().at(c.id) * pz, matches(x, z, mode)});

    double kept_mass = 0.0;
    for (const auto& r : rows)
        if (r.kept) kept_mass += r.mass;
    if (kept_mass <= 0.0) return std::nullopt;

    Dist::Table out;
    for (const auto& c : space.concepts()) out[c.id] = 0.0;
    for (const auto& r : rows)
        if (r.kept) out[r.concept_id] += r.mass / kept_mass;
    return Dist(out);
}

struct SpaceGenConfig {
    std::size_t max_concepts = 8;
    std::size_t alphabet_size = 4;   // symbols 'a'.. 'a'+size-1
    std::size_t max_string_len = 6;
    std::size_t max_support = 4;     // strings per concept
};

/// Random small concept space for property tests. Supports are
/// rejection-sampled until pairwise disjoint across concepts.
inline ConceptSpace random_space(std::mt19937_64& rng, const SpaceGenConfig& cfg = {}) {
    std::uniform_int_distribution<std::size_t> n_concepts(1, cfg.max_concepts);
    std::uniform_int_distribution<std::size_t> n_strings(1, cfg.max_support);
    std::uniform_int_distribution<std::size_t> str_len(1, cfg.max_string_len);
    std::uniform_int_distribution<int> symbol(0, static_cast<int>(cfg.alphabet_size) - 1);
    std::uniform_real_distribution<double> weight(0.1, 1.0);

    const std::size_t k = n_concepts(rng);
    // Strings already assigned to other concepts. Disjointness here is the
    // subsequence-free kind: no string of one concept may contain (or be
    // contained in) a string of another, otherwise full support strings
    // would not identify their concept.
    std::vector<std::string> other_concepts;
    std::vector<Concept> concepts;
    Dist::Table prior_w;
    for (std::size_t i = 0; i < k; ++i) {
        Dist::Table support;
        const std::size_t m = n_strings(rng);
        std::size_t attempts = 0;
        while (support.size() < m && attempts < 5000) {
            ++attempts;
            std::string z;
            const std::size_t len = str_len(rng);
            for (std::size_t j = 0; j < len; ++j)
                z.push_back(static_cast<char>('a' + symbol(rng)));
            if (support.count(z)) continue;
            bool clash = false;
            for (const auto& w : other_concepts)
                if (is_subsequence(z, w) || is_subsequence(w, z)) {
                    clash = true;
                    break;
                }
            if (clash) continue;
            support[z] = weight(rng);
        }
        if (support.empty()) continue;  // alphabet exhausted; smaller space
        for (const auto& [z, w] : support) other_concepts.push_back(z);
        const std::string id = "theta" + std::to_string(i);
        concepts.push_back({id, normalize(support), {}});
        prior_w[id] = weight(rng);
    }
    return ConceptSpace(std::move(concepts), normalize(prior_w));
}

}  // namespace prc::oracle
