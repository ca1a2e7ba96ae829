#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prc/dist.hpp"

namespace prc {

// A token string is a finite sequence of single-character symbols from a
// finite alphabet. Character-per-token keeps the synthetic instances exact.
using TokenString = std::string;

inline constexpr std::size_t kDefaultMaxTokens = 16;

enum class MatchMode { Subsequence, Substring };

/// True iff x can be obtained from z by deleting tokens without reordering.
/// The empty string matches everything.
inline bool is_subsequence(const TokenString& x, const TokenString& z) {
    std::size_t i = 0;
    for (std::size_t j = 0; i < x.size() && j < z.size(); ++j)
        if (x[i] == z[j]) ++i;
    return i == x.size();
}

/// Contiguous variant: x must appear in z as a block.
inline bool is_substring(const TokenString& x, const TokenString& z) {
    return x.empty() || z.find(x) != TokenString::npos;
}

inline bool matches(const TokenString& x, const TokenString& z, MatchMode mode) {
    return mode == MatchMode::Subsequence ? is_subsequence(x, z) : is_substring(x, z);
}

/// A latent concept: an explicit distribution over output strings, plus
/// free-form attribute labels carried as metadata only.
struct Concept {
    std::string id;
    Dist output_dist;
    std::vector<std::string> attributes;
};

/// Finite set of prompt-side concepts with a prior. Supports must be
/// pairwise disjoint; this is checked at construction.
class ConceptSpace {
public:
    ConceptSpace(std::vector<Concept> concepts, Dist prior,
                 std::size_t max_tokens = kDefaultMaxTokens)
        : concepts_(std::move(concepts)), prior_(std::move(prior)) {
        for (const auto& c : concepts_) {
            if (!prior_.table().count(c.id))
                throw std::invalid_argument("ConceptSpace: prior missing concept " + c.id);
            for (const auto& [z, p] : c.output_dist.table()) {
                if (p <= 0.0)
                    throw std::invalid_argument("ConceptSpace: zero-mass support string in " + c.id);
                if (z.size() > max_tokens)
                    throw std::invalid_argument("ConceptSpace: string exceeds max length in " + c.id);
            }
        }
        if (prior_.size() != concepts_.size())
            throw std::invalid_argument("ConceptSpace: prior and concept list disagree");
        for (std::size_t i = 0; i < concepts_.size(); ++i)
            for (std::size_t j = i + 1; j < concepts_.size(); ++j)
                for (const auto& [z, p] : concepts_[i].output_dist.table())
                    if (concepts_[j].output_dist.at(z) > 0.0)
                        throw std::invalid_argument(
                            "ConceptSpace: supports of " + concepts_[i].id + " and " +
                            concepts_[j].id + " share string '" + z + "'");
    }

    const std::vector<Concept>& concepts() const { return concepts_; }
    const Dist& prior() const { return prior_; }

    const Concept& concept_by_id(const std::string& id) const {
        for (const auto& c : concepts_)
            if (c.id == id) return c;
        throw std::out_of_range("ConceptSpace: unknown concept " + id);
    }

private:
    std::vector<Concept> concepts_;
    Dist prior_;
};

/// P(X = x | theta): total mass of theta's support strings containing x.
inline double likelihood(const ConceptSpace& space, const std::string& concept_id,
                         const TokenString& x, MatchMode mode = MatchMode::Subsequence) {
    const Concept& c = space.concept_by_id(concept_id);
    double total = 0.0;
    for (const auto& [z, p] : c.output_dist.table())
        if (matches(x, z, mode)) total += p;
    return total;
}

/// Bayes posterior over prompt-side concepts. Empty optional means no
/// concept's support contains x; callers map that to the degenerate
/// response concept.
inline std::optional<Dist> posterior(const ConceptSpace& space, const TokenString& x,
                                     MatchMode mode = MatchMode::Subsequence) {
    // Every support string contains the empty prompt, so the posterior is
    // the prior, exactly.
    if (x.empty()) return space.prior();
    Dist::Table weights;
    double total = 0.0;
    for (const auto& c : space.concepts()) {
        double w = likelihood(space, c.id, x, mode) * space.prior().at(c.id);
        weights[c.id] = w;
        total += w;
    }
    if (total <= 0.0) return std::nullopt;
    return normalize(weights);
}

/// Map from prompt-side to response-side concept ids, with a dedicated
/// degenerate target for unmatched prompts. Injectivity is a property of a
/// particular map, not a requirement.
class ConceptMap {
public:
    ConceptMap(std::map<std::string, std::string> mapping, std::string degenerate_id)
        : mapping_(std::move(mapping)), degenerate_(std::move(degenerate_id)) {
        for (const auto& [from, to] : mapping_)
            if (to == degenerate_)
                throw std::invalid_argument("ConceptMap: degenerate id is an image of " + from);
    }

    const std::string& apply(const std::string& concept_id) const {
        auto it = mapping_.find(concept_id);
        if (it == mapping_.end())
            throw std::out_of_range("ConceptMap: unmapped concept " + concept_id);
        return it->second;
    }

    const std::string& degenerate_id() const { return degenerate_; }
    const std::map<std::string, std::string>& mapping() const { return mapping_; }

    bool is_injective() const {
        std::vector<std::string> images;
        for (const auto& [from, to] : mapping_) images.push_back(to);
        std::sort(images.begin(), images.end());
        return std::adjacent_find(images.begin(), images.end()) == images.end();
    }

private:
    std::map<std::string, std::string> mapping_;
    std::string degenerate_;
};

/// Per response-side concept, an explicit distribution over responses.
class ResponseModel {
public:
    explicit ResponseModel(std::map<std::string, Dist> tables) : tables_(std::move(tables)) {}

    const Dist& table(const std::string& concept_id) const {
        auto it = tables_.find(concept_id);
        if (it == tables_.end())
            throw std::out_of_range("ResponseModel: no response table for " + concept_id);
        return it->second;
    }

    const std::map<std::string, Dist>& tables() const { return tables_; }

private:
    std::map<std::string, Dist> tables_;
};

/// Push a posterior over prompt concepts through the concept map. A no-match
/// posterior lands on the degenerate concept as a point mass.
inline Dist push_forward(const std::optional<Dist>& d, const ConceptMap& m) {
    if (!d) return Dist::point_mass(m.degenerate_id());
    Dist::Table out;
    for (const auto& [concept_id, p] : d->table()) out[m.apply(concept_id)] += p;
    return Dist(out);
}

/// Posterior predictive over responses: mixture of per-concept tables.
inline Dist predictive(const Dist& d, const ResponseModel& rm) {
    Dist::Table out;
    for (const auto& [concept_id, p] : d.table()) {
        if (p == 0.0) { rm.table(concept_id); continue; }
        for (const auto& [y, q] : rm.table(concept_id).table()) out[y] += p * q;
    }
    return Dist(out);
}

/// Entropy of the response distribution induced by prompt x.
inline double response_entropy(const ConceptSpace& space, const ConceptMap& m,
                               const ResponseModel& rm, const TokenString& x,
                               MatchMode mode = MatchMode::Subsequence) {
    return entropy_bits(predictive(push_forward(posterior(space, x, mode), m), rm));
}

struct TrajectoryPoint {
    std::size_t t;
    TokenString x;
    double entropy;
};

/// Grow x one token of z at a time (preserving order, per the given
/// position order) and record H(Theta1 | x_t) at every step.
inline std::vector<TrajectoryPoint> entropy_trajectory(const ConceptSpace& space,
                                                       const std::string& target_id,
                                                       const TokenString& z,
                                                       const std::vector<std::size_t>& position_order,
                                                       MatchMode mode = MatchMode::Subsequence) {
    if (space.concept_by_id(target_id).output_dist.at(z) <= 0.0)
        throw std::invalid_argument("entropy_trajectory: '" + z + "' not in support of " + target_id);
    if (position_order.size() != z.size())
        throw std::invalid_argument("entropy_trajectory: order length mismatch");

    std::vector<TrajectoryPoint> out;
    std::vector<bool> included(z.size(), false);
    for (std::size_t t = 0; t <= z.size(); ++t) {
        if (t > 0) included[position_order[t - 1]] = true;
        TokenString x;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (included[i]) x.push_back(z[i]);
        auto post = posterior(space, x, mode);
        out.push_back({t, x, post ? entropy_bits(*post) : 0.0});
    }
    return out;
}

/// Seeded overload: the token-append order is a seeded shuffle of positions.
inline std::vector<TrajectoryPoint> entropy_trajectory(const ConceptSpace& space,
                                                       const std::string& target_id,
                                                       const TokenString& z, std::uint64_t seed,
                                                       MatchMode mode = MatchMode::Subsequence) {
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return entropy_trajectory(space, target_id, z, order, mode);
}

/// H(Theta1 | X) for an explicit input distribution: the expectation of the
/// posterior entropy. Inputs with no matching concept contribute zero (the
/// posterior is degenerate there).
inline double expected_conditional_entropy(const ConceptSpace& space, const Dist& input_dist,
                                           MatchMode mode = MatchMode::Subsequence) {
    double h = 0.0;
    for (const auto& [x, p] : input_dist.table()) {
        if (p == 0.0) continue;
        auto post = posterior(space, x, mode);
        if (post) h += p * entropy_bits(*post);
    }
    return h;
}

}  // namespace prc
