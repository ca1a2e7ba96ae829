#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace prc {

enum class PerturbKind { Mask, Corrupt, Prepend, Append, Insert };

inline std::string to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::Mask: return "MASK";
        case PerturbKind::Corrupt: return "CORRUPT";
        case PerturbKind::Prepend: return "PREPEND";
        case PerturbKind::Append: return "APPEND";
        case PerturbKind::Insert: return "INSERT";
    }
    throw std::logic_error("bad PerturbKind");
}

inline PerturbKind perturb_kind_from_string(const std::string& s) {
    if (s == "MASK") return PerturbKind::Mask;
    if (s == "CORRUPT") return PerturbKind::Corrupt;
    if (s == "PREPEND") return PerturbKind::Prepend;
    if (s == "APPEND") return PerturbKind::Append;
    if (s == "INSERT") return PerturbKind::Insert;
    throw std::invalid_argument("unknown perturbation kind: " + s);
}

/// round(f * n), half away from zero, so counts are portable.
inline std::size_t fraction_to_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

/// Whitespace-delimited word tokens. Joining with single spaces is the
/// reconstruction rule; the original spacing is not preserved.
inline std::vector<std::string> tokenize_words(const std::string& prompt) {
    std::vector<std::string> out;
    std::istringstream in(prompt);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::string join_words(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

/// Seeded token-index selection, nested across fractions: the set at a
/// smaller fraction is always a subset of the set at a larger one, so
/// changes across noise levels cannot come from re-randomized selections.
class PerturbationPlan {
public:
    PerturbationPlan(std::size_t token_count, std::vector<double> fractions, std::uint64_t seed,
                     PerturbKind kind)
        : token_count_(token_count), fractions_(std::move(fractions)), seed_(seed), kind_(kind) {
        if (!std::is_sorted(fractions_.begin(), fractions_.end()))
            throw std::invalid_argument("PerturbationPlan: fractions must be ascending");
        for (double f : fractions_)
            if (f < 0.0 || f > 1.0)
                throw std::invalid_argument("PerturbationPlan: fraction out of [0,1]");

        std::vector<std::size_t> order(token_count_);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(seed_);
        std::shuffle(order.begin(), order.end(), rng);
        // A prefix of one fixed shuffle makes the sets nested by construction.
        for (double f : fractions_) {
            const std::size_t k = fraction_to_count(f, token_count_);
            sets_.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        }
    }

    std::size_t token_count() const { return token_count_; }
    const std::vector<double>& fractions() const { return fractions_; }
    std::uint64_t seed() const { return seed_; }
    PerturbKind kind() const { return kind_; }

    const std::set<std::size_t>& index_set(double fraction) const {
        for (std::size_t i = 0; i < fractions_.size(); ++i)
            if (fractions_[i] == fraction) return sets_[i];
        throw std::invalid_argument("PerturbationPlan: fraction not in plan");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed_;
        j["kind"] = to_string(kind_);
        j["token_count"] = token_count_;
        j["fractions"] = fractions_;
        j["sets"] = nlohmann::json::array();
        for (const auto& s : sets_) j["sets"].push_back(std::vector<std::size_t>(s.begin(), s.end()));
        return j;
    }

    // The plan file, not the PRNG stream, is the portability boundary.
    static PerturbationPlan from_json(const nlohmann::json& j) {
        PerturbationPlan plan(j.at("token_count").get<std::size_t>(),
                              j.at("fractions").get<std::vector<double>>(),
                              j.at("seed").get<std::uint64_t>(),
                              perturb_kind_from_string(j.at("kind").get<std::string>()));
        std::vector<std::set<std::size_t>> sets;
        for (const auto& js : j.at("sets")) {
            auto v = js.get<std::vector<std::size_t>>();
            sets.emplace_back(v.begin(), v.end());
        }
        plan.sets_ = std::move(sets);
        return plan;
    }

private:
    std::size_t token_count_;
    std::vector<double> fractions_;
    std::uint64_t seed_;
    PerturbKind kind_;
    std::vector<std::set<std::size_t>> sets_;
};

inline PerturbationPlan build_plan(std::size_t token_count, std::vector<double> fractions,
                                   std::uint64_t seed, PerturbKind kind) {
    return PerturbationPlan(token_count, std::move(fractions), seed, kind);
}

/// Replace each selected word token with a single space; unselected tokens
/// are untouched.
inline std::string apply_mask(const std::string& prompt, const PerturbationPlan& plan,
                              double fraction) {
    auto tokens = tokenize_words(prompt);
    const auto& selected = plan.index_set(fraction);
    for (std::size_t i : selected)
        if (i < tokens.size()) tokens[i] = " ";
    return join_words(tokens);
}

inline std::string random_lowercase(std::size_t len, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> letter(0, 25);
    std::string s(len, 'a');
    for (auto& c : s) c = static_cast<char>('a' + letter(rng));
    return s;
}

/// Replace each selected word token with a random lowercase string of the
/// same character length, seeded by (plan seed, token index).
inline std::string apply_corrupt(const std::string& prompt, const PerturbationPlan& plan,
                                 double fraction) {
    auto tokens = tokenize_words(prompt);
    const auto& selected = plan.index_set(fraction);
    for (std::size_t i : selected) {
        if (i >= tokens.size()) continue;
        std::mt19937_64 rng(plan.seed() ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(i) + 1)));
        tokens[i] = random_lowercase(tokens[i].size(), rng);
    }
    return join_words(tokens);
}

/// Character-level noise: k = round(fraction * |prompt|) random lowercase
/// letters, attached as a block (prepend/append) or inserted one by one at
/// uniform positions.
inline std::string apply_affix(const std::string& prompt, double fraction, std::uint64_t seed,
                               PerturbKind kind) {
    if (fraction < 0.0) throw std::invalid_argument("apply_affix: negative fraction");
    if (kind != PerturbKind::Prepend && kind != PerturbKind::Append && kind != PerturbKind::Insert)
        throw std::invalid_argument("apply_affix: kind must be PREPEND, APPEND or INSERT");
    const std::size_t k = fraction_to_count(fraction, prompt.size());
    std::mt19937_64 rng(seed);
    const std::string noise = random_lowercase(k, rng);
    if (kind == PerturbKind::Prepend) return noise + prompt;
    if (kind == PerturbKind::Append) return prompt + noise;
    std::string out = prompt;
    for (char c : noise) {
        std::uniform_int_distribution<std::size_t> pos(0, out.size());
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos(rng)), c);
    }
    return out;
}

/// Insert the first k of the given sentences at seeded sentence-boundary
/// positions (after '.', '!' or '?', or at the ends). Original text is
/// preserved verbatim around the insertions.
inline std::string insert_sentences(const std::string& prompt,
                                    const std::vector<std::string>& sentences, std::size_t k,
                                    std::uint64_t position_seed) {
    if (k > sentences.size())
        throw std::invalid_argument("insert_sentences: k exceeds available sentences");
    std::vector<std::size_t> boundaries{0};
    for (std::size_t i = 0; i < prompt.size(); ++i)
        if (prompt[i] == '.' || prompt[i] == '!' || prompt[i] == '?')
            boundaries.push_back(i + 1);
    if (boundaries.back() != prompt.size()) boundaries.push_back(prompt.size());

    std::mt19937_64 rng(position_seed);
    // Insert back to front so earlier offsets stay valid.
    std::vector<std::pair<std::size_t, std::size_t>> inserts;  // (offset, sentence idx)
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(0, boundaries.size() - 1);
        inserts.emplace_back(boundaries[pick(rng)], i);
    }
    std::stable_sort(inserts.begin(), inserts.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::string out = prompt;
    for (const auto& [offset, idx] : inserts) out.insert(offset, " " + sentences[idx] + " ");
    return out;
}

}  // namespace prc
