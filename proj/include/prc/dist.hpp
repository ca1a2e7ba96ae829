#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace prc {

/// Finite probability distribution over string-identified outcomes.
/// Entries are kept in a sorted map so iteration order is deterministic.
class Dist {
public:
    using Table = std::map<std::string, double>;

    Dist() = default;
    explicit Dist(Table mass) : mass_(std::move(mass)) { validate(); }

    static Dist point_mass(const std::string& outcome) {
        return Dist(Table{{outcome, 1.0}});
    }

    double at(const std::string& outcome) const {
        auto it = mass_.find(outcome);
        return it == mass_.end() ? 0.0 : it->second;
    }

    const Table& table() const { return mass_; }
    std::size_t size() const { return mass_.size(); }

    bool operator==(const Dist& other) const { return mass_ == other.mass_; }

private:
    void validate() const {
        double total = 0.0;
        for (const auto& [outcome, p] : mass_) {
            if (p < 0.0 || !std::isfinite(p))
                throw std::invalid_argument("Dist: negative or non-finite mass for '" + outcome + "'");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("Dist: probabilities sum to " + std::to_string(total));
    }

    Table mass_;
};

/// Shannon entropy in bits, with 0*log(0) = 0.
inline double entropy_bits(const Dist& d) {
    double h = 0.0;
    for (const auto& [outcome, p] : d.table())
        if (p > 0.0) h -= p * std::log2(p);
    return h < 0.0 ? 0.0 : h;
}

/// Normalize a raw nonnegative weight table into a Dist.
/// Throws if the total mass is zero; callers signal that case upstream.
inline Dist normalize(const Dist::Table& weights) {
    double total = 0.0;
    for (const auto& [outcome, w] : weights) total += w;
    if (total <= 0.0) throw std::invalid_argument("normalize: zero total mass");
    Dist::Table out;
    for (const auto& [outcome, w] : weights)
        if (w > 0.0) out[outcome] = w / total;
    // Keep zero atoms so callers can observe the full support.
    for (const auto& [outcome, w] : weights)
        if (w == 0.0) out[outcome] = 0.0;
    return Dist(out);
}

}  // namespace prc
