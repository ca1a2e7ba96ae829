#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace prc {

/// N response-embedding vectors, one row per response, identical dimension.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    explicit EmbeddingMatrix(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {
        for (const auto& r : rows_) {
            if (r.size() != rows_.front().size())
                throw std::invalid_argument("EmbeddingMatrix: ragged rows");
            for (double v : r)
                if (!std::isfinite(v)) throw std::invalid_argument("EmbeddingMatrix: non-finite entry");
        }
    }

    std::size_t n_rows() const { return rows_.size(); }
    std::size_t dim() const { return rows_.empty() ? 0 : rows_.front().size(); }
    const std::vector<std::vector<double>>& rows() const { return rows_; }

private:
    std::vector<std::vector<double>> rows_;
};

/// One sampled response. seq_logprob is the natural log of the probability
/// of the whole generated sequence, when the backend reports it.
struct ResponseRecord {
    std::string text;
    std::optional<double> seq_logprob;
    std::vector<double> token_logprobs;
};

struct McqOutcome {
    std::string question_id;
    std::string chosen;  // option letter, or "NONE" for unparseable answers
    std::string correct_key;
};

inline constexpr const char* kNoChoice = "NONE";

/// Total standard deviation sqrt(Tr(Sigma)): square root of the summed
/// per-dimension sample variances (N-1 denominator). The covariance matrix
/// is never materialized. Optional L2 normalization of rows first.
inline double total_std(const EmbeddingMatrix& e, bool l2_normalize = false) {
    const std::size_t n = e.n_rows();
    if (n < 2) throw std::invalid_argument("total_std: need at least 2 rows");
    const std::size_t d = e.dim();

    std::vector<std::vector<double>> rows = e.rows();
    if (l2_normalize)
        for (auto& r : rows) {
            double norm = 0.0;
            for (double v : r) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (double& v : r) v /= norm;
        }

    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[j];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : rows) {
            const double dv = r[j] - mean;
            ss += dv * dv;
        }
        trace += ss / static_cast<double>(n - 1);
    }
    return std::sqrt(trace);
}

/// Normalized predictive entropy in bits: -(1/N) * sum_i p_i log2 p_i with
/// p_i the whole-sequence probability of sample i. Duplicates stay as
/// sampled.
inline double predictive_entropy(const std::vector<ResponseRecord>& records) {
    if (records.empty()) throw std::invalid_argument("predictive_entropy: no records");
    double total = 0.0;
    for (const auto& r : records) {
        if (!r.seq_logprob)
            throw std::invalid_argument("predictive_entropy: record lacks seq_logprob");
        const double p = std::exp(*r.seq_logprob);
        if (p > 0.0) total += p * std::log2(p);
    }
    return -total / static_cast<double>(records.size());
}

/// H(Y|X) from parsed MCQ outcomes: uniform p(x) = 1/n_questions, inner
/// distribution from outcome counts, NONE as its own category.
inline double empirical_conditional_entropy(const std::vector<McqOutcome>& outcomes,
                                            std::size_t n_questions) {
    if (n_questions == 0) throw std::invalid_argument("empirical_conditional_entropy: no questions");
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const auto& o : outcomes) counts[o.question_id][o.chosen] += 1;
    if (counts.size() != n_questions)
        throw std::invalid_argument("empirical_conditional_entropy: expected outcomes for " +
                                    std::to_string(n_questions) + " questions, saw " +
                                    std::to_string(counts.size()));

    double h = 0.0;
    for (const auto& [qid, by_choice] : counts) {
        std::size_t total = 0;
        for (const auto& [choice, c] : by_choice) total += c;
        double hq = 0.0;
        for (const auto& [choice, c] : by_choice) {
            const double p = static_cast<double>(c) / static_cast<double>(total);
            hq -= p * std::log2(p);
        }
        h += hq / static_cast<double>(n_questions);
    }
    return h;
}

inline double accuracy(const std::vector<McqOutcome>& outcomes) {
    if (outcomes.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& o : outcomes)
        if (o.chosen != kNoChoice && o.chosen == o.correct_key) ++correct;
    return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

struct MeanCi {
    double mean;
    double half_width;  // 1.96 * sd / sqrt(n)
};

inline MeanCi mean_ci95(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("mean_ci95: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n))};
}

}  // namespace prc
