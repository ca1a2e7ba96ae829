#pragma once

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prc/gateway.hpp"
#include "prc/metrics.hpp"
#include "prc/perturb.hpp"

namespace prc {

struct McqItem {
    std::string id;
    std::string context;
    std::string question;
    std::map<std::string, std::string> options;  // letter -> text
    std::string answer_key;

    void validate() const {
        if (options.size() < 2) throw std::invalid_argument("McqItem " + id + ": need >= 2 options");
        if (!options.count(answer_key))
            throw std::invalid_argument("McqItem " + id + ": answer key '" + answer_key +
                                        "' not among options");
    }
};

/// JSON-lines loader: one object per question with fields
/// (id, context, question, options, answer). Malformed lines abort unless
/// permissive, in which case they are reported with line numbers and
/// skipped.
inline std::vector<McqItem> load_mcq(const std::string& path, bool permissive = false,
                                     std::vector<std::string>* issues = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_mcq: cannot open " + path);
    std::vector<McqItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            McqItem item;
            item.id = j.at("id").get<std::string>();
            item.context = j.at("context").get<std::string>();
            item.question = j.at("question").get<std::string>();
            item.options = j.at("options").get<std::map<std::string, std::string>>();
            item.answer_key = j.at("answer").get<std::string>();
            item.validate();
            items.push_back(std::move(item));
        } catch (const std::exception& e) {
            const std::string msg = path + ":" + std::to_string(line_no) + ": " + e.what();
            if (!permissive) throw std::runtime_error(msg);
            if (issues) issues->push_back(msg);
        }
    }
    return items;
}

inline void write_mcq(const std::string& path, const std::vector<McqItem>& items) {
    std::ofstream out(path);
    for (const auto& item : items) {
        nlohmann::json j;
        j["id"] = item.id;
        j["context"] = item.context;
        j["question"] = item.question;
        j["options"] = item.options;
        j["answer"] = item.answer_key;
        out << j.dump() << '\n';
    }
}

inline constexpr const char* kDefaultMcqTemplate =
    "Context: {context}\n"
    "Question: {question}\n"
    "Options:\n{options}\n"
    "Answer with the single letter of the correct option.";

/// Render the user message: masked context, the untouched question, options
/// in letter order, and the answer instruction. The template text is part
/// of the recorded run configuration.
inline std::string build_prompt(const McqItem& item, const std::string& masked_context,
                                const std::string& template_text = kDefaultMcqTemplate) {
    std::string options_block;
    for (const auto& [letter, text] : item.options)
        options_block += letter + ") " + text + "\n";
    if (!options_block.empty()) options_block.pop_back();

    std::string out = template_text;
    auto replace = [&out](const std::string& slot, const std::string& value) {
        const auto pos = out.find(slot);
        if (pos != std::string::npos) out.replace(pos, slot.size(), value);
    };
    replace("{context}", masked_context);
    replace("{question}", item.question);
    replace("{options}", options_block);
    return out;
}

/// First standalone option letter in the response: word-boundary match,
/// case-insensitive, accepting bare "A", "(A)", "A." and "A)" forms.
inline std::string parse_choice(const std::string& text,
                                const std::map<std::string, std::string>& options) {
    auto is_boundary = [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool left_ok = i == 0 || is_boundary(text[i - 1]);
        if (!left_ok) continue;
        const bool right_ok = i + 1 == text.size() || is_boundary(text[i + 1]);
        if (!right_ok) continue;
        std::string letter(1, static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
        if (options.count(letter)) return letter;
    }
    return kNoChoice;
}

struct McqRunConfig {
    std::vector<double> fractions{0.0};
    std::vector<std::uint64_t> seeds{0};
    int n_samples = 100;
    std::string model = "mock";
    std::string template_text = kDefaultMcqTemplate;
    double temperature = 1.0;
    PerturbKind noise_kind = PerturbKind::Mask;
};

struct McqCell {
    double fraction;
    std::uint64_t seed;
    std::vector<McqOutcome> outcomes;  // one per (question, sample)
    double accuracy;
    double cond_entropy_bits;
};

struct McqRow {
    std::string question_id;
    double fraction;
    std::uint64_t seed;
    int sample_idx;
    std::string chosen;
    std::string correct_key;
};

struct McqResults {
    std::vector<McqRow> rows;
    std::vector<McqCell> cells;
};

/// Full pipeline: mask each item's context with a shared nested plan,
/// sample n responses per question, parse letters, aggregate accuracy and
/// H(Y|X) per (fraction, seed). Masking never touches the question,
/// options, or instruction.
inline McqResults run_mcq(const std::vector<McqItem>& items, const McqRunConfig& cfg,
                          Backend& backend) {
    McqResults results;
    for (std::uint64_t seed : cfg.seeds) {
        // One plan per (item, seed); nested across all fractions.
        std::vector<PerturbationPlan> plans;
        for (const auto& item : items)
            plans.push_back(build_plan(tokenize_words(item.context).size(), cfg.fractions, seed,
                                       cfg.noise_kind));
        for (double fraction : cfg.fractions) {
            McqCell cell{fraction, seed, {}, 0.0, 0.0};
            for (std::size_t q = 0; q < items.size(); ++q) {
                const auto& item = items[q];
                const std::string masked =
                    cfg.noise_kind == PerturbKind::Corrupt
                        ? apply_corrupt(item.context, plans[q], fraction)
                        : apply_mask(item.context, plans[q], fraction);
                ChatRequest req;
                req.model = cfg.model;
                req.user_messages = {build_prompt(item, masked, cfg.template_text)};
                req.temperature = cfg.temperature;
                req.n_samples = cfg.n_samples;
                req.seed = seed;
                const auto records = backend.sample_responses(req);
                for (std::size_t i = 0; i < records.size(); ++i) {
                    const std::string chosen = parse_choice(records[i].text, item.options);
                    cell.outcomes.push_back({item.id, chosen, item.answer_key});
                    results.rows.push_back({item.id, fraction, seed, static_cast<int>(i), chosen,
                                            item.answer_key});
                }
            }
            cell.accuracy = accuracy(cell.outcomes);
            cell.cond_entropy_bits = empirical_conditional_entropy(cell.outcomes, items.size());
            results.cells.push_back(std::move(cell));
        }
    }
    return results;
}

}  // namespace prc
