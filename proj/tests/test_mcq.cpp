#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "prc/mcq.hpp"

using namespace prc;
namespace fs = std::filesystem;

namespace {

std::vector<McqItem> tiny_items(std::size_t n) {
    std::vector<McqItem> items;
    for (std::size_t i = 0; i < n; ++i) {
        McqItem item;
        item.id = "q" + std::to_string(i);
        item.context = "patient context number " + std::to_string(i) + " with extra words";
        item.question = "Which option is correct?";
        item.options = {{"A", "first"}, {"B", "second"}, {"C", "third"}, {"D", "fourth"}};
        item.answer_key = "B";
        items.push_back(std::move(item));
    }
    return items;
}

/// Mock that always answers the key letter, regardless of prompt.
class KeyedBackend : public Backend {
public:
    explicit KeyedBackend(std::string reply) : reply_(std::move(reply)) {}
    std::string id() const override { return "mock"; }
    std::vector<ResponseRecord> sample_responses(const ChatRequest& req) override {
        std::vector<ResponseRecord> out(static_cast<std::size_t>(req.n_samples));
        for (auto& r : out) r.text = reply_;
        return out;
    }
    EmbeddingMatrix embed(const std::vector<std::string>&) override { return EmbeddingMatrix{}; }

private:
    std::string reply_;
};

}  // namespace

TEST_CASE("mcq jsonl loading") {
    const auto path = (fs::temp_directory_path() / "prc_mcq_test.jsonl").string();

    SUBCASE("empty file loads to empty list") {
        std::ofstream(path) << "";
        CHECK(load_mcq(path).empty());
    }
    SUBCASE("round trip is the identity") {
        const auto items = tiny_items(4);
        write_mcq(path, items);
        const auto back = load_mcq(path);
        REQUIRE(back.size() == items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            CHECK(back[i].id == items[i].id);
            CHECK(back[i].context == items[i].context);
            CHECK(back[i].options == items[i].options);
            CHECK(back[i].answer_key == items[i].answer_key);
        }
    }
    SUBCASE("answer key outside the options is a schema error") {
        std::ofstream(path) << R"({"id":"q0","context":"c","question":"q",)"
                            << R"("options":{"A":"x","B":"y"},"answer":"Z"})" << "\n";
        CHECK_THROWS(load_mcq(path));
    }
    SUBCASE("permissive mode skips malformed lines and reports them") {
        std::ofstream out(path);
        out << "not json\n";
        out << R"({"id":"q0","context":"c","question":"q","options":{"A":"x","B":"y"},"answer":"A"})"
            << "\n";
        out.close();
        std::vector<std::string> issues;
        const auto items = load_mcq(path, true, &issues);
        CHECK(items.size() == 1);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].find(":1:") != std::string::npos);  // line number reported
    }
    SUBCASE("missing file") { CHECK_THROWS(load_mcq("/nonexistent/file.jsonl")); }
}

TEST_CASE("prompt building") {
    const auto item = tiny_items(1).front();

    const std::string prompt = build_prompt(item, item.context);
    CHECK(prompt.find(item.context) != std::string::npos);
    CHECK(prompt.find(item.question) != std::string::npos);
    CHECK(prompt.find("A) first") != std::string::npos);
    CHECK(prompt.find("D) fourth") != std::string::npos);
    // Options render in letter order.
    CHECK(prompt.find("A) first") < prompt.find("B) second"));
    CHECK(prompt.find("B) second") < prompt.find("C) third"));

    SUBCASE("masked context replaces the clean one") {
        const std::string masked = build_prompt(item, "xxx yyy");
        CHECK(masked.find("xxx yyy") != std::string::npos);
        CHECK(masked.find(item.context) == std::string::npos);
        // Question and options are untouched by masking.
        CHECK(masked.find(item.question) != std::string::npos);
        CHECK(masked.find("A) first") != std::string::npos);
    }
    SUBCASE("fraction-zero mask equals the clean prompt") {
        const auto plan = build_plan(tokenize_words(item.context).size(), {0.0}, 3,
                                     PerturbKind::Mask);
        CHECK(build_prompt(item, apply_mask(item.context, plan, 0.0)) == prompt);
    }
}

TEST_CASE("choice parsing") {
    const std::map<std::string, std::string> options{
        {"A", "x"}, {"B", "y"}, {"C", "z"}, {"D", "w"}};
    CHECK(parse_choice("The answer is B.", options) == "B");
    CHECK(parse_choice("b) because of the context", options) == "B");
    CHECK(parse_choice("(C)", options) == "C");
    CHECK(parse_choice("D", options) == "D");
    CHECK(parse_choice("unsure", options) == kNoChoice);
    CHECK(parse_choice("", options) == kNoChoice);
    // First standalone letter wins.
    CHECK(parse_choice("A or B, hard to say", options) == "A");
    // Letters embedded in words do not count.
    CHECK(parse_choice("maybe brackets abound", options) == kNoChoice);
}

TEST_CASE("run_mcq on mock backends") {
    const auto items = tiny_items(5);
    McqRunConfig cfg;
    cfg.fractions = {0.0, 0.5};
    cfg.seeds = {1, 2};
    cfg.n_samples = 20;

    SUBCASE("always-correct mock: accuracy 1, zero entropy") {
        KeyedBackend backend("The answer is B.");
        const auto results = run_mcq(items, cfg, backend);
        CHECK(results.rows.size() == items.size() * cfg.fractions.size() * cfg.seeds.size() *
                                         static_cast<std::size_t>(cfg.n_samples));
        for (const auto& cell : results.cells) {
            CHECK(cell.accuracy == 1.0);
            CHECK(cell.cond_entropy_bits == 0.0);
        }
    }
    SUBCASE("uniform mock approaches 1/4 accuracy and 2 bits") {
        MockSpec spec;
        spec.fallback = {{{"A", 0.25}, {"B", 0.25}, {"C", 0.25}, {"D", 0.25}}};
        MockBackend backend(spec);
        McqRunConfig big = cfg;
        big.fractions = {0.0};
        big.seeds = {7};
        big.n_samples = 100;
        const auto results = run_mcq(tiny_items(20), big, backend);
        REQUIRE(results.cells.size() == 1);
        CHECK(std::abs(results.cells[0].accuracy - 0.25) < 0.05);
        CHECK(std::abs(results.cells[0].cond_entropy_bits - 2.0) < 0.1);
    }
    SUBCASE("deterministic mock: identical outcomes across seeds at fraction 0") {
        KeyedBackend backend("A");
        McqRunConfig fixed = cfg;
        fixed.fractions = {0.0};
        const auto results = run_mcq(items, fixed, backend);
        REQUIRE(results.cells.size() == 2);
        CHECK(results.cells[0].accuracy == results.cells[1].accuracy);
        CHECK(results.cells[0].cond_entropy_bits == results.cells[1].cond_entropy_bits);
    }
}
