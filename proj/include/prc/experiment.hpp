#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prc/concept_json.hpp"
#include "prc/concept_model.hpp"
#include "prc/gateway.hpp"
#include "prc/mcq.hpp"
#include "prc/mdp.hpp"
#include "prc/metrics.hpp"
#include "prc/perturb.hpp"

namespace prc {

/// Fixed-format double rendering so emitted CSV files are byte-stable
/// across runs.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct RunConfig {
    std::string kind;  // concept|dispersion|pe|noise|mcq|compose|insert|mdp
    nlohmann::json raw;

    static RunConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config " + path.string());
        RunConfig cfg;
        cfg.raw = nlohmann::json::parse(in);
        cfg.kind = cfg.raw.at("kind").get<std::string>();
        return cfg;
    }

    static RunConfig from_json(nlohmann::json j) {
        RunConfig cfg;
        cfg.kind = j.at("kind").get<std::string>();
        cfg.raw = std::move(j);
        return cfg;
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        return raw.value(key, fallback);
    }
    template <typename T>
    T require(const std::string& key) const {
        if (!raw.contains(key))
            throw std::runtime_error("config for kind '" + kind + "' needs field '" + key + "'");
        return raw[key].get<T>();
    }
};

/// Ordered prompt list, one per line, increasing informativeness. Compose
/// mode additionally requires near-equal word counts (tolerance 2).
inline std::vector<std::string> ladder(const std::filesystem::path& prompt_file,
                                       bool compose_mode = false, std::size_t tolerance = 2) {
    std::ifstream in(prompt_file);
    if (!in) throw std::runtime_error("cannot open prompt file " + prompt_file.string());
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) prompts.push_back(line);
    if (prompts.empty()) throw std::runtime_error("prompt file is empty: " + prompt_file.string());
    if (compose_mode) {
        const std::size_t base = tokenize_words(prompts.front()).size();
        for (const auto& p : prompts) {
            const std::size_t n = tokenize_words(p).size();
            const std::size_t diff = n > base ? n - base : base - n;
            if (diff > tolerance)
                throw std::runtime_error("compose ladder: token count " + std::to_string(n) +
                                         " deviates from " + std::to_string(base) +
                                         " by more than " + std::to_string(tolerance));
        }
    }
    return prompts;
}

class ExperimentRunner {
public:
    ExperimentRunner(RunConfig config, std::shared_ptr<Backend> backend)
        : config_(std::move(config)), backend_(std::move(backend)) {}

    /// Execute the configured pipeline into a fresh run directory. Returns
    /// the directory; on failure a partial-results marker is left behind
    /// and the error rethrown.
    std::filesystem::path run(const std::string& label = {}) {
        const auto dir = make_run_dir(label);
        std::ofstream(dir / "config.json") << config_.raw.dump(2) << '\n';
        try {
            dispatch(dir);
        } catch (...) {
            std::ofstream(dir / "PARTIAL") << "run aborted before all conditions completed\n";
            throw;
        }
        return dir;
    }

    /// Runs the pipeline into an existing directory (used by tests that
    /// need a fixed location).
    void run_into(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "config.json") << config_.raw.dump(2) << '\n';
        dispatch(dir);
    }

private:
    std::filesystem::path make_run_dir(const std::string& label) {
        const auto root = std::filesystem::path(config_.get<std::string>("output_dir", "runs"));
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&t));
        std::string name = stamp;
        if (!label.empty()) name += "-" + label;
        auto dir = root / name;
        for (int i = 1; std::filesystem::exists(dir); ++i)
            dir = root / (name + "-" + std::to_string(i));  // never overwrite a run
        std::filesystem::create_directories(dir);
        return dir;
    }

    std::shared_ptr<Backend> gateway(const std::filesystem::path& run_dir) {
        const std::string cache =
            config_.get<std::string>("cache_dir", (run_dir / "raw").string());
        return std::make_shared<CachedBackend>(backend_, cache);
    }

    void dispatch(const std::filesystem::path& dir) {
        if (config_.kind == "concept") run_concept(dir);
        else if (config_.kind == "dispersion") run_dispersion(dir, false);
        else if (config_.kind == "compose") run_dispersion(dir, true);
        else if (config_.kind == "pe") run_pe(dir);
        else if (config_.kind == "noise") run_noise(dir);
        else if (config_.kind == "insert") run_insert(dir);
        else if (config_.kind == "mcq") run_mcq_kind(dir);
        else if (config_.kind == "mdp") run_mdp_kind(dir);
        else throw std::runtime_error("unknown experiment kind: " + config_.kind);
    }

    std::vector<std::uint64_t> seeds() const {
        auto s = config_.get<std::vector<std::uint64_t>>("seeds", {0});
        if (s.empty()) throw std::runtime_error("seeds must be nonempty");
        return s;
    }

    void write_metrics(const std::filesystem::path& dir, const std::string& csv) {
        std::ofstream(dir / "metrics.csv") << csv;
    }

    void write_summary(const std::filesystem::path& dir, const nlohmann::json& j) {
        std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
    }

    /// Mean and CI95 over per-seed values; a single seed yields a
    /// zero-width interval.
    static nlohmann::json ci_json(const std::vector<double>& values) {
        if (values.size() >= 2) {
            const auto ci = mean_ci95(values);
            return {{"mean", ci.mean}, {"ci95_half_width", ci.half_width}, {"n", values.size()}};
        }
        return {{"mean", values.empty() ? 0.0 : values.front()},
                {"ci95_half_width", 0.0},
                {"n", values.size()}};
    }

    // ---- pipelines ----

    void run_concept(const std::filesystem::path& dir) {
        std::ifstream in(config_.require<std::string>("space_file"));
        if (!in) throw std::runtime_error("cannot open space_file");
        const auto model = concept_model_from_json(nlohmann::json::parse(in));
        const std::uint64_t seed = config_.get<std::uint64_t>("trajectory_seed", 0);

        std::ostringstream csv;
        csv << "concept,z,t,x,entropy_bits\n";
        double max_final = 0.0;
        for (const auto& c : model.space.concepts())
            for (const auto& [z, pz] : c.output_dist.table()) {
                const auto traj = entropy_trajectory(model.space, c.id, z, seed);
                for (const auto& pt : traj)
                    csv << c.id << ',' << z << ',' << pt.t << ',' << pt.x << ','
                        << fmt_double(pt.entropy) << '\n';
                max_final = std::max(max_final, traj.back().entropy);
            }
        write_metrics(dir, csv.str());
        write_summary(dir, {{"kind", "concept"}, {"max_final_entropy_bits", max_final}});
    }

    void run_dispersion(const std::filesystem::path& dir, bool compose) {
        const auto prompts = ladder(config_.require<std::string>("prompt_file"), compose);
        auto gw = gateway(dir);
        const int n = config_.get<int>("n_samples", 100);
        const bool l2 = config_.get<bool>("l2_normalize", false);

        std::ostringstream csv;
        csv << "prompt_idx,tokens,seed,total_std\n";
        nlohmann::json per_prompt = nlohmann::json::array();
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            std::vector<double> vals;
            for (std::uint64_t seed : seeds()) {
                ChatRequest req;
                req.model = config_.get<std::string>("model", "mock");
                req.user_messages = {prompts[i]};
                req.n_samples = n;
                req.seed = seed;
                const auto records = gw->sample_responses(req);
                std::vector<std::string> texts;
                for (const auto& r : records) texts.push_back(r.text);
                const double m = total_std(gw->embed(texts), l2);
                vals.push_back(m);
                csv << i << ',' << tokenize_words(prompts[i]).size() << ',' << seed << ','
                    << fmt_double(m) << '\n';
            }
            auto j = ci_json(vals);
            j["prompt_idx"] = i;
            per_prompt.push_back(j);
        }
        write_metrics(dir, csv.str());
        write_summary(dir, {{"kind", compose ? "compose" : "dispersion"}, {"total_std", per_prompt}});
    }

    void run_pe(const std::filesystem::path& dir) {
        const auto prompts = ladder(config_.require<std::string>("prompt_file"));
        auto gw = gateway(dir);
        const int n = config_.get<int>("n_samples", 100);

        std::ostringstream csv;
        csv << "prompt_idx,seed,pe_bits\n";
        nlohmann::json per_prompt = nlohmann::json::array();
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            std::vector<double> vals;
            for (std::uint64_t seed : seeds()) {
                ChatRequest req;
                req.model = config_.get<std::string>("model", "mock");
                req.user_messages = {prompts[i]};
                req.n_samples = n;
                req.want_logprobs = true;
                req.seed = seed;
                // predictive_entropy fails loudly when the backend cannot
                // report sequence logprobs; no approximation here.
                const double pe = predictive_entropy(gw->sample_responses(req));
                vals.push_back(pe);
                csv << i << ',' << seed << ',' << fmt_double(pe) << '\n';
            }
            auto j = ci_json(vals);
            j["prompt_idx"] = i;
            per_prompt.push_back(j);
        }
        write_metrics(dir, csv.str());
        write_summary(dir, {{"kind", "pe"}, {"pe_bits", per_prompt}});
    }

    void run_noise(const std::filesystem::path& dir) {
        const auto prompts = ladder(config_.require<std::string>("prompt_file"));
        const std::string& prompt = prompts.front();
        const auto kind = perturb_kind_from_string(config_.get<std::string>("noise_kind", "MASK"));
        const auto fractions = config_.require<std::vector<double>>("fractions");
        auto gw = gateway(dir);
        const int n = config_.get<int>("n_samples", 100);
        const bool l2 = config_.get<bool>("l2_normalize", false);

        std::ostringstream csv;
        csv << "noise_kind,fraction,seed,total_std\n";
        std::map<double, std::vector<double>> by_fraction;
        for (std::uint64_t seed : seeds()) {
            const bool word_level = kind == PerturbKind::Mask || kind == PerturbKind::Corrupt;
            PerturbationPlan plan = word_level
                                        ? build_plan(tokenize_words(prompt).size(), fractions, seed, kind)
                                        : build_plan(0, {}, seed, kind);
            if (word_level) std::ofstream(dir / ("plan-" + std::to_string(seed) + ".json"))
                << plan.to_json().dump(2) << '\n';
            for (double f : fractions) {
                std::string noisy;
                switch (kind) {
                    case PerturbKind::Mask: noisy = apply_mask(prompt, plan, f); break;
                    case PerturbKind::Corrupt: noisy = apply_corrupt(prompt, plan, f); break;
                    default: noisy = apply_affix(prompt, f, seed, kind); break;
                }
                ChatRequest req;
                req.model = config_.get<std::string>("model", "mock");
                req.user_messages = {noisy};
                req.n_samples = n;
                req.seed = seed;
                const auto records = gw->sample_responses(req);
                std::vector<std::string> texts;
                for (const auto& r : records) texts.push_back(r.text);
                const double m = total_std(gw->embed(texts), l2);
                by_fraction[f].push_back(m);
                csv << to_string(kind) << ',' << fmt_double(f) << ',' << seed << ','
                    << fmt_double(m) << '\n';
            }
        }
        write_metrics(dir, csv.str());
        nlohmann::json per_fraction = nlohmann::json::array();
        for (const auto& [f, vals] : by_fraction) {
            auto j = ci_json(vals);
            j["fraction"] = f;
            per_fraction.push_back(j);
        }
        write_summary(dir, {{"kind", "noise"}, {"total_std", per_fraction}});
    }

    void run_insert(const std::filesystem::path& dir) {
        const auto prompts = ladder(config_.require<std::string>("prompt_file"));
        const std::string& prompt = prompts.front();
        std::ifstream sin(config_.require<std::string>("sentences_file"));
        if (!sin) throw std::runtime_error("cannot open sentences_file");
        std::vector<std::string> sentences;
        std::string line;
        while (std::getline(sin, line))
            if (!line.empty()) sentences.push_back(line);
        const auto k_values = config_.require<std::vector<std::size_t>>("k_values");
        auto gw = gateway(dir);
        const int n = config_.get<int>("n_samples", 100);
        const bool l2 = config_.get<bool>("l2_normalize", false);

        std::ostringstream csv;
        csv << "k,seed,total_std\n";
        std::map<std::size_t, std::vector<double>> by_k;
        for (std::uint64_t seed : seeds())
            for (std::size_t k : k_values) {
                const std::string noisy = insert_sentences(prompt, sentences, k, seed);
                ChatRequest req;
                req.model = config_.get<std::string>("model", "mock");
                req.user_messages = {noisy};
                req.n_samples = n;
                req.seed = seed;
                const auto records = gw->sample_responses(req);
                std::vector<std::string> texts;
                for (const auto& r : records) texts.push_back(r.text);
                const double m = total_std(gw->embed(texts), l2);
                by_k[k].push_back(m);
                csv << k << ',' << seed << ',' << fmt_double(m) << '\n';
            }
        write_metrics(dir, csv.str());
        nlohmann::json per_k = nlohmann::json::array();
        for (const auto& [k, vals] : by_k) {
            auto j = ci_json(vals);
            j["k"] = k;
            per_k.push_back(j);
        }
        write_summary(dir, {{"kind", "insert"}, {"total_std", per_k}});
    }

    void run_mcq_kind(const std::filesystem::path& dir) {
        const auto items = load_mcq(config_.require<std::string>("mcq_file"),
                                    config_.get<bool>("permissive", false));
        McqRunConfig mc;
        mc.fractions = config_.get<std::vector<double>>("fractions", {0.0});
        mc.seeds = seeds();
        mc.n_samples = config_.get<int>("n_samples", 100);
        mc.model = config_.get<std::string>("model", "mock");
        mc.template_text = config_.get<std::string>("template", kDefaultMcqTemplate);
        mc.noise_kind = perturb_kind_from_string(config_.get<std::string>("noise_kind", "MASK"));
        auto gw = gateway(dir);
        const auto results = prc::run_mcq(items, mc, *gw);

        std::ostringstream outcomes;
        outcomes << "model,fraction,seed,question_id,sample_idx,chosen,correct\n";
        for (const auto& r : results.rows)
            outcomes << mc.model << ',' << fmt_double(r.fraction) << ',' << r.seed << ','
                     << r.question_id << ',' << r.sample_idx << ',' << r.chosen << ','
                     << r.correct_key << '\n';
        std::ofstream(dir / "outcomes.csv") << outcomes.str();

        std::ostringstream csv;
        csv << "model,fraction,seed,accuracy,cond_entropy_bits\n";
        for (const auto& c : results.cells)
            csv << mc.model << ',' << fmt_double(c.fraction) << ',' << c.seed << ','
                << fmt_double(c.accuracy) << ',' << fmt_double(c.cond_entropy_bits) << '\n';
        write_metrics(dir, csv.str());

        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : results.cells)
            cells.push_back({{"fraction", c.fraction},
                             {"seed", c.seed},
                             {"accuracy", c.accuracy},
                             {"cond_entropy_bits", c.cond_entropy_bits}});
        write_summary(dir, {{"kind", "mcq"}, {"cells", cells}});
    }

    void run_mdp_kind(const std::filesystem::path& dir) {
        const auto profile_names =
            config_.get<std::vector<std::string>>("profiles", {"UNDER_CONFIDENT", "OVER_CONFIDENT",
                                                               "MYOPIC", "FAR_SIGHTED", "STUBBORN"});
        const std::size_t rounds = config_.get<std::size_t>("rounds", 7);
        const auto schedule = config_.get<std::vector<std::string>>(
            "schedule",
            {"Keep your long-term recovery in focus; this therapy is proven effective."});
        const std::size_t n_states = config_.get<std::size_t>("n_states", 10);
        UpdateDeltas deltas;
        deltas.gamma = config_.get<double>("delta_gamma", 0.05);
        deltas.p = config_.get<double>("delta_p", 0.05);
        deltas.d = config_.get<double>("delta_d", 0.05);

        std::filesystem::create_directories(dir / "transcripts");
        std::ostringstream csv;
        csv << "profile,round,gamma,p,d,pt_state_count\n";
        for (const auto& name : profile_names) {
            auto profile = PatientProfile::standard(patient_type_from_string(name), n_states);
            profile.initial.pt_cost = config_.get<double>("pt_cost", 0.05);
            profile.initial.completion_reward = config_.get<double>("completion_reward", 1.0);
            const auto transcript =
                run_simulation(profile, rounds, scripted_agent(schedule), 0, {}, deltas);
            std::ofstream(dir / "transcripts" / (name + ".json"))
                << to_json(transcript).dump(2) << '\n';
            for (const auto& r : transcript.rounds)
                csv << name << ',' << r.round << ',' << fmt_double(r.params_after.gamma) << ','
                    << fmt_double(r.params_after.p) << ',' << fmt_double(r.params_after.d) << ','
                    << pt_state_count(r.policy_after) << '\n';
        }
        write_metrics(dir, csv.str());
        write_summary(dir, {{"kind", "mdp"}, {"profiles", profile_names}, {"rounds", rounds}});
    }

    RunConfig config_;
    std::shared_ptr<Backend> backend_;
};

}  // namespace prc
