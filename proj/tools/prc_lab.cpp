// prc-lab: config-driven experiment runner.
//
//   prc-lab <kind> --config <file> [--backend mock|http] [--label name]
//
// Kinds: concept, dispersion, pe, noise, mcq, compose, insert, mdp.
// Config schema is documented in the README; credentials come from the
// environment only (OPENAI_API_KEY by default).

#include <CLI11.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>

#include "prc/experiment.hpp"
#include "prc/gateway.hpp"

namespace {

prc::HttpTransport make_httplib_transport(const std::string& base_url,
                                          const std::string& api_key_env) {
    return [base_url, api_key_env](const std::string& path,
                                   const std::string& body) -> std::pair<int, std::string> {
        httplib::Client client(base_url);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (const char* key = std::getenv(api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return {-1, ""};
        return {res->status, res->body};
    };
}

std::shared_ptr<prc::Backend> make_backend(const prc::RunConfig& config,
                                           const std::string& backend_kind) {
    const std::string kind =
        backend_kind.empty() ? config.get<std::string>("backend", "mock") : backend_kind;
    if (kind == "mock") {
        prc::MockSpec spec;
        if (config.raw.contains("mock_spec")) {
            std::ifstream in(config.raw["mock_spec"].get<std::string>());
            if (!in) throw std::runtime_error("cannot open mock_spec file");
            spec = prc::MockSpec::from_json(nlohmann::json::parse(in));
        } else if (config.raw.contains("mock_spec_inline")) {
            spec = prc::MockSpec::from_json(config.raw["mock_spec_inline"]);
        } else {
            throw std::runtime_error("mock backend needs 'mock_spec' or 'mock_spec_inline'");
        }
        return std::make_shared<prc::MockBackend>(std::move(spec));
    }
    if (kind == "http") {
        prc::HttpConfig http;
        http.base_url = config.get<std::string>("base_url", http.base_url);
        http.api_key_env = config.get<std::string>("api_key_env", http.api_key_env);
        http.embedding_model = config.get<std::string>("embedding_model", http.embedding_model);
        http.max_n_per_request = config.get<int>("max_n_per_request", http.max_n_per_request);
        http.max_inflight = config.get<int>("max_inflight", http.max_inflight);
        return std::make_shared<prc::HttpBackend>(
            http, make_httplib_transport(http.base_url, http.api_key_env));
    }
    throw std::runtime_error("unknown backend: " + kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-concept uncertainty lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string backend_kind;
    std::string label;

    const std::vector<std::string> kinds{"concept", "dispersion", "pe",     "noise",
                                         "mcq",     "compose",    "insert", "mdp"};
    for (const auto& kind : kinds) {
        auto* sub = app.add_subcommand(kind, "run a '" + kind + "' experiment");
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--backend", backend_kind, "override backend: mock|http");
        sub->add_option("--label", label, "alias appended to the run directory name");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string kind = app.get_subcommands().front()->get_name();

    try {
        auto config = prc::RunConfig::from_file(config_path);
        if (config.kind != kind)
            throw std::runtime_error("config is for kind '" + config.kind +
                                     "', invoked as '" + kind + "'");
        // concept and mdp pipelines never touch a backend.
        std::shared_ptr<prc::Backend> backend;
        if (kind != "concept" && kind != "mdp") backend = make_backend(config, backend_kind);
        prc::ExperimentRunner runner(std::move(config), std::move(backend));
        const auto dir = runner.run(label);
        std::printf("run complete: %s\n", dir.string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
